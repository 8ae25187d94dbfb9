"""Fixed-altitude UAV relay placement over nested segmented propagation models."""

__version__ = "0.1.0"
