"""Scenario config, studies, reports and the command-line entry point."""
