import pytest

_CRITERIA = []


class CriterionLog:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.detail = ""
        self.passed = False

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  criterion {self.number} ({self.title}): {self.detail}"


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test sets ``detail`` and the outcome comes from the test itself."""
    marker = request.node.get_closest_marker("criterion")
    log = CriterionLog(*marker.args)
    _CRITERIA.append(log)
    yield log


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.get_closest_marker("criterion"):
        for log in _CRITERIA:
            if (log.number, log.title) == item.get_closest_marker("criterion").args:
                log.passed = rep.passed
                print("\n" + log.line())


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for log in sorted(_CRITERIA, key=lambda c: c.number):
            terminalreporter.write_line(log.line())
