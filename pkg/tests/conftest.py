import time

import pytest

_CRITERIA: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


class Criterion:
    """Collects a label, details and wall time for one acceptance criterion."""

    def __init__(self):
        self.label = ""
        self.details: list[str] = []
        self.start = time.perf_counter()

    def note(self, text: str) -> None:
        self.details.append(text)

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def within(self, seconds: float) -> None:
        t = self.elapsed()
        self.note(f"{t:.2f}s of {seconds:g}s")
        assert t < seconds, f"runtime {t:.2f}s exceeds {seconds:g}s"


@pytest.fixture
def criterion(request):
    c = Criterion()
    yield c
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    _CRITERIA.append((status, c.label or request.node.name, "; ".join(c.details)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {label}  [{detail}]")
