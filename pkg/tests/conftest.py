import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA: dict[int, tuple[bool, str]] = {}


class CriterionRecorder:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list[str] = []
        self.failures: list[str] = []

    def check(self, ok: bool, detail: str) -> bool:
        self.details.append(("ok   " if ok else "FAIL ") + detail)
        if not ok:
            self.failures.append(detail)
        return ok

    def finish(self) -> None:
        passed = not self.failures
        _CRITERIA[self.number] = (passed, f"{self.title}: " + "; ".join(self.details))
        for line in self.details:
            print(f"  [{self.number}] {line}")
        assert passed, "; ".join(self.failures)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    rec = CriterionRecorder(number, title)
    yield rec
    if rec.number not in _CRITERIA:
        _CRITERIA[rec.number] = (False, f"{title}: did not finish")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        passed, detail = _CRITERIA[num]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {num:2d}  {detail}")
