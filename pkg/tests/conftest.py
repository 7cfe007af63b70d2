import time

import pytest

_RESULTS: list[tuple[int, str, bool, str]] = []


class CriterionRecorder:
    """Times one acceptance criterion and records its PASS/FAIL line."""

    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.start = time.perf_counter()
        self.checks: list[tuple[str, bool]] = []

    def check(self, label: str, ok: bool):
        self.checks.append((label, bool(ok)))

    def finish(self) -> bool:
        elapsed = time.perf_counter() - self.start
        self.check(f"runtime {elapsed:.1f}s < {self.limit_s:g}s", elapsed < self.limit_s)
        ok = all(passed for _, passed in self.checks)
        failed = [label for label, passed in self.checks if not passed]
        detail = "; ".join(label for label, _ in self.checks) if ok else "failed: " + "; ".join(failed)
        _RESULTS.append((self.number, self.title, ok, detail))
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.title} ({detail})")
        return ok


@pytest.fixture
def criterion():
    recorders = []

    def make(number, title, limit_s):
        rec = CriterionRecorder(number, title, limit_s)
        recorders.append(rec)
        return rec

    yield make
    for rec in recorders:
        if not any(r[0] == rec.number for r in _RESULTS):
            _RESULTS.append((rec.number, rec.title, False, "did not complete"))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {number}: {title} | {detail}")
