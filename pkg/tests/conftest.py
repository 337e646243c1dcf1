from collections import defaultdict

import pytest

CRITERIA = {
    1: "collision-probability fidelity",
    2: "boosted recovery",
    3: "exact KDE oracle equivalence",
    4: "CKNS unbiasedness",
    5: "CKNS accuracy versus cost",
    6: "spectral pipeline correctness",
    7: "cluster-structure preservation",
    8: "sparsity",
    9: "determinism",
}

_results = defaultdict(list)


@pytest.fixture
def criterion():
    """Record one checked part of an acceptance criterion; returns ``ok``."""
    def record(number: int, part: str, ok: bool, detail: str = "") -> bool:
        _results[number].append((part, bool(ok), detail))
        print(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {part} {detail}")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, name in CRITERIA.items():
        parts = _results.get(number)
        if not parts:
            terminalreporter.write_line(f"criterion {number} ({name}): NOT RUN")
            continue
        ok = all(p[1] for p in parts)
        failed = [p[0] for p in parts if not p[1]]
        detail = f"{len(parts)} checks" if ok else "failed: " + ", ".join(failed)
        terminalreporter.write_line(
            f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed:
        _results[marker.args[0]].append((item.name, False, "raised"))
