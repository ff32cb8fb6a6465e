from collections import defaultdict

import pytest

# criterion number -> [(clause, ok, detail)]
_RESULTS: dict[int, list] = defaultdict(list)


@pytest.fixture
def record():
    def add(criterion: int, clause: str, ok: bool, detail: str) -> bool:
        _RESULTS[criterion].append((clause, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {criterion} [{clause}]: {detail}")
        return bool(ok)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_RESULTS):
        rows = _RESULTS[c]
        ok = all(r[1] for r in rows)
        failed = [f"{name} ({detail})" for name, good, detail in rows if not good]
        note = "; ".join(failed) if failed else "; ".join(f"{name} {detail}" for name, _, detail in rows)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {c}: {note}")
