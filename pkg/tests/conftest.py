import pytest

_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """record(number, ok, detail): one verdict per check; a criterion passes only if all its checks do."""

    def record(number: int, ok: bool, detail: str = "") -> bool:
        _RESULTS.setdefault(number, []).append((bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        checks = _RESULTS[number]
        ok = all(c[0] for c in checks)
        failed = [d for good, d in checks if not good]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({len(checks) - len(failed)}/{len(checks)} checks)"
        if failed:
            line += ": failing " + "; ".join(failed)
        terminalreporter.write_line(line)
