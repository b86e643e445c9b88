import pytest

from faultforge.perception import gen_synthetic_track

PROBE_SEED = 2024


@pytest.fixture(scope="session")
def probe_images():
    """32 synthetic track frames shared by the degradation suites."""
    return [img for img, _ in gen_synthetic_track(32, PROBE_SEED)]


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; verdicts are printed in the terminal summary."""
    log = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(number: int, ok: bool, detail: str) -> bool:
        log.append((number, ok, detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(lines, key=lambda l: l[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}")
