import pytest

from rpsp_lab import presets
from rpsp_lab.segmentation import SegmentationConfig, segment

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def generated():
    """Segmented preset laws, cached per (preset, payload)."""
    cache = {}

    def get(name: str, payload: int = presets.PAYLOAD):
        key = (name, payload)
        if key not in cache:
            cache[key] = segment(presets.preset(name), SegmentationConfig(payload, presets.SWP_HEADER))
        return cache[key]

    return get


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, checks)`` then assert."""

    def record(number: int, title: str, checks: list[tuple[str, bool]]):
        failed = [name for name, ok in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {number} [{status}] {title} ({len(checks) - len(failed)}/{len(checks)} checks)"
        if failed:
            line += "; failing: " + "; ".join(failed)
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert not failed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
