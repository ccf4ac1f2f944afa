from __future__ import annotations

import re
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent

_CRITERION = re.compile(r"test_criterion_(\d+)")


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return REPO / "fixtures"


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return REPO / "configs"


@pytest.fixture(scope="session")
def kernel_path(fixtures_dir: Path) -> Path:
    return fixtures_dir / "kernel_blend.cu"


@pytest.fixture(scope="session")
def kernel_text(kernel_path: Path) -> str:
    return kernel_path.read_text(encoding="utf-8")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per numbered acceptance criterion."""
    verdicts: dict[int, bool] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            match = _CRITERION.search(nodeid)
            if not match:
                continue
            n = int(match.group(1))
            verdicts[n] = verdicts.get(n, True) and outcome == "passed"
    if not verdicts:
        return
    terminalreporter.write_line("")
    for n in sorted(verdicts):
        word = "PASS" if verdicts[n] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {n} {word}")
