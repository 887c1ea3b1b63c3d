import json
import subprocess
import sys
from pathlib import Path

import pytest

from realmsim.attestation import PlatformState
from realmsim.image import platform_key_seed, platform_measurements
from realmsim.orchestrator import make_machine

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture
def machine():
    return make_machine(64)


@pytest.fixture
def platform():
    return PlatformState(platform_key_seed(2024), platform_measurements())


@pytest.fixture
def demo_config_path(tmp_path):
    """Copy of the committed demo config with paths made absolute."""
    with open(FIXTURES / "demo_config.json") as f:
        config = json.load(f)
    config["image_path"] = str(FIXTURES / "demo_image.bundle")
    config["inputs_path"] = str(FIXTURES / "demo_inputs.jsonl")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def run_cli(*args, cwd=REPO_ROOT):
    return subprocess.run(
        [sys.executable, "-m", "realmsim.cli", *args],
        capture_output=True,
        text=False,
        cwd=cwd,
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in report.nodeid and report.when == "call":
                name = report.nodeid.split("::")[-1]
                rows.append((name, outcome.upper()))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in sorted(rows):
        terminalreporter.write_line(f"{outcome:>6}  {name}")
