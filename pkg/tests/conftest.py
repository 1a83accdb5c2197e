from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

BUNDLED = Path(str(resources.files("assemblynet") / "examples"))

_acceptance: dict[str, str] = {}


@pytest.fixture
def bundled() -> Path:
    return BUNDLED


def bundled_scenarios() -> list[Path]:
    return sorted(BUNDLED.glob("*.scenario"))


def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key == "criterion":
            if report.when == "call" or report.outcome != "passed":
                # any failing test for a criterion marks the whole criterion failed
                if _acceptance.get(value) != "FAIL":
                    _acceptance[value] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_acceptance, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"{_acceptance[label]}  {label}")
