import numpy as np
import pytest
import torch

torch.set_num_threads(1)

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report_criterion():
    """Record a pass/fail line for the acceptance summary."""
    def report(label: str, passed: bool, detail: str):
        _CRITERIA[label] = (bool(passed), detail)
        print(f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}")
    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA):
        passed, detail = _CRITERIA[label]
        terminalreporter.write_line(f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}")
