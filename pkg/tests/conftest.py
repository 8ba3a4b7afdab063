from pathlib import Path

import numpy as np
import pytest

from intermulti.config import ModelConfig
from intermulti.data import UtteranceSample

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): a numbered acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    name = props.get("acceptance")
    if name is not None:
        _acceptance[name] = ("PASS" if report.passed else "FAIL", props.get("detail", ""))


@pytest.fixture(autouse=True)
def _tag_acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker is not None:
        request.node.user_properties.append(("acceptance", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail) in sorted(_acceptance.items()):
        line = f"ACCEPTANCE {outcome}  {name}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_cfg():
    """Small dims so full-model checks run in seconds."""
    return ModelConfig(d_text=5, d_visual=4, d_acoustic=3, gru_hidden=4, rep_dim=8,
                       compact_dim=16, head_hidden=6, seed=3)


def make_samples(rng, n, dims=(5, 4, 3), max_len=4, task="regression", n_classes=3,
                 fixed_len=None):
    out = []
    for _ in range(n):
        seqs = []
        for d in dims:
            length = fixed_len or int(rng.integers(1, max_len + 1))
            seqs.append(rng.normal(size=(length, d)))
        if task == "regression":
            label = float(np.clip(rng.normal(), -3, 3))
        else:
            label = int(rng.integers(0, n_classes))
        out.append(UtteranceSample(*seqs, label))
    return out
