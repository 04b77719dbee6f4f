import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from paircon.dataset import EmotionLabel, LabeledDataset, LabeledImage, Role  # noqa: E402


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def random_dataset(rng, counts, role=Role.A, name="toy", prefix="img"):
    images = []
    for label, n in enumerate(counts):
        for k in range(n):
            px = rng.random((48, 48)).astype(np.float32)
            images.append(LabeledImage(px, EmotionLabel(label), f"{prefix}{label}_{k}"))
    return LabeledDataset(tuple(images), role=role, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def glyphs():
    from paircon.synthetic import make_glyph_pair

    return make_glyph_pair(70, 140, seed=3)


_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance.py::test_criterion_" not in item.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _CRITERIA.append((item.name, "PASS" if report.passed else "FAIL", doc, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, doc, detail in sorted(_CRITERIA):
        line = f"{status} {doc}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
