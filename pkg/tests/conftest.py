from pathlib import Path

import numpy as np
import pytest

from parmix.core import RngStream, Vocab
from parmix.models.neural import MiniNeuralModel, ModelDims
from parmix.models.tabular import tabular_random

GOLDEN = Path(__file__).parent / "golden"

_criteria: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" :: {detail}" if detail else "")
    print(line)
    _criteria.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _criteria:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" :: {detail}" if detail else ""))


@pytest.fixture
def tab33():
    return tabular_random(Vocab(3), 3, 1.0, RngStream(7))


@pytest.fixture
def small_neural():
    vocab = Vocab.with_specials(8)
    dims = ModelDims(d_model=8, n_heads=2, d_ff=12, n_layers=2, max_positions=24)
    return MiniNeuralModel.init(vocab, dims, RngStream(1))


def perturbed(model, scale=0.3, seed=0):
    """Copy of ``model`` with every parameter jittered, so gradients are non-trivial."""
    gen = np.random.default_rng(seed)
    out = model.copy()
    for name, p in out.params.items():
        p += gen.normal(0.0, scale, p.shape).astype(p.dtype)
    return out
