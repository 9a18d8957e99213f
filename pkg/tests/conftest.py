from __future__ import annotations

import numpy as np
import pytest

from exitkit import synth, trace


@pytest.fixture(scope="session")
def ds_overconfident():
    # gamma > 1: confidence systematically exceeds accuracy
    return synth.generate(synth.GeneratorConfig(n_samples=50_000, seed=1001, gamma=2.0))


@pytest.fixture(scope="session")
def ds_calibrated():
    return synth.generate(synth.GeneratorConfig(n_samples=50_000, seed=1002, gamma=1.0))


@pytest.fixture(scope="session")
def overconfident_split(ds_overconfident):
    return trace.split(
        ds_overconfident, trace.SplitSpec(validation_fraction=0.10, seed=7)
    )


@pytest.fixture(scope="session")
def ds_small():
    return synth.generate(
        synth.GeneratorConfig(n_samples=400, seed=5, gamma=1.5, n_layers=3, n_classes=5)
    )


@pytest.fixture()
def tiny_dataset():
    rng = np.random.default_rng(99)
    n, layers, classes = 12, 3, 4
    logits = rng.normal(size=(n, layers, classes)).astype(np.float32)
    header = trace.TraceHeader(
        version=1, n_layers=layers, n_classes=classes, layer_costs=(1.0, 2.0, 3.0)
    )
    return trace.TraceDataset(
        header=header,
        ids=np.arange(n, dtype=np.uint64),
        labels=rng.integers(0, classes, size=n).astype(np.uint32),
        logits=logits,
    )
