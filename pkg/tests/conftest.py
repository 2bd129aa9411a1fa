"""Shared fixtures: synthetic WFDB records and small weight stores."""

import numpy as np
import pytest

from bionas import wfdb
from bionas.compress import Tensor, TensorStore


def make_record(name="synth", fs=360.0, num_samples=2560, channels=1, seed=1234):
    rng = np.random.default_rng(seed)
    samples = [
        rng.integers(-400, 400, size=num_samples).astype(np.int32)
        for _ in range(channels)
    ]
    info = [wfdb.SignalInfo(f"ch{i}", gain=200.0, baseline=0) for i in range(channels)]
    return wfdb.Record(name=name, sampling_rate=fs, channels=info, samples=samples,
                       expected_samples=num_samples)


def make_annotations(symbols, spacing=256, start=10):
    """One annotation per window, using the given symbols in order."""
    return [
        wfdb.Annotation(sample_index=start + i * spacing, code=wfdb.SYMBOL_CODES[s])
        for i, s in enumerate(symbols)
    ]


@pytest.fixture
def record_and_annotations():
    record = make_record(num_samples=100 * 256)
    symbols = (["N"] * 60 + ["V"] * 25 + ["L"] * 15)
    return record, make_annotations(symbols)


def random_store(total=1000, tensors=4, seed=99, prefix="layer"):
    rng = np.random.default_rng(seed)
    sizes = [total // tensors] * tensors
    sizes[-1] += total - sum(sizes)
    return TensorStore(tuple(
        Tensor(f"{prefix}{i}.weight", (n,), rng.standard_normal(n).astype(np.float32))
        for i, n in enumerate(sizes)
    ))
