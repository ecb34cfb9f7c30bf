import numpy as np
import pytest

from tdcnn import _backend
from tdcnn.data import Dataset, SynthConfig, generate_synthetic, prepare_dataset


@pytest.fixture(params=sorted(_backend.available_backends()))
def each_backend(request, monkeypatch):
    """Run a test once per importable backend, swapping the active kernels."""
    backend = _backend.available_backends()[request.param]
    monkeypatch.setattr(_backend, "active", backend)
    return backend


@pytest.fixture
def compiled_and_numpy():
    backends = _backend.available_backends()
    if "compiled" not in backends:
        pytest.skip("compiled extension not built")
    return backends["compiled"], backends["numpy"]


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory) -> Dataset:
    """Sixty preprocessed 32x32 images (balanced), shared across tests."""
    out = tmp_path_factory.mktemp("synth32")
    cfg = SynthConfig(size=(32, 32), healthy_count=30, tumor_count=30, seed=11)
    manifest = generate_synthetic(cfg, out)
    return prepare_dataset(manifest, (32, 32))


def make_dataset(labels, size=(8, 8), subjects=None, seed=0) -> Dataset:
    """Arbitrary-label dataset with deterministic pixel noise."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(len(labels), *size), dtype=np.uint8)
    if subjects is None:
        subjects = [f"s{i:03d}" for i in range(len(labels))]
    return Dataset(images, labels, list(subjects))
