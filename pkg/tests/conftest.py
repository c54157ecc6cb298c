import numpy as np
import pytest

from attrslice import synth
from attrslice.bundle import write_bundle


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_bundle_dir(tmp_path):
    bundle = synth.small_bundle(n=8, d=4, grid=2, seed=0)
    root = tmp_path / "bundle"
    write_bundle(bundle, root)
    return root


@pytest.fixture
def two_mode():
    bundle, modes = synth.two_mode_bundle(n=80, seed=5, with_embedding=True)
    return bundle, modes


@pytest.fixture
def biased(tmp_path):
    bundle, spurious = synth.biased_bundle(
        n_spurious=120, n_core=80, seed=11, with_images=True
    )
    root = tmp_path / "biased_bundle"
    write_bundle(bundle, root)
    return root, bundle, spurious
