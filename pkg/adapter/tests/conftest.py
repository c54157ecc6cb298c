import numpy as np
import pytest

import attrslice_adapter as A


@pytest.fixture(scope="session")
def tiny_setup(tmp_path_factory):
    """One small trained model + exported bundle shared across tests."""
    data = A.make_biased_dataset(n=64, size=32, seed=0)
    model = A.train_classifier(data.images, data.labels, epochs=2, seed=0)
    cfg = A.AdapterConfig()
    root = tmp_path_factory.mktemp("bundles") / "tiny"
    A.export_bundle(data, model, cfg, root, include_images=True)
    return data, model, cfg, root
