from __future__ import annotations

import pytest

import forgetbench as fb

BLOB_ARCH = fb.Architecture(kind="mlp", input_shape=(4,), num_classes=4, hidden=(24,))
BLOB_TRAIN = fb.TrainConfig(epochs=25, learning_rate=1e-3, batch_size=32, seed=1, optimizer="adam")


@pytest.fixture(scope="session")
def blobs():
    """4-class separable blobs: the offline oracle dataset."""
    return fb.load_dataset("synthetic-blobs", {"classes": 4, "per_class": 80, "test_per_class": 30})


@pytest.fixture(scope="session")
def blob_model(blobs):
    """A baseline model fit on the blob training pool."""
    model = fb.train(fb.random_init(BLOB_ARCH, 0), blobs.train, BLOB_TRAIN)
    assert fb.evaluate_accuracy(model, blobs.train) >= 0.95
    return model


@pytest.fixture(scope="session")
def blob_split(blobs):
    """Full-class split forgetting class 0."""
    return fb.make_full_class_split(blobs, 0)
