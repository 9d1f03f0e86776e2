import numpy as np
import pytest

from patchpair import Dataset, PhantomSpec, Volume, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def random_patch(rng, n=32):
    """Random non-constant [0, 1) patch."""
    while True:
        p = rng.random((n, n))
        if p.max() > p.min():
            return p


@pytest.fixture
def small_dataset():
    return generate_dataset(PhantomSpec(seed=41, patients=2, slices_per_patient=3, size=64))


def toy_dataset(label, specs):
    """Build a dataset from {patient_id: (S, H, W) array} mappings."""
    return Dataset(label, tuple(Volume(pid, data) for pid, data in specs.items()))
