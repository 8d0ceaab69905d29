import time

import numpy as np
import pytest

from hto import attack, traces
from hto import detector as det

FIXTURE_SPLIT_SEED = 1
FIXTURE_TRAIN_FRACTION = 0.8


@pytest.fixture(scope="session")
def fixture_data():
    """The frozen synthetic fixture, split into train and held-out parts."""
    ds = traces.synth_dataset(traces.SynthConfig())
    train, test = traces.split(ds, FIXTURE_TRAIN_FRACTION, FIXTURE_SPLIT_SEED)
    return ds, train, test


@pytest.fixture(scope="session")
def fixture_model(fixture_data):
    """Detector trained on the fixture with the default config; also returns wall time."""
    _, train, _ = fixture_data
    t0 = time.perf_counter()
    params, history = det.train(train, det.ArchitectureSpec(), det.TrainConfig())
    return params, history, time.perf_counter() - t0


@pytest.fixture(scope="session")
def fixture_sync_patch(fixture_data, fixture_model):
    """A sync patch at 1 mW with a short optimization, shared by the unit tests."""
    _, train, _ = fixture_data
    params = fixture_model[0]
    return attack.generate_patch(train, params, attack.PatchBudget(epsilon_mw=1.0, iterations=50))


@pytest.fixture(scope="session")
def small_data():
    cfg = traces.SynthConfig(d=64, n_per_class=40, n_rounds=4, ht_bump_width=8, ht_bump_mw=1.5, seed=3)
    return traces.synth_dataset(cfg, name="small")


@pytest.fixture(scope="session")
def small_arch():
    return det.ArchitectureSpec()


@pytest.fixture(scope="session")
def small_model(small_data):
    params, _ = det.train(small_data, det.ArchitectureSpec(), det.TrainConfig(epochs=15, seed=2))
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
