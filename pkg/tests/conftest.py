import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bimodal_target():
    from ctmc import GaussianMixtureModel

    return GaussianMixtureModel(
        [0.65, 0.35], [[-2.5], [2.5]], variances=[[0.36], [0.36]]
    )


@pytest.fixture
def bimodal_system(bimodal_target):
    from ctmc import GaussianDensity, TemperedSystem

    base = GaussianDensity(bimodal_target.known_mean, bimodal_target.known_cov)
    return TemperedSystem(target=bimodal_target, base=base, log_zeta=0.0)
