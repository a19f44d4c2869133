import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fbmc_mimo.channel import VEH_B, freq_response, sample_channel  # noqa: E402
from fbmc_mimo.pulse import eta_table, make_phydyas_pulse, make_smooth_pr_pulse  # noqa: E402


@pytest.fixture(scope="session")
def phydyas64():
    return make_phydyas_pulse(64, 4)


@pytest.fixture(scope="session")
def etas64(phydyas64):
    return eta_table(phydyas64)


@pytest.fixture(scope="session")
def pr_pulse16():
    return make_smooth_pr_pulse(16)


def random_subcarrier(rng, shape, two_m=128):
    """H, H', H'' at one random subcarrier of a random Veh B channel with the given (n_rx, n_tx)."""
    ch = sample_channel(VEH_B, shape[0], shape[1], two_m * 15e3, rng)
    f = freq_response(ch, two_m)
    m = int(rng.integers(two_m))
    return f.h0[m], f.h1[m], f.h2[m]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
