import numpy as np
import pytest
from hypothesis import strategies as st

from twophoton.fringes import PhotonPairSpec


@pytest.fixture
def pair():
    return PhotonPairSpec.default()


@st.composite
def pairs(draw, max_ratio=100.0):
    """Random valid pair with detuning/bandwidth ratio in [0, max_ratio]."""
    sigma = draw(st.floats(1e11, 1e13))
    ratio = draw(st.floats(0.0, max_ratio))
    w2 = draw(st.floats(1e15, 2e15))
    return PhotonPairSpec(w2 + ratio * sigma, w2, sigma)


def random_density_matrix(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
