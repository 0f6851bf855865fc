import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density_matrix
from twophoton import states as St
from twophoton.errors import MatrixError


def bell_rho(name):
    v = St.BELL[name]
    return np.outer(v, v.conj())


def werner_purity(p):
    return p**2 + p * (1 - p) / 2 + (1 - p) ** 2 / 4


@pytest.mark.parametrize("name", list(St.BELL))
def test_bell_states(name):
    rho = bell_rho(name)
    assert St.purity(rho) == pytest.approx(1.0)
    assert St.concurrence(rho) == pytest.approx(1.0, abs=1e-9)
    assert St.singlet_fraction(rho) == pytest.approx(1.0, abs=1e-6)


def test_maximally_mixed():
    rho = np.eye(4) / 4
    assert St.purity(rho) == pytest.approx(0.25)
    assert St.concurrence(rho) == 0.0
    assert St.singlet_fraction(rho) == pytest.approx(0.25, abs=1e-6)


def test_product_state_has_no_concurrence():
    hh = np.zeros((4, 4))
    hh[0, 0] = 1.0
    assert St.concurrence(hh) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1 / 3, 0.9, 1.0])
def test_werner_closed_forms(p):
    rho = St.werner_state(p, "psi+")
    assert St.purity(rho) == pytest.approx(werner_purity(p), abs=1e-12)
    assert St.concurrence(rho) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-9)
    assert St.singlet_fraction(rho) == pytest.approx((1 + 3 * p) / 4, abs=1e-4)


def test_werner_09_values():
    rho = St.werner_state(0.9)
    assert St.purity(rho) == pytest.approx(0.8575)
    assert St.concurrence(rho) == pytest.approx(0.85)
    assert St.singlet_fraction(rho) == pytest.approx(0.925, abs=1e-4)


def test_singlet_fraction_beats_random_unitary_sampling():
    # dense random local-unitary sampling is a lower-bound oracle
    rng = np.random.default_rng(3)
    rho = random_density_matrix(rng, rank=2)
    singlet = St.BELL["psi-"]
    sampled = 0.0
    for angles in rng.uniform(0, 2 * math.pi, (20000, 6)):
        v = St.local_unitary(angles) @ singlet
        sampled = max(sampled, float(np.real(v.conj() @ rho @ v)))
    assert St.singlet_fraction(rho) >= sampled - 1e-12


def test_singlet_fraction_at_least_bell_fidelity():
    rng = np.random.default_rng(11)
    for _ in range(100):
        rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        best = max(St.bell_fidelities(rho).values())
        assert St.singlet_fraction(rho, restarts=8) >= best - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
    u = St.local_unitary(rng.uniform(0, 2 * math.pi, 6))
    rotated = u @ rho @ u.conj().T
    assert St.purity(rotated) == pytest.approx(St.purity(rho), abs=1e-9)
    assert St.concurrence(rotated) == pytest.approx(St.concurrence(rho), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_separable_mixtures_have_zero_concurrence(seed):
    rng = np.random.default_rng(seed)
    rho = np.zeros((4, 4), dtype=complex)
    weights = rng.dirichlet(np.ones(3))
    for w in weights:
        a = rng.normal(size=2) + 1j * rng.normal(size=2)
        b = rng.normal(size=2) + 1j * rng.normal(size=2)
        v = np.kron(a / np.linalg.norm(a), b / np.linalg.norm(b))
        rho += w * np.outer(v, v.conj())
    assert St.concurrence(rho) == pytest.approx(0.0, abs=1e-9)


def test_validation_errors():
    with pytest.raises(MatrixError):
        St.purity(np.eye(3) / 3)
    with pytest.raises(MatrixError):
        St.purity(np.eye(4) / 2)
    bad = np.diag([1.1, -0.1, 0, 0])
    with pytest.raises(MatrixError):
        St.concurrence(bad)
    nonherm = np.eye(4, dtype=complex) / 4
    nonherm[0, 1] = 0.1j
    with pytest.raises(MatrixError):
        St.purity(nonherm)
    with pytest.raises(MatrixError):
        St.singlet_fraction(np.eye(4) / 4, restarts=4)


def test_parse_and_format_round_trip():
    rho = St.werner_state(0.6, "phi-")
    rho[0, 3] += 0.01j
    rho[3, 0] -= 0.01j
    text = St.format_density_matrix(rho)
    np.testing.assert_allclose(St.parse_density_matrix(text), rho, atol=1e-12)


def test_parse_text_format():
    text = """# singlet
    0+0i 0+0i 0+0i 0+0i
    0+0i 0.5+0i -0.5+0i 0+0i
    0+0i -0.5+0i 0.5+0i 0+0i
    0+0i 0+0i 0+0i 0+0i
    """
    rho = St.parse_density_matrix(text)
    assert St.concurrence(rho) == pytest.approx(1.0)
    with pytest.raises(MatrixError):
        St.parse_density_matrix("1+0i 0\n0 1")
    with pytest.raises(MatrixError):
        St.parse_density_matrix("a b c d\n" * 4)
