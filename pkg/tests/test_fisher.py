import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import pairs
from twophoton import fisher as Fi
from twophoton import fringes as F
from twophoton.errors import DomainError, ModelError, SingularityError
from twophoton.references import ReferenceFringeSet
from twophoton.units import C


def test_qfi_values(pair):
    dw = 2 * math.pi * 177e12
    mono = F.PhotonPairSpec(1.5e15 + dw, 1.5e15, 1e-3)
    assert Fi.quantum_fisher_information(mono) == pytest.approx(1.11212e15**2, rel=1e-5)
    hom = F.PhotonPairSpec(1e15, 1e15, 2e11)
    assert Fi.quantum_fisher_information(hom) == pytest.approx(4 * 2e11**2)
    bandwidth_share = 4 * pair.sigma**2 / Fi.quantum_fisher_information(pair)
    assert bandwidth_share < 1e-4


def test_cfi_limits(pair):
    q = Fi.quantum_fisher_information(pair)
    assert Fi.classical_fisher_information(pair, 0.0) == q
    assert Fi.classical_fisher_information(pair, 1e-6 / pair.detuning()) == pytest.approx(q, rel=1e-9)
    nb = F.PhotonPairSpec(pair.omega1, pair.omega2, 1e3)
    mid = (math.pi / 2) / nb.detuning()
    assert Fi.classical_fisher_information(nb, mid) == pytest.approx(nb.detuning() ** 2, rel=1e-9)
    assert Fi.classical_fisher_information(nb, math.pi / nb.detuning()) < 1e-6 * nb.detuning() ** 2


def test_cfi_matches_finite_difference_oracle(pair):
    # frozen from a central-difference evaluation of dP/dtau and P(1-P)
    frozen = {1e-16: 1.2250403571e30, 3e-16: 1.2250402126e30,
              1.3e-15: 1.2250364149e30, 2e-14: 1.19233861e30}
    for tau, val in frozen.items():
        assert Fi.classical_fisher_information(pair, tau) == pytest.approx(val, rel=1e-7)


@settings(max_examples=100, deadline=None)
@given(pairs(), st.floats(-1e-12, 1e-12))
def test_cfi_never_exceeds_qfi(p, tau):
    assert Fi.classical_fisher_information(p, tau) <= Fi.quantum_fisher_information(p) * (1 + 1e-12)


def test_mixed_sigma_tau(pair):
    assert Fi.mixed_state_sigma_tau(pair, 1.0, 0.0) == pytest.approx(
        1 / math.sqrt(Fi.quantum_fisher_information(pair)))
    opt = (math.pi / 2) / pair.detuning()
    # frozen from sqrt(P(1-P))/|dP/dtau| by central differences
    assert Fi.mixed_state_sigma_tau(pair, 0.898, opt) == pytest.approx(1.00611901e-15, rel=1e-7)
    sigma_x = C * Fi.mixed_state_sigma_tau(pair, 0.898, opt) / math.sqrt(1e4)
    assert sigma_x == pytest.approx(3.01627e-9, rel=1e-5)
    with pytest.raises(SingularityError):
        Fi.mixed_state_sigma_tau(pair, 0.9, 0.0)
    with pytest.raises(DomainError):
        Fi.mixed_state_sigma_tau(pair, 0.0, opt)


def test_mixed_sigma_tau_minimum_at_quarter_period():
    nb = F.PhotonPairSpec(2.3e15, 1.2e15, 1e3)
    period = 2 * math.pi / nb.detuning()
    taus = np.linspace(0.01, 0.49, 4801) * period
    s = Fi.mixed_state_sigma_tau(nb, 0.8, taus)
    assert taus[np.argmin(s)] == pytest.approx(period / 4, rel=1e-3)


def test_mixed_sigma_tau_decreasing_in_epsilon(pair):
    opt = (math.pi / 2) / pair.detuning()
    eps = np.linspace(0.05, 1.0, 40)
    s = [Fi.mixed_state_sigma_tau(pair, e, opt) for e in eps]
    assert np.all(np.diff(s) < 0)


def test_cfi_from_ideal_fringes():
    period = 1701.87e-9
    k = 2 * math.pi / period
    refs = ReferenceFringeSet.ideal(period, 1.0)
    assert Fi.cfi_from_reference_fringes(refs, period / 4) == pytest.approx(k**2, rel=1e-12)
    flat = ReferenceFringeSet.ideal(period, 0.0)
    assert Fi.cfi_from_reference_fringes(flat, period / 4) == 0.0
    with pytest.raises(ModelError):
        Fi.cfi_from_reference_fringes(refs, 0.0)


def test_cfi_refs_match_closed_form(pair):
    nb = F.PhotonPairSpec(pair.omega1, pair.omega2, 1e3)
    period = 2 * math.pi * C / nb.detuning()
    refs = ReferenceFringeSet.ideal(period, 1.0)
    xs = np.linspace(0.05, 0.45, 9) * period
    per_length = Fi.classical_fisher_information(nb, xs / C) / C**2
    np.testing.assert_allclose(Fi.cfi_from_reference_fringes(refs, xs), per_length, rtol=1e-6)


def test_operating_point_resolution():
    refs = ReferenceFringeSet.ideal(1705.9e-9, 0.889)
    info = Fi.cfi_from_reference_fringes(refs, 1705.9e-9 / 4)
    assert 1 / math.sqrt(59000 * info) == pytest.approx(1.26e-9, rel=0.01)


def test_cramer_rao(pair):
    dw = 2 * math.pi * 177e12
    p177 = F.PhotonPairSpec(1.5e15 + dw, 1.5e15, pair.sigma)
    est = Fi.cramer_rao_sigma(Fi.quantum_fisher_information(p177), 59000)
    assert est.sigma_x == pytest.approx(1.109e-9, rel=5e-3)
    assert est.sigma_tau == pytest.approx(3.70e-18, rel=5e-3)
    assert Fi.cramer_rao_sigma(4.0, 1).sigma_tau == 0.5
    a = Fi.cramer_rao_sigma(1e30, 100).sigma_x
    b = Fi.cramer_rao_sigma(1e30, 10000).sigma_x
    assert a / b == pytest.approx(10.0)
    sat = Fi.cramer_rao_sigma(Fi.quantum_fisher_information(p177), 59000, 1.26e-9).saturation
    assert sat == pytest.approx(0.88, abs=0.005)
    with pytest.raises(DomainError):
        Fi.cramer_rao_sigma(0.0, 10)


def test_tiny_delay_no_underflow():
    # tau**2 underflows to zero here while sin(dw tau)**2 does not
    p = F.PhotonPairSpec(1.0001e15, 1e15, 1e11)
    assert Fi.classical_fisher_information(p, 2e-163) == pytest.approx(
        Fi.quantum_fisher_information(p), rel=1e-12)
    hom = F.PhotonPairSpec(1e15, 1e15, 1e11)
    q = Fi.quantum_fisher_information(hom)
    for tau in (9.4e-172, 2e-163):
        assert Fi.classical_fisher_information(hom, tau) == pytest.approx(q, rel=1e-12)
        assert Fi.mixed_state_sigma_tau(hom, 1.0, tau) == pytest.approx(q**-0.5, rel=1e-12)
