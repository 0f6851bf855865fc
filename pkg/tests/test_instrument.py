import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twophoton import instrument as I
from twophoton.errors import DomainError, SingularityError
from twophoton.estimation import fit_sinusoid, visibility_from_fit
from twophoton.units import C

CFG = I.InstrumentConfig()
MID = (math.pi / 2) / CFG.pair.detuning()


def test_same_seed_same_record():
    a = I.simulate_trial(CFG, MID, 1.0, 12345)
    b = I.simulate_trial(CFG, MID, 1.0, 12345)
    assert a == b
    assert I.simulate_trial(CFG, MID, 1.0, 12346) != a


def test_derive_seed_is_stable():
    assert I.derive_seed(0, 0) == I.derive_seed(0, 0)
    assert len({I.derive_seed(7, i) for i in range(1000)}) == 1000
    assert 0 <= I.derive_seed(2**64 - 1, 5) < 2**64


def test_zero_visibility_splits_evenly():
    cfg = replace(CFG, visibility=0.0, pair_rate=4e6)
    rec = I.simulate_trial(cfg, MID, 1.0, 1)
    n = rec.n_pairs
    sd = math.sqrt(n * 0.25 * 0.75)
    for c in rec.counts:
        assert abs(c - n / 4) < 5 * sd


def test_count_conservation():
    cfg = replace(CFG, singles_rates=(2e5, 2e5, 3e5, 3e5))
    rec = I.simulate_trial(cfg, MID, 1.0, 99, loss=I.LossSpec(0.5, 0.5, 20.0))
    assert rec.total == rec.n_pairs + rec.accidentals
    assert all(c >= 0 for c in rec.counts)


def test_channel_frequencies_converge():
    cfg = replace(CFG, pair_rate=1e6, include_envelope=False)
    tau = 0.3 * 2 * math.pi / cfg.pair.detuning()
    rec = I.simulate_trial(cfg, tau, 1.0, 5)
    probs = I.channel_probabilities(cfg, tau)
    n = rec.n_pairs
    for c, p in zip(rec.counts, probs):
        assert abs(c / n - p) < 5 * math.sqrt(p * (1 - p) / n)


def test_channel_probabilities_model():
    cfg = replace(CFG, include_envelope=False)
    phase = cfg.pair.detuning() * MID
    p = I.channel_probabilities(cfg, MID)
    assert p.sum() == pytest.approx(1.0)
    expected = 0.25 * (1 + I.CHANNEL_SIGNS * cfg.visibility * math.cos(phase))
    np.testing.assert_allclose(p, expected, atol=1e-15)


def scan_visibility_fit(eta, seed):
    cfg = replace(CFG, include_envelope=False)
    xs = np.linspace(0, 2 * cfg.fringe_period(), 41)
    recs = I.run_trials(cfg, xs / C, 1.0, seed, loss=I.LossSpec(eta, eta, 0.0))
    counts = np.array([r.counts for r in recs], dtype=float)
    tot = counts.sum(axis=1)
    fit = fit_sinusoid(xs, (counts[:, 1] + counts[:, 2]) / tot, tot)
    return visibility_from_fit(fit)


def test_quantum_visibility_independent_of_loss():
    ref = scan_visibility_fit(1.0, 10)
    for eta, seed in ((0.1, 11), (0.01, 12)):
        v = scan_visibility_fit(eta, seed)
        assert abs(v.value - ref.value) < 3 * math.hypot(v.uncertainty, ref.uncertainty)


def test_loss_models():
    assert I.quantum_visibility_under_loss(0.9, 1000, 0, 0.01) == pytest.approx(0.9)
    assert I.quantum_visibility_under_loss(0.9, 1000, 5, 1.0) == pytest.approx(0.9)
    assert I.quantum_visibility_under_loss(0.9, 1000, 5, 0.1) < 0.9
    with pytest.raises(DomainError):
        I.quantum_visibility_under_loss(0.9, 10, 10, 0.5)
    assert I.classical_visibility_under_loss(0.9, 1.0) == pytest.approx(0.9)
    assert I.classical_visibility_under_loss(1.0, 0.1) == pytest.approx(0.5749595745760689, abs=1e-12)
    assert I.classical_visibility_under_loss(0.9, 0.0) == 0.0


def test_loss_curve_flat_to_10_db():
    c0 = 59000.0
    c_li = 2e-4 * c0
    v = [I.quantum_visibility_under_loss(0.889, c0, c_li, 10 ** (-db / 10)) for db in (0, 10, 30)]
    assert v[1] > 0.99 * v[0]
    assert v[2] < 0.9 * v[0]


def test_loss_spec_validation():
    with pytest.raises(DomainError):
        I.LossSpec(1.2, 1.0)
    with pytest.raises(DomainError):
        I.LossSpec(1.0, 1.0, -1.0)
    assert I.LossSpec(0.25, 1.0).visibility_factor() == pytest.approx(0.8)


def test_accidentals():
    assert I.accidentals_count(0.0, 1e-10, 1.0) == 0.0
    base = I.accidentals_count(1e5, 1e-10, 1.0)
    assert I.accidentals_count(2e5, 1e-10, 1.0) == pytest.approx(4 * base)
    cfg = replace(CFG, singles_rates=(1e5, 1e5, 1e5, 1e5))
    assert I.expected_accidentals(cfg, 1.0) == pytest.approx(4 * 1e10 * 100e-12)


def test_car():
    assert I.car(2.0, 1.0) == 1.0
    assert I.car(5.0, 5.0) == 0.0
    assert I.car(10.0, 0.0) == math.inf
    # coincidences linear and accidentals quadratic in pump power
    c1, a1 = 1045.0, 1.0
    car3 = I.car(3 * c1, 9 * a1)
    assert car3 == pytest.approx(347.33, abs=0.01)
    assert abs(car3 - 310) < 3 * 16


def test_background_models():
    assert I.quantum_visibility_under_background(0.9, 1e-3, 1.0, 0.0) == 0.9
    for b in (0.3, 0.9, 0.99):
        assert I.quantum_visibility_under_background(0.9, 1e-12, 1.0, b) == pytest.approx(0.9)
    # frozen from B(2-B)/(1-B)^2 at B=0.5: factor 3
    assert I.quantum_visibility_under_background(0.889, 1e-3, 1.0, 0.5) == pytest.approx(
        0.889 / 1.003, rel=1e-12)
    assert I.background_factor(0.5, "printed") == pytest.approx(-1.0)
    with pytest.raises(SingularityError):
        I.quantum_visibility_under_background(0.9, 1e-3, 1.0, 1.0)
    assert I.classical_visibility_under_background(0.9, 0.0) == 0.9
    assert I.classical_visibility_under_background(1.0, 0.97) == pytest.approx(0.03, abs=1e-15)
    assert I.classical_visibility_under_background(0.9, 1.0) == 0.0


def test_background_factor_matches_singles_growth():
    # accidentals grow with the square of total singles S0/(1-B)
    for b in (0.1, 0.5, 0.9):
        assert I.background_factor(b) == pytest.approx(I.BackgroundSetting(b).singles_scale() ** 2 - 1)


def test_drift_series():
    assert np.all(I.simulate_drift_series(I.DriftModel.none(), 10.0, 0.1, 1, 0.3) == 0.3)
    ramp = I.simulate_drift_series(I.DriftModel(0.01, 0.0), 10.0, 1.0, 1)
    np.testing.assert_allclose(np.diff(ramp), 0.01)
    a = I.simulate_drift_series(I.DriftModel(), 60.0, 0.5, 4)
    np.testing.assert_array_equal(a, I.simulate_drift_series(I.DriftModel(), 60.0, 0.5, 4))
    with pytest.raises(DomainError):
        I.DriftModel(-1.0, 0.0)


def test_normalized_noise_without_drift_is_one():
    p, n = I.simulate_drift_noise_trace(CFG, MID, 1000.0, 3)
    assert np.mean(I.rolling_normalized_noise(p, n)) == pytest.approx(1.0, abs=0.1)


def test_normalized_noise_with_default_drift():
    cfg = replace(CFG, drift=I.DriftModel())
    p, n = I.simulate_drift_noise_trace(cfg, MID, 1000.0, 3)
    noise = np.mean(I.rolling_normalized_noise(p, n))
    assert 0.7 <= noise <= 1.9


def test_trial_record_validation():
    with pytest.raises(DomainError):
        I.TrialRecord(-1, 0, 0, 0, 0, 1.0, 0)
    with pytest.raises(DomainError):
        I.simulate_trial(CFG, 0.0, 0.0, 1)


def test_run_trials_threads_identical():
    taus = np.full(16, MID)
    a = I.run_trials(CFG, taus, 0.1, 42, threads=1)
    b = I.run_trials(CFG, taus, 0.1, 42, threads=4)
    assert a == b


def test_simulated_instrument_advances_seed():
    ins = I.SimulatedInstrument(CFG, 1.0, 9)
    first, second = ins.trial(MID), ins.trial(MID)
    assert first.seed != second.seed
    assert I.SimulatedInstrument(CFG, 1.0, 9).trial(MID) == first


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-1e-14, 1e-14), st.integers(0, 2**63))
def test_probabilities_valid(vis, tau, seed):
    cfg = replace(CFG, visibility=vis)
    p = I.channel_probabilities(cfg, tau)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
    rec = I.simulate_trial(cfg, tau, 0.01, seed)
    assert rec.total == rec.n_pairs
