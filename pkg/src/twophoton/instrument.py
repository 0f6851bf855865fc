"""Photon-counting simulation of the four-channel coincidence measurement.

Channel order everywhere is AA, AB, BA, BB, where the first letter is the
port of the long-wavelength detector and the second the short-wavelength
one. AB and BA are coincidences (opposite ports); AA and BB are
anti-coincidences (same port).

Every stochastic function takes an explicit integer seed and draws from a
Philox counter-based generator, so results do not depend on call order or
thread scheduling.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError, SingularityError
from .fringes import PhotonPairSpec
from .units import C

CHANNEL_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])
# Detector indices (1550A, 1550B, 810A, 810B) forming each channel.
CHANNEL_DETECTORS = ((0, 2), (0, 3), (1, 2), (1, 3))

DEFAULT_LINEAR_RATE = math.radians(1.0) / 60.0  # 1 degree per minute
DEFAULT_WALK_SIGMA = 1.9e-3  # rad/sqrt(s); gives ~1.3 normalized noise at 10 s


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(master, index):
    """64-bit seed for trial ``index`` of a batch started from ``master``."""
    ss = np.random.SeedSequence([int(master), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DriftModel:
    linear_rate: float = DEFAULT_LINEAR_RATE
    walk_sigma: float = DEFAULT_WALK_SIGMA

    def __post_init__(self):
        if self.linear_rate < 0 or self.walk_sigma < 0:
            raise DomainError("drift parameters must be non-negative")

    @classmethod
    def none(cls):
        return cls(0.0, 0.0)

    def is_static(self):
        return self.linear_rate == 0.0 and self.walk_sigma == 0.0


@dataclass(frozen=True)
class InstrumentConfig:
    pair_rate: float = 59_000.0
    visibility: float = 0.889
    channel_efficiencies: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    coincidence_window: float = 100e-12
    singles_rates: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    drift: DriftModel = field(default_factory=DriftModel.none)
    pair: PhotonPairSpec = field(default_factory=PhotonPairSpec.default)
    channel_visibilities: Optional[Tuple[float, float, float, float]] = None
    channel_phases: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    include_envelope: bool = True
    # Angular frequency converting delay to fringe phase; defaults to the detuning.
    fringe_frequency: Optional[float] = None

    def __post_init__(self):
        if self.pair_rate < 0:
            raise DomainError("pair_rate must be non-negative")
        if not 0.0 <= self.visibility <= 1.0:
            raise DomainError("visibility must lie in [0, 1]")
        if len(self.channel_efficiencies) != 4 or not all(
            0.0 < e <= 1.0 for e in self.channel_efficiencies
        ):
            raise DomainError("need four channel efficiencies in (0, 1]")
        if not self.coincidence_window > 0:
            raise DomainError("coincidence window must be positive")
        if len(self.singles_rates) != 4 or any(s < 0 for s in self.singles_rates):
            raise DomainError("need four non-negative singles rates")
        if self.fringe_frequency is not None and not self.fringe_frequency > 0:
            raise DomainError("fringe_frequency must be positive")
        if self.channel_visibilities is not None and not all(
            0.0 <= v <= 1.0 for v in self.channel_visibilities
        ):
            raise DomainError("channel visibilities must lie in [0, 1]")

    def phase_rate(self):
        return self.pair.detuning() if self.fringe_frequency is None else self.fringe_frequency

    def fringe_period(self):
        """Fringe period in path length (m)."""
        return 2.0 * math.pi * C / self.phase_rate()


@dataclass(frozen=True)
class LossSpec:
    eta_w1: float = 1.0
    eta_w2: float = 1.0
    c_li: float = 0.0  # loss-independent noise coincidences per integration window

    def __post_init__(self):
        if not (0.0 <= self.eta_w1 <= 1.0 and 0.0 <= self.eta_w2 <= 1.0):
            raise DomainError("transmissions must lie in [0, 1]")
        if self.c_li < 0:
            raise DomainError("c_li must be non-negative")

    def rate_factor(self):
        """Fraction of pairs surviving the lossy arm."""
        return 0.5 * (self.eta_w1 + self.eta_w2)

    def visibility_factor(self):
        """Visibility of the reweighted state; 1 for frequency-independent loss."""
        total = self.eta_w1 + self.eta_w2
        return 0.0 if total == 0 else 2.0 * math.sqrt(self.eta_w1 * self.eta_w2) / total


@dataclass(frozen=True)
class BackgroundSetting:
    b_fraction: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.b_fraction < 1.0:
            raise DomainError("background fraction must lie in [0, 1)")

    def singles_scale(self):
        """Factor by which total singles grow when background makes up ``b_fraction``."""
        return 1.0 / (1.0 - self.b_fraction)


@dataclass(frozen=True)
class TrialRecord:
    n_aa: int
    n_ab: int
    n_ba: int
    n_bb: int
    accidentals: int
    integration_time: float
    seed: int
    tau: float = 0.0
    n_pairs: int = 0

    def __post_init__(self):
        if min(self.n_aa, self.n_ab, self.n_ba, self.n_bb, self.accidentals, self.n_pairs) < 0:
            raise DomainError("counts must be non-negative")

    @property
    def counts(self):
        return np.array([self.n_aa, self.n_ab, self.n_ba, self.n_bb])

    @property
    def total(self):
        return self.n_aa + self.n_ab + self.n_ba + self.n_bb

    def coincidence_fraction(self):
        total = self.total
        return float("nan") if total == 0 else (self.n_ab + self.n_ba) / total


def channel_probabilities(cfg, tau, phase_offset=0.0, visibility_scale=1.0):
    """Probabilities of AA, AB, BA, BB at delay ``tau`` (arrays broadcast over phase offsets).

    Channel ``i`` follows ``1/4 (1 + s_i V_i cos(dw tau + phase_i + offset))``
    with ``s = (+, -, -, +)``; relative channel efficiencies then reweight
    and the result is renormalized.
    """
    vis = np.asarray(
        cfg.channel_visibilities if cfg.channel_visibilities is not None else (cfg.visibility,) * 4
    ) * visibility_scale
    if cfg.include_envelope:
        vis = vis * math.exp(-2.0 * cfg.pair.sigma**2 * tau**2)
    phi = cfg.phase_rate() * tau + np.asarray(phase_offset, dtype=float)
    phases = np.asarray(cfg.channel_phases)
    cos = np.cos(np.add.outer(phi, phases))
    p = 0.25 * (1.0 + CHANNEL_SIGNS * vis * cos)
    p = p * np.asarray(cfg.channel_efficiencies)
    return p / p.sum(axis=-1, keepdims=True)


def simulate_drift_series(drift, duration, dt, seed, initial_phase=0.0):
    """Phase trace on ``[0, duration]`` with spacing ``dt``: ramp plus Gaussian random walk."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    phase = initial_phase + drift.linear_rate * t
    if drift.walk_sigma > 0 and n > 0:
        steps = make_rng(seed).normal(0.0, drift.walk_sigma * math.sqrt(dt), n)
        phase[1:] += np.cumsum(steps)
    return phase


def _drift_offsets(cfg, integration_time, rng):
    # Phase offsets sampled through the window; drift starts at 0 (setpoint just recentered).
    if cfg.drift.is_static():
        return np.zeros(1)
    n = max(10, min(1000, int(math.ceil(integration_time / 0.01))))
    dt = integration_time / n
    t = (np.arange(n) + 0.5) * dt
    walk = np.cumsum(rng.normal(0.0, cfg.drift.walk_sigma * math.sqrt(dt), n))
    return cfg.drift.linear_rate * t + walk


def simulate_trial(cfg, tau, integration_time, seed, loss=None, background=None,
                   phase_offset=0.0):
    """One integration window of four-channel coincidence counting.

    Pairs are Poisson with mean ``pair_rate * t`` (scaled by loss), routed
    multinomially with the channel probabilities averaged over the drift
    trace. Accidentals and loss-independent noise are a flat Poisson stream
    split evenly over the channels.
    """
    if integration_time <= 0:
        raise DomainError("integration time must be positive")
    rng = make_rng(seed)
    loss = loss or LossSpec()
    offsets = phase_offset + _drift_offsets(cfg, integration_time, rng)
    probs = channel_probabilities(cfg, tau, offsets, loss.visibility_factor()).mean(axis=0)
    probs = probs / probs.sum()
    n_pairs = int(rng.poisson(cfg.pair_rate * loss.rate_factor() * integration_time))
    signal = rng.multinomial(n_pairs, probs)
    flat_mean = expected_accidentals(cfg, integration_time, background) + loss.c_li
    n_flat = int(rng.poisson(flat_mean)) if flat_mean > 0 else 0
    flat = rng.multinomial(n_flat, np.full(4, 0.25))
    counts = signal + flat
    return TrialRecord(int(counts[0]), int(counts[1]), int(counts[2]), int(counts[3]),
                       n_flat, float(integration_time), int(seed), float(tau), n_pairs)


def expected_accidentals(cfg, integration_time, background=None):
    """Mean accidental coincidences summed over the four detector pairings."""
    scale = background.singles_scale() if background is not None else 1.0
    s = np.asarray(cfg.singles_rates) * scale
    rate = sum(s[i] * s[j] for i, j in CHANNEL_DETECTORS) * cfg.coincidence_window
    return float(rate * integration_time)


def run_trials(cfg, taus, integration_time, master_seed, threads=1, **kwargs):
    """Independent trials at each delay in ``taus``; seeds derived per index."""
    taus = list(np.atleast_1d(taus))
    seeds = [derive_seed(master_seed, i) for i in range(len(taus))]

    def one(i):
        return simulate_trial(cfg, float(taus[i]), integration_time, seeds[i], **kwargs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(taus))))
    return [one(i) for i in range(len(taus))]


def simulate_drift_noise_trace(cfg, tau, duration, seed, sample_time=1.0):
    """Consecutive ``sample_time`` measurements of P_C under continuous drift.

    Returns ``(p_c, n_total)`` arrays, one entry per sample.
    """
    rng = make_rng(seed)
    n_samples = int(round(duration / sample_time))
    sub = 20
    trace = simulate_drift_series(cfg.drift, duration, sample_time / sub,
                                  int(rng.integers(2**63)))
    p_c = np.empty(n_samples)
    totals = np.empty(n_samples, dtype=int)
    for k in range(n_samples):
        offsets = trace[k * sub:(k + 1) * sub]
        probs = channel_probabilities(cfg, tau, offsets).mean(axis=0)
        n = int(rng.poisson(cfg.pair_rate * sample_time))
        counts = rng.multinomial(n, probs / probs.sum())
        totals[k] = n
        p_c[k] = (counts[1] + counts[2]) / n if n else np.nan
    return p_c, totals


def rolling_normalized_noise(p_c, n_total, window=10):
    """Variance of P_C over the Poissonian expectation in each rolling window."""
    p_c = np.asarray(p_c, dtype=float)
    n_total = np.asarray(n_total, dtype=float)
    out = []
    for k in range(len(p_c) - window + 1):
        seg = p_c[k:k + window]
        poisson_var = np.mean(seg * (1.0 - seg) / n_total[k:k + window])
        out.append(np.var(seg, ddof=1) / poisson_var)
    return np.asarray(out)


def quantum_visibility_under_loss(v0, c0, c_li, eta):
    """Visibility with loss-independent noise ``c_li`` when the signal is scaled by ``eta``."""
    if not c0 > c_li >= 0:
        raise DomainError("need c0 > c_li >= 0")
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta must lie in (0, 1]")
    return c0 * eta / ((c0 - c_li) * eta + c_li) * v0


def classical_visibility_under_loss(v0, eta):
    if not 0.0 <= eta <= 1.0:
        raise DomainError("eta must lie in [0, 1]")
    return 2.0 * math.sqrt(eta) / (1.0 + eta) * v0


def accidentals_count(total_singles_rate, window, integration_time):
    """``S^2 dT`` accidental rate times integration time."""
    if min(total_singles_rate, window, integration_time) < 0:
        raise DomainError("arguments must be non-negative")
    return total_singles_rate**2 * window * integration_time


def background_factor(b_fraction, form="derived"):
    """Growth of accidentals relative to ``A0``, ``(S_i/S_0)^2 - 1``.

    ``derived`` uses the background-to-signal singles ratio ``B/(1-B)`` and
    gives ``B(2-B)/(1-B)^2``. ``printed`` uses ``B/(B-1)`` and gives
    ``(3B-2)B/(B-1)^2``, which is negative for ``B < 2/3``.
    """
    if b_fraction == 1.0:
        raise SingularityError("background fraction of 1 leaves no signal")
    if not 0.0 <= b_fraction < 1.0:
        raise DomainError("background fraction must lie in [0, 1)")
    b = b_fraction
    if form == "derived":
        return b * (2.0 - b) / (1.0 - b) ** 2
    if form == "printed":
        return (3.0 * b - 2.0) * b / (b - 1.0) ** 2
    raise DomainError(f"unknown form {form!r}")


def quantum_visibility_under_background(v0, a0, c0, b_fraction, form="derived"):
    if not c0 > 0:
        raise DomainError("c0 must be positive")
    return v0 / (1.0 + background_factor(b_fraction, form) * a0 / c0)


def classical_visibility_under_background(v0, b_fraction):
    if not 0.0 <= b_fraction <= 1.0:
        raise DomainError("background fraction must lie in [0, 1]")
    return (1.0 - b_fraction) * v0


def car(coincidences, accidentals):
    """``(C - A) / A``; ``math.inf`` when there are no accidentals."""
    if accidentals < 0:
        raise DomainError("accidentals must be non-negative")
    if accidentals == 0:
        return math.inf
    return (coincidences - accidentals) / accidentals


def scan_visibility(records):
    """``(max - min)/(max + min)`` of the coincidence fraction over a scan."""
    p = np.array([r.coincidence_fraction() for r in records])
    return float((p.max() - p.min()) / (p.max() + p.min()))


class SimulatedInstrument:
    """Stateful measurement front end: each call to ``measure`` uses the next derived seed."""

    def __init__(self, cfg, integration_time, seed, **trial_kwargs):
        self.cfg = cfg
        self.integration_time = integration_time
        self.seed = seed
        self.calls = 0
        self.trial_kwargs = trial_kwargs

    def trial(self, tau):
        rec = simulate_trial(self.cfg, tau, self.integration_time,
                             derive_seed(self.seed, self.calls), **self.trial_kwargs)
        self.calls += 1
        return rec

    def measure(self, tau):
        """Measured coincidence fraction at delay ``tau``."""
        return self.trial(tau).coincidence_fraction()
