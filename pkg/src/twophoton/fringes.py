"""Closed-form coincidence probabilities for energy-entangled interferometry.

All delays are relative delays ``tau`` in seconds; every function accepts a
scalar or a numpy array for ``tau`` and broadcasts.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError
from .units import (
    C,
    angular_frequency_from_wavelength,
    sigma_from_fwhm_bandwidth,
)

# Default operating point: measured signal, inferred idler, measured signal FWHM.
DEFAULT_SIGNAL_WAVELENGTH = 810.504e-9
DEFAULT_IDLER_WAVELENGTH = 1547.484e-9
DEFAULT_SIGNAL_FWHM = 0.495e-9


@dataclass(frozen=True)
class PhotonPairSpec:
    """Center angular frequencies and Gaussian half-bandwidth of a photon pair.

    ``omega1`` is the higher-frequency photon. ``omega1 == omega2`` is allowed
    so the degenerate (Hong-Ou-Mandel) limit can be expressed.
    """

    omega1: float
    omega2: float
    sigma: float

    def __post_init__(self):
        if not (self.omega2 > 0 and self.omega1 >= self.omega2):
            raise DomainError(
                f"need omega1 >= omega2 > 0, got {self.omega1!r}, {self.omega2!r}"
            )
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")

    @classmethod
    def from_wavelengths(cls, wavelength1, wavelength2, fwhm, fwhm_wavelength=None):
        """Build from center wavelengths (m) and a wavelength FWHM (m).

        The FWHM is interpreted at ``fwhm_wavelength`` (default: the shorter
        of the two wavelengths).
        """
        w_a = angular_frequency_from_wavelength(wavelength1)
        w_b = angular_frequency_from_wavelength(wavelength2)
        if fwhm_wavelength is None:
            fwhm_wavelength = min(wavelength1, wavelength2)
        sigma = sigma_from_fwhm_bandwidth(fwhm_wavelength, fwhm)
        return cls(max(w_a, w_b), min(w_a, w_b), sigma)

    @classmethod
    def default(cls):
        return cls.from_wavelengths(
            DEFAULT_SIGNAL_WAVELENGTH, DEFAULT_IDLER_WAVELENGTH, DEFAULT_SIGNAL_FWHM
        )

    def detuning(self):
        return self.omega1 - self.omega2

    def sum_frequency(self):
        return self.omega1 + self.omega2

    def beta(self):
        """Spectral overlap ``exp(-dw^2 / 8 sigma^2)``; underflows to 0 for the default pair."""
        return math.exp(-self.detuning() ** 2 / (8.0 * self.sigma**2))

    def beat_period(self):
        """Fringe period of the beat note in path length (m)."""
        return 2.0 * math.pi * C / self.detuning()

    def sum_period(self):
        return 2.0 * math.pi * C / self.sum_frequency()


@dataclass(frozen=True)
class BeamsplitterSpec:
    """Transmission/reflection probabilities of the combining beamsplitter per wavelength."""

    t_w1: float = 0.5
    r_w1: float = 0.5
    t_w2: float = 0.5
    r_w2: float = 0.5

    def __post_init__(self):
        for name in ("t_w1", "r_w1", "t_w2", "r_w2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v!r}")
        if self.t_w1 + self.r_w1 > 1.0 + 1e-12 or self.t_w2 + self.r_w2 > 1.0 + 1e-12:
            raise DomainError("t + r must not exceed 1 for either wavelength")


@dataclass(frozen=True)
class PbsSpec:
    """Polarizing beamsplitter extinction ratios (``math.inf`` for an ideal port)."""

    er_t: float = math.inf
    er_r: float = math.inf
    double_filter: bool = False

    def __post_init__(self):
        if not (self.er_t >= 1.0 and self.er_r >= 1.0):
            raise DomainError("extinction ratios must be >= 1")


def _envelope(pair, tau):
    return np.exp(-2.0 * pair.sigma**2 * np.square(tau))


def visibility_envelope(pair, tau):
    """Temporal-mismatch visibility factor ``exp(-2 sigma^2 tau^2)``."""
    return _envelope(pair, tau)


def coincidence_probability(pair, tau, include_beta=False):
    """Coincidence probability for the pure energy-entangled state.

    With ``include_beta`` the spectral-overlap term is kept together with the
    state normalization ``1/(1+beta)``, which makes the result exact for any
    detuning (including the degenerate limit).
    """
    env = _envelope(pair, tau)
    fringe = np.cos(pair.detuning() * np.asarray(tau)) * env
    if not include_beta:
        return 0.5 * (1.0 - fringe)
    beta = pair.beta()
    return 0.5 * (1.0 - (fringe + beta * env) / (1.0 + beta))


def anticoincidence_probability(pair, tau, include_beta=False):
    return 1.0 - coincidence_probability(pair, tau, include_beta)


def mixed_coincidence_probability(pair, epsilon, tau):
    """Fringe of the mixed state with visibility ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    return 0.5 * (1.0 - epsilon * np.cos(pair.detuning() * np.asarray(tau)) * _envelope(pair, tau))


def epsilon_from_purity(purity):
    """Visibility parameter of the mixed state with the given purity ``(1+eps^2)/2``."""
    if not 0.5 <= purity <= 1.0:
        raise DomainError(f"purity must lie in [0.5, 1], got {purity!r}")
    return math.sqrt(2.0 * purity - 1.0)


def imbalanced_bs_coincidence(pair, bs, tau):
    """Coincidence fringe behind a beamsplitter with unequal T/R per wavelength."""
    n1 = bs.t_w1 + bs.r_w1
    n2 = bs.t_w2 + bs.r_w2
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateInputError("transmission and reflection are both zero for a wavelength")
    cross = 2.0 * math.sqrt(bs.t_w1 * bs.t_w2 * bs.r_w1 * bs.r_w2)
    fringe = np.cos(pair.detuning() * np.asarray(tau)) * _envelope(pair, tau)
    return (bs.t_w1 * bs.t_w2 + bs.r_w1 * bs.r_w2 - cross * fringe) / (n1 * n2)


def pbs_coefficients(pbs):
    """Return ``(T_p, R_p, T_s, R_s)`` of a PBS with finite extinction ratios.

    Written in terms of the inverse ratios so the ideal (infinite) and
    non-polarizing (ER = 1) limits are both finite. ``R_s`` is the form that
    keeps ``T_s + R_s = 1`` and ``R_s / R_p = ER_R``.
    """
    a = 0.0 if math.isinf(pbs.er_t) else 1.0 / pbs.er_t
    b = 0.0 if math.isinf(pbs.er_r) else 1.0 / pbs.er_r
    den = a * b - 1.0
    if den == 0.0:
        return 0.5, 0.5, 0.5, 0.5
    t_p = (b - 1.0) / den
    r_p = b * (a - 1.0) / den
    t_s = a * (b - 1.0) / den
    r_s = (a - 1.0) / den
    return t_p, r_p, t_s, r_s


def pbs_process_weights(pbs):
    """Probabilities of the four routings of one polarization process.

    Order: both photons in mode a, correct split, swapped split, both in b.
    """
    t_p, r_p, t_s, r_s = pbs_coefficients(pbs)
    if pbs.double_filter:
        r_p, r_s = r_p**2, r_s**2
    return t_p * t_s, t_p * r_s, r_p * t_s, r_p * r_s


def pbs_leakage_fringe(pair, pbs, tau):
    """Coincidence fringe including PBS leakage into the sum-frequency processes.

    The beat-note classes (one photon per input mode) interfere at the
    detuning with the usual envelope; leakage classes (both photons in the
    same mode) form a sum-frequency fringe. The classes are distinguishable
    by polarization and add incoherently. With ``double_filter`` the
    reflected-port extinction is applied a second time and the weights are
    renormalized to the detected pairs.
    """
    both_a, split, swapped, both_b = pbs_process_weights(pbs)
    w_beat = split + swapped
    w_sum = both_a + both_b
    total = w_beat + w_sum
    v_sum = 2.0 * math.sqrt(both_a * both_b) / w_sum if w_sum > 0 else 0.0
    tau = np.asarray(tau)
    beat = 0.5 * (1.0 - np.cos(pair.detuning() * tau) * _envelope(pair, tau))
    leak = 0.5 * (1.0 + v_sum * np.cos(pair.sum_frequency() * tau))
    return (w_beat * beat + w_sum * leak) / total


def classical_dual_frequency_probs(pair, tau):
    """Port probabilities ``(p_AA, p_BB, p_AB, p_BA)`` of two independent photons."""
    tau = np.asarray(tau)
    s1 = np.sin(0.5 * pair.omega1 * tau) ** 2
    s2 = np.sin(0.5 * pair.omega2 * tau) ** 2
    c1 = 1.0 - s1
    c2 = 1.0 - s2
    return s1 * s2, c1 * c2, s1 * c2, c1 * s2


def classical_beat_coincidence(pair, tau, printed_form=False):
    """Coincidence probability of classical dual-frequency beating.

    The default is the ratio built from the four port probabilities, which
    equals ``(1 - cos(w1 tau) cos(w2 tau)) / 2``. ``printed_form`` returns the
    doubled-phase variant ``(1 - cos(2 w1 tau) cos(2 w2 tau)) / 2`` for
    comparison only.
    """
    if printed_form:
        tau = np.asarray(tau)
        return 0.5 * (1.0 - np.cos(2 * pair.omega1 * tau) * np.cos(2 * pair.omega2 * tau))
    p_aa, p_bb, p_ab, p_ba = classical_dual_frequency_probs(pair, tau)
    return (p_ab + p_ba) / (p_aa + p_bb + p_ab + p_ba)


def sum_frequency_coincidence(pair, tau):
    """Coincidence fringe of the path-sharing (N00N-like) state."""
    return 0.5 * (1.0 + np.cos(pair.sum_frequency() * np.asarray(tau)))


def fringe_visibility(values):
    """``(max - min) / (max + min)`` of a sampled fringe."""
    values = np.asarray(values, dtype=float)
    hi, lo = values.max(), values.min()
    if hi + lo == 0.0:
        return 0.0
    return float((hi - lo) / (hi + lo))


def beat_visibility(fn, pair, center=0.0, samples=20001):
    """Visibility of ``fn(tau)`` sampled over one beat period starting at ``center``."""
    period = 2.0 * math.pi / pair.detuning()
    tau = center + np.linspace(0.0, period, samples)
    return fringe_visibility(fn(tau))
