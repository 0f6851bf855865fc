"""Fisher information, Cramér-Rao bounds and saturation arithmetic."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModelError, SingularityError
from .units import C


@dataclass(frozen=True)
class ResolutionEstimate:
    sigma_tau: float
    sigma_x: float
    n_events: int
    saturation: float = 1.0

    def __post_init__(self):
        if not self.sigma_tau > 0:
            raise DomainError("sigma_tau must be positive")
        if not 0.0 < self.saturation <= 1.0 + 1e-12:
            raise DomainError(f"saturation must lie in (0, 1], got {self.saturation!r}")


def quantum_fisher_information(pair):
    """``dw^2 + 4 sigma^2`` in rad^2/s^2."""
    return pair.detuning() ** 2 + 4.0 * pair.sigma**2


def _slope_term(pair, tau):
    # |d/dtau| of cos(dw tau) exp(-2 s^2 tau^2), without the envelope factor
    dw, s2 = pair.detuning(), pair.sigma**2
    return dw * np.sin(dw * tau) + 4.0 * s2 * tau * np.cos(dw * tau)


def _sinc(a):
    return np.sinc(a / math.pi)


def _expm1_ratio(z):
    # expm1(z) / z with the z -> 0 limit
    safe = np.where(z == 0.0, 1.0, z)
    with np.errstate(over="ignore"):
        return np.where(z == 0.0, 1.0, np.expm1(safe) / safe)


def classical_fisher_information(pair, tau):
    """Single-event Fisher information of the two-outcome coincidence measurement.

    Numerator and denominator both scale as ``tau^2`` near zero; that factor is
    divided out analytically, so small and zero delays are exact (the limit is
    the QFI).
    """
    tau_arr = np.asarray(tau, dtype=float)
    dw, s2 = pair.detuning(), pair.sigma**2
    slope = dw**2 * _sinc(dw * tau_arr) + 4.0 * s2 * np.cos(dw * tau_arr)
    den = 4.0 * s2 * _expm1_ratio(4.0 * s2 * tau_arr**2) + (dw * _sinc(dw * tau_arr)) ** 2
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(den), 0.0, slope**2 / den)
    return out if out.ndim else float(out)


def mixed_state_sigma_tau(pair, epsilon, tau):
    """Single-measurement delay error for the mixed state with visibility ``epsilon``.

    Raises ``SingularityError`` where the fringe slope vanishes (a fringe
    extremum, or ``tau = 0`` for ``epsilon < 1``).
    """
    if not 0.0 < epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    tau_arr = np.asarray(tau, dtype=float)
    dw, s2, eps2 = pair.detuning(), pair.sigma**2, epsilon**2
    at_zero = (tau_arr == 0.0) & (epsilon == 1.0)
    if np.any((_slope_term(pair, tau_arr) == 0.0) & ~at_zero):
        raise SingularityError("fringe slope vanishes: zero information at this delay")
    # divide tau^2 out of both variance and squared slope
    slope = np.abs(dw**2 * _sinc(dw * tau_arr) + 4.0 * s2 * np.cos(dw * tau_arr))
    with np.errstate(divide="ignore", over="ignore"):
        white = 0.0 if epsilon == 1.0 else (1.0 - eps2) / tau_arr**2
        var = 4.0 * s2 * _expm1_ratio(4.0 * s2 * tau_arr**2) + white + eps2 * (dw * _sinc(dw * tau_arr)) ** 2
        out = np.sqrt(var) / (epsilon * slope)
    return out if out.ndim else float(out)


def mixed_state_fisher_information(pair, epsilon, tau):
    """``1 / sigma_tau^2`` for the mixed state; the mixed-state saturation denominator."""
    return 1.0 / np.square(mixed_state_sigma_tau(pair, epsilon, tau))


def cfi_from_reference_fringes(refs, x):
    """Per-event Fisher information about displacement ``x`` (1/m^2) from four fitted fringes."""
    p = refs.probabilities(x)
    if np.any(p <= 0.0):
        raise ModelError("a reference probability is not positive at the requested position")
    dp = refs.derivatives(x)
    out = np.sum(dp**2 / p, axis=0)
    return out if np.ndim(out) else float(out)


def cramer_rao_sigma(Q, n_events, achieved_sigma_x=None):
    """Cramér-Rao delay and path-length errors for ``n_events`` events.

    ``achieved_sigma_x`` (optional) sets the saturation, CRB sigma over
    achieved sigma.
    """
    if not Q > 0:
        raise DomainError("Fisher information must be positive")
    if n_events < 1:
        raise DomainError("need at least one event")
    sigma_tau = 1.0 / math.sqrt(n_events * Q)
    sigma_x = C * sigma_tau
    sat = 1.0 if achieved_sigma_x is None else saturation(sigma_x, achieved_sigma_x)
    return ResolutionEstimate(sigma_tau, sigma_x, int(n_events), sat)


def saturation(crb_sigma, achieved_sigma):
    """Fraction of the bound reached, ``crb_sigma / achieved_sigma``."""
    if not (crb_sigma > 0 and achieved_sigma > 0):
        raise DomainError("sigmas must be positive")
    return crb_sigma / achieved_sigma
