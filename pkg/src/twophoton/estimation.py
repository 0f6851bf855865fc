"""Fringe fitting, visibility extraction and maximum-likelihood displacement."""
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, least_squares

from .errors import (
    DegenerateInputError,
    DomainError,
    FitError,
    InsufficientDataError,
    ModelError,
    OutOfRangeError,
    SearchError,
    SingularityError,
)
from .fisher import cfi_from_reference_fringes
from .references import ReferenceFringeSet, SinusoidFit
from .units import C

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _as_samples(samples, y=None, w=None):
    if y is None:
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise DomainError("samples must be (x, p) or (x, p, weight) rows")
        x, y = arr[:, 0], arr[:, 1]
        w = arr[:, 2] if arr.shape[1] == 3 else None
    else:
        x = np.asarray(samples, dtype=float)
        y = np.asarray(y, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    w = None if w is None else np.asarray(w, dtype=float)[order]
    return x, y, w


def _linear_sinusoid(x, y, sw, freq):
    # y ~ a + p cos(2 pi f x) + q sin(2 pi f x), weighted by sqrt(w)
    arg = 2.0 * math.pi * freq * x
    design = np.column_stack([np.ones_like(x), np.cos(arg), np.sin(arg)])
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    resid = (y - design @ coef) * sw
    return coef, float(resid @ resid)


def _initial_guess(x, y, sw):
    span = x[-1] - x[0]
    dx = np.min(np.diff(x)) if len(x) > 1 else span
    dx = dx if dx > 0 else span / len(x)
    f_lo, f_hi = 1.0 / (1.5 * span), 1.0 / (2.0 * dx)
    # coarse periodogram of the weighted, mean-removed data
    yc = (y - np.average(y, weights=sw**2)) * sw
    freqs = np.linspace(f_lo, f_hi, max(256, 8 * len(x)))
    power = np.abs(np.exp(-2j * math.pi * np.outer(freqs, x)) @ yc)
    k = int(np.argmax(power))
    # refine by minimizing the linear-fit residual around the peak bin
    step = freqs[1] - freqs[0]
    fine = np.linspace(max(f_lo, freqs[k] - step), min(f_hi, freqs[k] + step), 201)
    rss = [_linear_sinusoid(x, y, sw, f)[1] for f in fine]
    freq = fine[int(np.argmin(rss))]
    (a, p, q), _ = _linear_sinusoid(x, y, sw, freq)
    return np.array([a, math.hypot(p, q), 1.0 / freq, math.atan2(q, p)]), dx, span


def _canonical(b, d):
    """Map ``(b, d)`` so that ``d`` lies in ``(-pi/2, pi/2]``, flipping the sign of ``b``."""
    d = (d + math.pi) % (2.0 * math.pi) - math.pi
    if d > math.pi / 2:
        return -b, d - math.pi
    if d <= -math.pi / 2:
        return -b, d + math.pi
    return b, d


def fit_sinusoid(samples, y=None, weights=None, max_nfev=200):
    """Weighted nonlinear least squares of ``a + b cos(2 pi x / c - d)``.

    ``samples`` is either a sequence of ``(x, p[, weight])`` rows or an array
    of positions with ``y`` given separately. Weights are inverse variances;
    without weights the covariance is scaled by the residual variance.

    Initialization: the period comes from the strongest periodogram bin,
    refined by a fine scan of the linear-fit residual; offset and quadrature
    amplitudes come from linear least squares at that period.
    """
    x, y, w = _as_samples(samples, y, weights)
    if len(x) < 8:
        raise InsufficientDataError("need at least 8 samples")
    if w is not None and np.any(w <= 0):
        raise DomainError("weights must be positive")
    sw = np.ones_like(x) if w is None else np.sqrt(w)
    p0, dx, span = _initial_guess(x, y, sw)

    def resid(p):
        a, b, c, d = p
        return (a + b * np.cos(2.0 * math.pi * x / c - d) - y) * sw

    lo = [-np.inf, -np.inf, 2.0 * dx, -np.inf]
    hi = [np.inf, np.inf, 1.5 * span, np.inf]
    p0[2] = min(max(p0[2], lo[2] * (1 + 1e-9)), hi[2] * (1 - 1e-9))
    res = least_squares(resid, p0, bounds=(lo, hi), method="trf", x_scale="jac",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    if res.status <= 0:
        raise FitError("sinusoid fit did not converge",
                       {"status": res.status, "message": res.message, "nfev": res.nfev,
                        "params": res.x.tolist()})
    a, b, c, d = res.x
    if c > span:
        raise InsufficientDataError(f"samples span {span:.4g} m, less than one period {c:.4g} m")
    b, d = _canonical(b, d)
    jac = res.jac
    try:
        cov = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jac.T @ jac)
    rss = float(res.fun @ res.fun)
    if w is None:
        cov = cov * rss / max(1, len(x) - 4)
    # sign flip of b and shift of d leave the covariance magnitudes unchanged
    if b != res.x[1]:
        flip = np.diag([1.0, -1.0, 1.0, 1.0])
        cov = flip @ cov @ flip
    model = a + b * np.cos(2.0 * math.pi * x / c - d)
    rms = float(np.sqrt(np.mean((model - y) ** 2)))
    return SinusoidFit(float(a), float(b), float(c), float(d), cov, rms)


class Visibility(NamedTuple):
    value: float
    uncertainty: float


def visibility_from_fit(fit):
    """``|b / a|`` with uncorrelated first-order error propagation."""
    if fit.a == 0:
        raise DegenerateInputError("offset a is zero")
    v = abs(fit.b / fit.a)
    if fit.covariance is None:
        return Visibility(v, float("nan"))
    var_a, var_b = fit.covariance[0, 0], fit.covariance[1, 1]
    unc = math.sqrt(var_b / fit.a**2 + fit.b**2 * var_a / fit.a**4)
    return Visibility(v, unc)


def fit_reference_fringes(positions, records, metadata=None):
    """Fit the four channel fringes of a scan of ``TrialRecord`` objects.

    Each channel fraction gets the binomial inverse-variance weight
    ``N / (p (1 - p))``.
    """
    positions = np.asarray(positions, dtype=float)
    counts = np.array([r.counts for r in records], dtype=float)
    totals = counts.sum(axis=1)
    if np.any(totals <= 0):
        raise InsufficientDataError("a scan point has no counts")
    fits = []
    for ch in range(4):
        p = counts[:, ch] / totals
        var = np.clip(p * (1.0 - p), 1e-12, None) / totals
        fits.append(fit_sinusoid(positions, p, 1.0 / var))
    meta = {"x_min": float(positions.min()), "x_max": float(positions.max()),
            "points": int(len(positions))}
    if records:
        meta["integration_time"] = float(records[0].integration_time)
    meta.update(metadata or {})
    return ReferenceFringeSet(*fits, metadata=meta)


@dataclass(frozen=True)
class DisplacementEstimate:
    x_star: float
    sigma_theory: float
    n_total: int


def log_likelihood(refs, counts, x, kind="gaussian"):
    """Log-likelihood of channel counts at positions ``x``.

    ``counts`` has shape ``(..., 4)``; ``x`` broadcasts against the leading
    dimensions with an extra trailing axis of positions. ``gaussian`` is
    ``-sum (P - n/N)^2 / P``; ``multinomial`` is ``sum n log P``.
    """
    counts = np.asarray(counts, dtype=float)
    n_tot = counts.sum(axis=-1, keepdims=True)
    freq = counts / n_tot
    p = np.moveaxis(refs.probabilities(x), 0, -1)  # (..., positions, 4)
    if kind == "gaussian":
        return -np.sum((p - freq[..., None, :]) ** 2 / p, axis=-1)
    if kind == "multinomial":
        return np.sum(counts[..., None, :] * np.log(p), axis=-1)
    raise DomainError(f"unknown likelihood kind {kind!r}")


def _mle_core(refs, counts, search, kind, grid_points=201, xtol=1e-12):
    lo, hi = float(search[0]), float(search[1])
    if not hi > lo:
        raise DomainError("search interval must have hi > lo")
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    if np.any(counts.sum(axis=1) <= 0):
        raise DomainError("a trial has no counts")
    grid = np.linspace(lo, hi, grid_points)
    if np.any(refs.probabilities(grid) <= 0):
        raise ModelError("a reference probability is not positive inside the search interval")
    ll = log_likelihood(refs, counts, grid, kind)
    idx = np.argmax(ll, axis=1)  # first maximum: smallest x wins ties
    if np.any((idx == 0) | (idx == grid_points - 1)):
        raise OutOfRangeError("likelihood maximum on the search boundary (fringe wrap suspected)")
    a = grid[idx - 1].copy()
    b = grid[idx + 1].copy()

    def f(xs):
        # per-trial likelihood at one position each
        p = refs.probabilities(xs).T
        freq = counts / counts.sum(axis=1, keepdims=True)
        if kind == "gaussian":
            return -np.sum((p - freq) ** 2 / p, axis=1)
        return np.sum(counts * np.log(p), axis=1)

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while np.max(b - a) > xtol:
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - GOLDEN * (b - a)
        new_d = a + GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_eval = f(np.where(left, new_c, new_d))
        fc, fd = np.where(left, fc_eval, fd), np.where(left, fc, fc_eval)
        c, d = c_next, d_next
    return 0.5 * (a + b), counts.sum(axis=1)


def extract_displacement_mle(refs, trial, search, kind="gaussian"):
    """Maximum-likelihood displacement from one trial's four channel counts.

    The search interval must lie on one monotonic half-fringe; use
    ``half_fringe_interval`` to build it.
    """
    counts = trial.counts if hasattr(trial, "counts") else np.asarray(trial)
    x, n = _mle_core(refs, counts, search, kind)
    x_star, n_tot = float(x[0]), int(n[0])
    return DisplacementEstimate(x_star, theoretical_resolution(refs, n_tot, x_star), n_tot)


def extract_displacement_batch(refs, counts, search, kind="gaussian"):
    """Vectorized MLE over an ``(M, 4)`` count array; returns ``(x_star, n_total)`` arrays."""
    x, n = _mle_core(refs, counts, search, kind)
    return x, n.astype(int)


def theoretical_resolution(refs, n_total, x):
    """``1 / sqrt(N I(x))`` with ``I`` from the reference fringes."""
    if n_total < 1:
        raise DomainError("n_total must be >= 1")
    info = cfi_from_reference_fringes(refs, x)
    # information at round-off level relative to k^2 means a fringe extremum
    floor = 1e-20 * (2.0 * math.pi / refs.period()) ** 2
    if np.any(np.asarray(info) <= floor):
        raise SingularityError("zero Fisher information at this position")
    out = 1.0 / np.sqrt(n_total * np.asarray(info))
    return out if out.ndim else float(out)


def half_fringe_interval(refs, x_center, margin=0.02):
    """Monotonic half-period of the AB fringe containing ``x_center``.

    ``margin`` (fraction of the half-period) is trimmed from both ends.
    """
    fit = refs.ab
    k = 2.0 * math.pi / fit.c
    m = math.floor((k * x_center - fit.d) / math.pi)
    lo = (m * math.pi + fit.d) / k
    half = fit.c / 2.0
    return lo + margin * half, lo + (1.0 - margin) * half


class EnvelopeFit(NamedTuple):
    v0: float
    x0: float
    sigma: float
    covariance: np.ndarray

    def fwhm(self):
        """Envelope FWHM in path length (m)."""
        return C * math.sqrt(2.0 * math.log(2.0)) / self.sigma


def envelope_model(x, v0, x0, sigma):
    return v0 * np.exp(-2.0 * sigma**2 * ((np.asarray(x) - x0) / C) ** 2)


def fit_envelope(points):
    """Least-squares fit of ``V0 exp(-2 sigma^2 ((x - x0)/c)^2)`` to ``(x, V)`` rows."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or len(arr) < 5:
        raise InsufficientDataError("need at least 5 (x, visibility) points")
    arr = arr[np.argsort(arr[:, 0])]
    x, v = arr[:, 0], arr[:, 1]
    k = int(np.argmax(v))
    if k == 0 or k == len(x) - 1:
        raise InsufficientDataError("points do not bracket the visibility peak")
    above = x[v >= 0.5 * v[k]]
    width = max(above.max() - above.min(), np.min(np.diff(x)))
    sigma0 = C * math.sqrt(2.0 * math.log(2.0)) / width
    scale = np.array([v[k], width, sigma0])

    def model(xs, v0, x0, s):
        return envelope_model(xs, v0 * scale[0], x[k] + x0 * scale[1], s * scale[2])

    try:
        with warnings.catch_warnings():
            # exact data give a zero residual and an undefined covariance scale
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(model, x, v, p0=[1.0, 0.0, 1.0], maxfev=2000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    params = np.array([popt[0] * scale[0], x[k] + popt[1] * scale[1], abs(popt[2]) * scale[2]])
    cov = pcov * np.outer(scale, scale)
    return EnvelopeFit(float(params[0]), float(params[1]), float(params[2]), cov)


@dataclass(frozen=True)
class SetpointResult:
    tau: float
    p_c: float
    iterations: int


def phase_setpoint_search(measure, period, tau_start=0.0, target=0.5, tol=0.01,
                          max_iterations=20, coarse_points=8):
    """Find a delay where the measured coincidence fraction is within ``tol`` of ``target``.

    ``measure(tau)`` returns a (possibly noisy) coincidence fraction. A coarse
    scan over one period locates a bracketing pair on a rising or falling
    edge; false position with bisection fallback then narrows it.
    """
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    taus = tau_start + period * np.arange(coarse_points) / coarse_points
    values = np.array([measure(t) for t in taus])
    if values.max() - values.min() < 2.0 * tol:
        raise SearchError("fringe is flat: no setpoint can be resolved")
    k = int(np.argmin(np.abs(values - target)))
    if abs(values[k] - target) <= tol:
        return SetpointResult(float(taus[k]), float(values[k]), 0)
    # bracket: first consecutive pair straddling the target
    ext_t = np.append(taus, tau_start + period)
    ext_v = np.append(values, values[0])
    s = np.sign(ext_v - target)
    crossings = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if crossings.size == 0:
        raise SearchError("coarse scan never crosses the target")
    i = int(crossings[0])
    t_lo, t_hi, v_lo, v_hi = ext_t[i], ext_t[i + 1], ext_v[i], ext_v[i + 1]
    repeats = 0  # consecutive replacements of the same end
    prev_end = None
    for it in range(1, max_iterations + 1):
        t = t_lo + (target - v_lo) * (t_hi - t_lo) / (v_hi - v_lo)
        if repeats >= 2 or not (min(t_lo, t_hi) < t < max(t_lo, t_hi)):
            t = 0.5 * (t_lo + t_hi)
        v = measure(t)
        if abs(v - target) <= tol:
            return SetpointResult(float(t), float(v), it)
        end = "lo" if np.sign(v - target) == np.sign(v_lo - target) else "hi"
        if end == "lo":
            t_lo, v_lo = t, v
        else:
            t_hi, v_hi = t, v
        repeats = repeats + 1 if end == prev_end else 1
        prev_end = end
    raise SearchError(f"setpoint not reached within {max_iterations} iterations")
