"""Thin-film scan analysis: knife-edge fits, the step scan model and index conversion."""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from scipy.optimize import curve_fit, least_squares
from scipy.special import erf, erfc
from scipy.stats import spearmanr

from .errors import DataError, DomainError, FitError, InsufficientDataError
from .references import ReferenceFringeSet, SinusoidFit

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
NOMINAL_BEAT_K = 2.0 * math.pi / 810e-9 - 2.0 * math.pi / 1550e-9
SCAN_PARAMS = ("a", "b", "c_quad", "y0", "sigma_probe", "d")


@dataclass(frozen=True)
class ScanModelParams:
    """Step height ``a`` (m), wedge ``b`` (m/m), curvature ``c_quad`` (1/m), edge ``y0``,
    Gaussian probe std ``sigma_probe`` and offset ``d`` (all m)."""

    a: float
    b: float = 0.0
    c_quad: float = 0.0
    y0: float = 0.0
    sigma_probe: float = 1e-3
    d: float = 0.0

    def __post_init__(self):
        if not self.sigma_probe > 0:
            raise DomainError("sigma_probe must be positive")

    def as_dict(self):
        return {k: getattr(self, k) for k in SCAN_PARAMS}


def probe_sigma_from_diameter(diameter):
    """Gaussian intensity std of a beam with the given 1/e^2 diameter."""
    return diameter / 4.0


def scan_model(params, y):
    """Gaussian probe convolved with a sharp step on a wedged, curved substrate."""
    u = np.asarray(y, dtype=float) - params.y0
    s = params.sigma_probe
    return (
        params.a
        + params.b * u
        + params.c_quad * (u**2 + s**2)
        - 0.5 * params.a * erfc(u / (s * SQRT2))
        + params.d
    )


def hard_profile(params, y):
    """Unblurred surface: step of height ``a`` at ``y0`` plus wedge, curvature and offset."""
    u = np.asarray(y, dtype=float) - params.y0
    return params.a * (u >= 0) + params.b * u + params.c_quad * u**2 + params.d


def _linear_basis(y, y0, s):
    u = y - y0
    return np.column_stack([1.0 - 0.5 * erfc(u / (s * SQRT2)), u, u**2 + s**2, np.ones_like(y)])


def _full_jacobian(y, p):
    """Model derivatives in SCAN_PARAMS order."""
    u = y - p["y0"]
    s = p["sigma_probe"]
    g = np.exp(-(u**2) / (2.0 * s**2)) / (s * SQRT2PI)
    return np.column_stack([
        1.0 - 0.5 * erfc(u / (s * SQRT2)),
        u,
        u**2 + s**2,
        -p["b"] - 2.0 * p["c_quad"] * u - p["a"] * g,
        2.0 * p["c_quad"] * s - p["a"] * u * g / s,
        np.ones_like(y),
    ])


@dataclass(frozen=True)
class ScanFit:
    params: ScanModelParams
    covariance: np.ndarray  # over ``free`` in SCAN_PARAMS order
    free: tuple
    residual_rms: float

    def errors(self) -> Dict[str, float]:
        err = dict.fromkeys(SCAN_PARAMS, 0.0)
        for i, name in enumerate(self.free):
            err[name] = float(math.sqrt(max(self.covariance[i, i], 0.0)))
        return err


def _as_rows(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise DomainError("data must be (y, value) or (y, value, weight) rows")
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    w = arr[:, 2] if arr.shape[1] == 3 else None
    if w is not None and np.any(w <= 0):
        raise DomainError("weights must be positive")
    return arr[:, 0], arr[:, 1], w


def _varpro(y, v, sw, fixed, lin_names, make_basis):
    """Optimize (y0, sigma) with the linear coefficients solved at each step.

    ``make_basis(y, y0, s)`` returns columns for ``lin_names``; fixed linear
    coefficients are moved to the right-hand side.
    """
    free_lin = [n for n in lin_names if n not in fixed]
    free_nl = [n for n in ("y0", "sigma_probe") if n not in fixed]

    def solve(y0, s):
        basis = make_basis(y, y0, s)
        rhs = v.copy()
        for j, n in enumerate(lin_names):
            if n in fixed:
                rhs = rhs - fixed[n] * basis[:, j]
        cols = [basis[:, lin_names.index(n)] for n in free_lin]
        if cols:
            design = np.column_stack(cols)
            coef, *_ = np.linalg.lstsq(design * sw[:, None], rhs * sw, rcond=None)
            resid = (rhs - design @ coef) * sw
        else:
            coef, resid = np.zeros(0), rhs * sw
        return coef, resid

    span = y[-1] - y[0]

    def unpack(q):
        vals = {"y0": fixed.get("y0"), "sigma_probe": fixed.get("sigma_probe")}
        for name, val in zip(free_nl, q):
            vals[name] = val
        return vals["y0"], vals["sigma_probe"]

    # coarse grid start so the fit never depends on a caller-supplied guess
    best = None
    y0_grid = [fixed["y0"]] if "y0" in fixed else np.linspace(y[0], y[-1], 41)[1:-1]
    s_grid = ([fixed["sigma_probe"]] if "sigma_probe" in fixed
              else span * np.array([0.005, 0.01, 0.02, 0.04, 0.08, 0.16]))
    for y0 in y0_grid:
        for s in s_grid:
            rss = float(np.sum(solve(y0, s)[1] ** 2))
            if best is None or rss < best[0]:
                best = (rss, y0, s)
    start = {"y0": best[1], "sigma_probe": best[2]}
    if free_nl:
        q0 = np.array([start[n] for n in free_nl])
        lo = [y[0] - span if n == "y0" else span * 1e-6 for n in free_nl]
        hi = [y[-1] + span if n == "y0" else 10.0 * span for n in free_nl]
        scale = np.array([span if n == "y0" else best[2] for n in free_nl])
        # unit-free residuals so the solver tolerances do not depend on SI magnitudes
        rscale = float(np.linalg.norm(v * sw)) or 1.0
        res = least_squares(lambda q: solve(*unpack(q * scale))[1] / rscale, q0 / scale,
                            bounds=(np.array(lo) / scale, np.array(hi) / scale),
                            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000,
                            x_scale="jac", diff_step=1e-6)
        if res.status <= 0:
            raise FitError("scan fit did not converge",
                           {"status": res.status, "message": res.message, "nfev": res.nfev})
        y0, s = unpack(res.x * scale)
    else:
        y0, s = unpack([])
    coef, resid = solve(y0, s)
    values = dict(fixed)
    values.update(zip(free_lin, coef))
    values["y0"], values["sigma_probe"] = y0, s
    return values, resid


def _covariance(jac, sw, resid, weighted, n_free):
    jw = jac * sw[:, None]
    # SVD of the column-scaled Jacobian; forming J^T J would square the condition number
    norms = np.linalg.norm(jw, axis=0)
    norms[norms == 0] = 1.0
    _, sv, vt = np.linalg.svd(jw / norms, full_matrices=False)
    inv = np.where(sv > sv[0] * 1e-12, 1.0 / sv**2, 0.0)
    cov = (vt.T * inv) @ vt / np.outer(norms, norms)
    if not weighted:
        cov = cov * float(resid @ resid) / max(1, len(resid) - n_free)
    return cov


def fit_scan(data, fixed: Optional[Dict[str, float]] = None):
    """Weighted least squares of the scan model to ``(y, displacement[, weight])`` rows.

    The four linear parameters are solved exactly for every trial edge
    position and probe width (variable projection), so only ``y0`` and
    ``sigma_probe`` are searched nonlinearly. ``fixed`` pins any parameters.
    Weights are inverse variances; without them the covariance is scaled by
    the residual variance.
    """
    y, v, w = _as_rows(data)
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(SCAN_PARAMS)
    if unknown:
        raise DomainError(f"unknown scan parameters {sorted(unknown)}")
    if len(y) < 10:
        raise InsufficientDataError("need at least 10 scan points")
    sw = np.ones_like(y) if w is None else np.sqrt(w)
    values, resid = _varpro(y, v, sw, fixed, ["a", "b", "c_quad", "d"], _linear_basis)
    params = ScanModelParams(**{k: float(values[k]) for k in SCAN_PARAMS})
    s = params.sigma_probe
    if not (y[0] <= params.y0 - 2.0 * s and y[-1] >= params.y0 + 2.0 * s):
        raise InsufficientDataError("data do not cover both sides of the edge by 2 sigma")
    free = tuple(n for n in SCAN_PARAMS if n not in fixed)
    jac = _full_jacobian(y, params.as_dict())[:, [SCAN_PARAMS.index(n) for n in free]]
    cov = _covariance(jac, sw, resid, w is not None, len(free))
    rms = float(np.sqrt(np.mean((scan_model(params, y) - v) ** 2)))
    return ScanFit(params, cov, free, rms)


@dataclass(frozen=True)
class FilmIndex:
    n_film: float
    uncertainty: float = 0.0

    def __post_init__(self):
        if not self.n_film > 1.0:
            raise DomainError(f"film index must exceed 1, got {self.n_film!r}")


def thickness_from_effective(x0, n, x0_err=0.0):
    """Physical thickness ``x0 / (n - 1)`` and its propagated uncertainty."""
    if not isinstance(n, FilmIndex):
        n = FilmIndex(float(n))
    nf = n.n_film - 1.0
    x = x0 / nf
    err = math.sqrt((x0_err / nf) ** 2 + (x0 * n.uncertainty / nf**2) ** 2)
    return x, err


def calibrated_index_model(y, n_f, a, n_s, b, c_quad, y0, sigma_probe, d, k=NOMINAL_BEAT_K):
    """Scan model in phase units with film terms scaled by ``n_f`` and substrate terms by ``n_s``."""
    u = np.asarray(y, dtype=float) - y0
    film = n_f * a * (1.0 - 0.5 * erfc(u / (sigma_probe * SQRT2)))
    substrate = n_s * (b * u + c_quad * (u**2 + sigma_probe**2) + d)
    return k * (film + substrate)


def calibrated_index_fit(phase_data, a_fixed=50e-9, n_substrate=1.75, k=NOMINAL_BEAT_K):
    """Fit the film index from a phase scan of a calibration film of known thickness.

    Free parameters: ``n_f = n_film - 1``, wedge, curvature, offset (all
    linear), edge position and probe width.
    """
    if not a_fixed > 0:
        raise DomainError("calibration thickness must be positive")
    y, v, w = _as_rows(phase_data)
    if len(y) < 10:
        raise InsufficientDataError("need at least 10 scan points")
    sw = np.ones_like(y) if w is None else np.sqrt(w)
    n_s = n_substrate - 1.0

    def basis(yy, y0, s):
        lin = _linear_basis(yy, y0, s)
        return k * np.column_stack([a_fixed * lin[:, 0], n_s * lin[:, 1],
                                    n_s * lin[:, 2], n_s * lin[:, 3]])

    values, resid = _varpro(y, v, sw, {}, ["n_f", "b", "c_quad", "d"], basis)
    s = values["sigma_probe"]
    if not (y[0] <= values["y0"] - 2.0 * s and y[-1] >= values["y0"] + 2.0 * s):
        raise InsufficientDataError("data do not cover both sides of the edge by 2 sigma")
    # Jacobian in (n_f, b, c_quad, y0, sigma, d) via the scan-model derivatives
    p = {"a": values["n_f"] * a_fixed / n_s, "b": values["b"], "c_quad": values["c_quad"],
         "y0": values["y0"], "sigma_probe": s, "d": values["d"]}
    jac = k * n_s * _full_jacobian(y, p)
    jac[:, 0] = k * a_fixed * _linear_basis(y, values["y0"], s)[:, 0]
    cov = _covariance(jac, sw, resid, w is not None, 6)
    n_film = 1.0 + values["n_f"]
    return FilmIndex(n_film, float(math.sqrt(max(cov[0, 0], 0.0))))


@dataclass(frozen=True)
class KnifeEdgeFit:
    p0: float
    delta0: float
    w: float
    direction: int
    covariance: np.ndarray = field(default=None, repr=False)

    def errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def knife_edge_model(delta, p0, delta0, w, direction=1):
    """Transmitted power past a knife edge for a Gaussian beam of 1/e^2 radius ``w``."""
    return 0.5 * p0 * (1.0 + direction * erf(SQRT2 * (np.asarray(delta) - delta0) / w))


def fit_knife_edge(data, min_rank_correlation=0.8):
    """Fit ``P0/2 [1 +/- erf(sqrt2 (delta - delta0)/w)]`` to ``(delta, power)`` rows.

    The sign follows the data slope. Data whose rank correlation with
    position is weaker than ``min_rank_correlation`` are rejected as
    non-monotonic.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or len(arr) < 8:
        raise InsufficientDataError("need at least 8 knife-edge points")
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    x, p = arr[:, 0], arr[:, 1]
    rho = spearmanr(x, p)[0]
    if not np.isfinite(rho) or abs(rho) < min_rank_correlation:
        raise DataError(f"knife-edge data are not monotonic (rank correlation {rho:.3f})")
    direction = 1 if rho > 0 else -1
    p_max = float(np.max(p))
    rising = p if direction > 0 else p[::-1]
    xs = x if direction > 0 else x[::-1]
    frac = rising / p_max

    def crossing(level):
        idx = int(np.argmax(frac >= level))
        return xs[idx]

    d0 = crossing(0.5)
    w0 = abs(crossing(0.84) - crossing(0.16)) or (x[-1] - x[0]) / 10.0
    scale = np.array([p_max, w0, w0])

    def model(xx, a, b, c):
        return knife_edge_model(xx, a * scale[0], d0 + b * scale[1], abs(c) * scale[2], direction)

    try:
        popt, pcov = curve_fit(model, x, p, p0=[1.0, 0.0, 1.0], maxfev=4000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    params = np.array([popt[0] * scale[0], d0 + popt[1] * scale[1], abs(popt[2]) * scale[2]])
    return KnifeEdgeFit(float(params[0]), float(params[1]), float(params[2]), direction,
                        pcov * np.outer(scale, scale))


def centroid_offset(fit_a, fit_b):
    """``delta0_b - delta0_a`` with its uncertainty."""
    err = math.sqrt(fit_a.covariance[1, 1] + fit_b.covariance[1, 1])
    return fit_b.delta0 - fit_a.delta0, err


def visibility_corrected_references(refs, v_ratio, v_ratio_ref=1.0):
    """Scale each reference amplitude by ``v_ratio / v_ratio_ref``; offsets unchanged."""
    if not 0.0 < v_ratio <= 1.2 or not 0.0 < v_ratio_ref <= 1.2:
        raise DomainError("visibility ratio must lie in (0, 1.2]")
    factor = v_ratio / v_ratio_ref
    fits = []
    for f in refs.fits:
        b = f.b * factor
        if abs(b) > f.a:
            raise DomainError("scaled amplitude exceeds the offset")
        cov = None if f.covariance is None else f.covariance * np.outer(
            [1, factor, 1, 1], [1, factor, 1, 1])
        fits.append(SinusoidFit(f.a, b, f.c, f.d, cov, f.residual_rms))
    return ReferenceFringeSet(*fits, metadata=dict(refs.metadata))


def erf_step(y, y0, sigma, left, right):
    """Smooth transition from ``left`` (y << y0) to ``right`` (y >> y0) with a Gaussian probe."""
    return left + (right - left) * 0.5 * erfc(-(np.asarray(y) - y0) / (sigma * SQRT2))


@dataclass(frozen=True)
class FilmScanSetup:
    """Synthetic transmission scan across a film edge.

    Rates and visibilities interpolate between the uncoated (``y << edge``)
    and coated regions with the probe's Gaussian profile. ``fringe_period``
    ``None`` means the entangled beat note; a number selects a
    single-wavelength classical fringe of that period.
    """

    thickness: float = 7e-9
    n_film: float = 3.3
    probe_diameter: float = 1.21e-3
    edge: float = 4e-3
    y_min: float = 0.0
    y_max: float = 8e-3
    points: int = 41
    rate_uncoated: float = 128e3
    rate_coated: float = 68e3
    visibility_uncoated: float = 0.885
    visibility_coated: float = 0.882
    fringe_period: Optional[float] = None
    integration_time: float = 1.0
    trials: int = 100
    wedge: float = 0.0
    curvature: float = 0.0
    n_film_uncertainty: float = 0.0

    def positions(self):
        return np.linspace(self.y_min, self.y_max, self.points)

    def truth(self):
        """Scan parameters of the effective (interferometric) displacement."""
        return ScanModelParams(self.thickness * (self.n_film - 1.0), self.wedge, self.curvature,
                               self.edge, probe_sigma_from_diameter(self.probe_diameter), 0.0)


@dataclass(frozen=True)
class FilmScanResult:
    y: np.ndarray
    mean_displacement: np.ndarray
    std_displacement: np.ndarray
    theory_sigma: np.ndarray
    fit: ScanFit
    thickness: float
    thickness_err: float


def simulate_film_scan(setup, seed, threads=1, drift=None, visibility_correction=False):
    """Monte Carlo of a film measurement followed by the scan-model fit.

    At every position ``trials`` independent measurements are taken at the
    recentered fringe midpoint and inverted by maximum likelihood against
    references recorded on the uncoated side. The mean displacement per
    position is fitted with the scan model and converted to thickness.
    """
    from .estimation import extract_displacement_batch, half_fringe_interval, theoretical_resolution
    from .instrument import DriftModel, InstrumentConfig, derive_seed, simulate_trial
    from .units import C

    base = InstrumentConfig(visibility=setup.visibility_uncoated,
                            drift=drift or DriftModel.none(), include_envelope=False,
                            fringe_frequency=None if setup.fringe_period is None
                            else 2.0 * math.pi * C / setup.fringe_period)
    period = base.fringe_period()
    refs0 = ReferenceFringeSet.ideal(period, setup.visibility_uncoated)
    x_mid = period / 4.0
    search = half_fringe_interval(refs0, x_mid)
    truth = setup.truth()
    ys = setup.positions()
    sig = truth.sigma_probe
    rates = erf_step(ys, setup.edge, sig, setup.rate_uncoated, setup.rate_coated)
    vis = erf_step(ys, setup.edge, sig, setup.visibility_uncoated, setup.visibility_coated)
    shift = scan_model(truth, ys)

    def run_position(i):
        cfg = replace(base, pair_rate=float(rates[i]), visibility=float(vis[i]))
        refs = (visibility_corrected_references(refs0, vis[i] / setup.visibility_uncoated)
                if visibility_correction else refs0)
        tau = (x_mid + shift[i]) / C
        counts = np.array([
            simulate_trial(cfg, tau, setup.integration_time,
                           derive_seed(seed, i * setup.trials + j)).counts
            for j in range(setup.trials)
        ])
        xs, n = extract_displacement_batch(refs, counts, search)
        disp = xs - x_mid
        return disp.mean(), disp.std(ddof=1), theoretical_resolution(refs, float(n.mean()), x_mid)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_position, range(len(ys))))
    else:
        rows = [run_position(i) for i in range(len(ys))]
    mean, std, theory = (np.array(col) for col in zip(*rows))
    weights = setup.trials / np.maximum(std, 1e-15) ** 2
    fit = fit_scan(np.column_stack([ys, mean, weights]))
    thick, thick_err = thickness_from_effective(fit.params.a,
                                                FilmIndex(setup.n_film, setup.n_film_uncertainty),
                                                fit.errors()["a"])
    return FilmScanResult(ys, mean, std, theory, fit, thick, thick_err)


def classical_film_setup(**overrides):
    """Single-wavelength 1550-nm probe whose visibility collapses on the coated side."""
    values = dict(n_film=3.07, visibility_uncoated=0.96, visibility_coated=0.166,
                  fringe_period=1550e-9)
    values.update(overrides)
    return FilmScanSetup(**values)
