"""Quadrature oracle for two-photon spectral integrals.

The energy-conservation delta is integrated analytically, leaving one
frequency integral along the line ``w1 + w2 = w_pump``. A joint spectral
amplitude is therefore described by its amplitude ``g(w)`` for the first
photon; the partner sits at ``w_pump - w``.
"""
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, NormalizationError, ResolutionError


@dataclass(frozen=True)
class IntegrationGrid:
    half_width: float = 8.0  # in units of sigma
    points: int = 4097

    def __post_init__(self):
        if self.points < 257 or self.points % 2 == 0:
            raise DomainError("grid points must be odd and >= 257")
        if self.half_width < 5.0:
            raise DomainError("grid half_width must be >= 5 sigma")


@dataclass(frozen=True)
class JointSpectralAmplitude:
    """Amplitude along the energy-conservation line.

    ``amplitude(w)`` is the amplitude for the first photon at ``w`` and the
    second at ``pump - w``. ``centers`` lists where ``amplitude`` has
    support; each center carries a Gaussian of width ``sigma``.
    """

    amplitude: Callable[[np.ndarray], np.ndarray]
    centers: Tuple[float, ...]
    sigma: float
    pump: float

    def evaluate(self, omega1, omega2, atol=None):
        """Amplitude at ``(omega1, omega2)``; zero off the conservation line."""
        atol = 1e-9 * self.pump if atol is None else atol
        on_line = abs(omega1 + omega2 - self.pump) <= atol
        return complex(self.amplitude(np.asarray([omega1]))[0]) if on_line else 0j


def _gaussian_amplitude(offset, sigma):
    # sqrt of a unit-area Gaussian with variance sigma^2
    return (2.0 * math.pi * sigma**2) ** -0.25 * np.exp(-np.square(offset) / (4.0 * sigma**2))


def entangled_jsa(pair):
    """Symmetrized energy-entangled state with normalization ``1/sqrt(2(1+beta))``."""
    w1, w2, s = pair.omega1, pair.omega2, pair.sigma
    norm = 1.0 / math.sqrt(2.0 * (1.0 + pair.beta()))

    def amp(w):
        w = np.asarray(w, dtype=float)
        return norm * (_gaussian_amplitude(w - w1, s) + _gaussian_amplitude(w - w2, s))

    return JointSpectralAmplitude(amp, (w1, w2), s, w1 + w2)


def product_jsa(pair):
    """Unsymmetrized pair: first photon near ``omega1``, partner near ``omega2``."""
    w1, s = pair.omega1, pair.sigma

    def amp(w):
        return _gaussian_amplitude(np.asarray(w, dtype=float) - w1, s)

    return JointSpectralAmplitude(amp, (w1,), s, pair.omega1 + pair.omega2)


def _merged_segments(mids, half, spacing):
    """Uniform sub-grids covering ``[m - half, m + half]`` for every midpoint, merged."""
    spans = sorted((m - half, m + half) for m in mids)
    merged = [list(spans[0])]
    for lo, hi in spans[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    grids = []
    for lo, hi in merged:
        intervals = max(2, int(math.ceil((hi - lo) / spacing)))
        intervals += intervals % 2  # Simpson wants an even interval count
        grids.append((lo, np.linspace(0.0, hi - lo, intervals + 1)))
    return grids


def _spacing(jsa, grid):
    return 2.0 * grid.half_width * jsa.sigma / (grid.points - 1)


def jsa_norm(jsa, grid=IntegrationGrid()):
    """``integral |g(w)|^2 dw`` on the grid."""
    spacing = _spacing(jsa, grid)
    total = 0.0
    for lo, off in _merged_segments(jsa.centers, grid.half_width * jsa.sigma, spacing):
        total += simpson(np.abs(jsa.amplitude(lo + off)) ** 2, x=off)
    return float(total)


def coincidence_from_jsa(jsa, tau, grid=IntegrationGrid()):
    """Coincidence probability by direct quadrature along the conservation line.

    ``P_C = 1/2 - 1/2 Re integral g(w) g*(w_p - w) exp(i (2w - w_p) tau) dw``.
    """
    norm = jsa_norm(jsa, grid)
    if abs(norm - 1.0) > 1e-4:
        raise NormalizationError(f"JSA norm {norm:.8g} differs from 1 by more than 1e-4")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    spacing = _spacing(jsa, grid)
    if taus.size and 2.0 * np.max(np.abs(taus)) * spacing > math.pi / 4.0:
        raise ResolutionError("grid too coarse: phase advances more than pi/4 per step")
    mids = [0.5 * (ci + jsa.pump - cj) for ci in jsa.centers for cj in jsa.centers]
    overlap = np.zeros(taus.shape, dtype=complex)
    for lo, off in _merged_segments(mids, grid.half_width * jsa.sigma, spacing):
        w = lo + off
        prod = jsa.amplitude(w) * np.conj(jsa.amplitude(jsa.pump - w))
        # detuning measured from the segment start keeps the phase exact
        base = 2.0 * lo - jsa.pump
        phase = np.outer(taus, base + 2.0 * off)
        overlap += simpson(prod[None, :] * np.exp(1j * phase), x=off, axis=1)
    result = 0.5 - 0.5 * overlap.real
    return result if np.ndim(tau) else float(result[0])


def _photon_amplitude(pair, w):
    norm = 1.0 / math.sqrt(2.0 * (1.0 + pair.beta()))
    return norm * (
        _gaussian_amplitude(w - pair.omega1, pair.sigma)
        + _gaussian_amplitude(w - pair.omega2, pair.sigma)
    )


def qfi_numerical(pair, tau=0.0, step=None, grid=IntegrationGrid()):
    """Quantum Fisher information about ``tau`` by finite differences of the state.

    The delayed photon's amplitude is ``g(w) exp(-i w tau)``. A global phase
    referenced to the mean center frequency is removed before differencing;
    it leaves the QFI unchanged and avoids cancellation between large terms.
    """
    if step is None:
        step = 1e-3 / pair.omega1
    if step <= 0:
        raise DomainError("finite-difference step must be positive")
    half = grid.half_width * pair.sigma
    spacing = 2.0 * half / (grid.points - 1)
    segments = _merged_segments((pair.omega1, pair.omega2), half, spacing)
    w_max = max(lo + off[-1] for lo, off in segments)
    if w_max * step > 0.1:
        raise ResolutionError("finite-difference step advances the phase by more than 0.1 rad")
    w_ref = 0.5 * (pair.omega1 + pair.omega2)

    def inner(u, v, off):
        return simpson(np.conj(u) * v, x=off)

    nn = dpsi2 = 0.0
    cross = 0j
    for lo, off in segments:
        w = lo + off
        g = _photon_amplitude(pair, w)
        rel = w - w_ref

        def psi(t):
            return g * np.exp(-1j * rel * t)

        p0 = psi(tau)
        d = (psi(tau + step) - psi(tau - step)) / (2.0 * step)
        nn += inner(p0, p0, off).real
        dpsi2 += inner(d, d, off).real
        cross += inner(p0, d, off)
    return 4.0 * (dpsi2 / nn - abs(cross / nn) ** 2)
