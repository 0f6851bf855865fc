"""Two-qubit density-matrix metrics: purity, concurrence and singlet fraction."""
import math

import numpy as np
from scipy.optimize import minimize

from .errors import MatrixError

SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)
_S2 = 1.0 / math.sqrt(2.0)
BELL = {
    "phi+": np.array([1, 0, 0, 1], dtype=complex) * _S2,
    "phi-": np.array([1, 0, 0, -1], dtype=complex) * _S2,
    "psi+": np.array([0, 1, 1, 0], dtype=complex) * _S2,
    "psi-": np.array([0, 1, -1, 0], dtype=complex) * _S2,
}


def validate(rho, atol=1e-10):
    """Return ``rho`` as a complex 4x4 array or raise ``MatrixError``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise MatrixError(f"expected a 4x4 matrix, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=atol, rtol=0.0):
        raise MatrixError("matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise MatrixError(f"trace is {np.trace(rho).real:.12g}, not 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise MatrixError("matrix has a negative eigenvalue")
    return rho


def _psd_sqrt(m):
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    # eigenvalues at round-off level are zero; their square roots would be ~1e-8 noise
    floor = 16 * np.finfo(float).eps * max(w.max(), 0.0)
    w = np.where(w < floor, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def purity(rho):
    rho = validate(rho)
    return float(np.real(np.trace(rho @ rho)))


def concurrence(rho):
    """Wootters concurrence from the eigenvalues of ``sqrt(sqrt(rho) rho~ sqrt(rho))``,
    computed as singular values to avoid square roots of round-off."""
    rho = validate(rho)
    r = _psd_sqrt(rho)
    r_tilde = _YY @ r.conj() @ _YY
    # singular values of sqrt(rho) sqrt(rho~) are the eigenvalues of sqrt(sqrt(rho) rho~ sqrt(rho))
    lam = np.linalg.svd(r @ r_tilde, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def su2(theta, phi, lam):
    """General single-qubit unitary (up to global phase) from three angles."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ]
    )


def local_unitary(angles):
    return np.kron(su2(*angles[:3]), su2(*angles[3:6]))


def bell_fidelities(rho):
    rho = validate(rho)
    return {k: float(np.real(v.conj() @ rho @ v)) for k, v in BELL.items()}


def singlet_fraction(rho, restarts=32, seed=0):
    """Max over local unitaries of the singlet overlap, by multi-start Nelder-Mead.

    The returned value is never below the best unrotated Bell fidelity.
    """
    rho = validate(rho)
    if restarts < 8:
        raise MatrixError("singlet_fraction needs at least 8 restarts")
    singlet = BELL["psi-"]

    def neg_overlap(angles):
        u = local_unitary(angles)
        v = u @ singlet
        return -float(np.real(v.conj() @ rho @ v))

    # Starting points: the local unitaries mapping the singlet onto each Bell state, then random.
    pi = math.pi
    starts = [
        np.zeros(6),
        np.array([0, 0, 0, 0, 0, pi]),
        np.array([pi, 0, 0, 0, 0, 0]),
        np.array([pi, 0, 0, 0, 0, pi]),
    ]
    rng = np.random.default_rng(seed)
    while len(starts) < restarts:
        starts.append(rng.uniform(0.0, 2.0 * pi, 6))
    best = max(bell_fidelities(rho).values())
    for x0 in starts:
        res = minimize(neg_overlap, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        best = max(best, -res.fun)
    return float(min(best, 1.0))


def werner_state(p, bell="psi-"):
    """``p |B><B| + (1 - p) I/4`` for the chosen Bell state."""
    v = BELL[bell]
    return p * np.outer(v, v.conj()) + (1.0 - p) * np.eye(4) / 4.0


def parse_density_matrix(text):
    """Parse four rows of four ``re+imi`` entries (whitespace or comma separated)."""
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        try:
            rows.append([complex(t.replace("i", "j")) for t in tokens])
        except ValueError as exc:
            raise MatrixError(f"cannot parse matrix entry in line {line!r}") from exc
    try:
        rho = np.array(rows, dtype=complex)
    except ValueError as exc:
        raise MatrixError("rows have unequal length") from exc
    return validate(rho, atol=1e-6)


def format_density_matrix(rho):
    def fmt(z):
        return f"{z.real:.12g}{z.imag:+.12g}i"

    return "\n".join(" ".join(fmt(z) for z in row) for row in np.asarray(rho)) + "\n"
