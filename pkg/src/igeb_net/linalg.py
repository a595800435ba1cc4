"""Small dense linear algebra helpers: skew maps, SPD powers, ordered
symmetric eigendecompositions and eigenvalue-based definiteness tests."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NotSkew, NotSPD, NotSymmetric

SYM_TOL = 1e-10
SPD_REL_TOL = 1e-12


def hat(u):
    """Skew matrix such that ``hat(u) @ z == np.cross(u, z)``."""
    u1, u2, u3 = np.asarray(u, dtype=float)
    return np.array([[0.0, -u3, u2], [u3, 0.0, -u1], [-u2, u1, 0.0]])


def hat_batch(u):
    """Vectorised :func:`hat` over the leading axes of ``u[..., 3]``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-1] + (3, 3))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def vec_of_skew(m):
    m = np.asarray(m, dtype=float)
    if np.max(np.abs(m + m.T)) > SYM_TOL:
        raise NotSkew("matrix is not skew-symmetric")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _sym_scale(m):
    return max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0


def check_symmetric(m, what="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"{what} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotSymmetric(f"{what} has non-finite entries")
    if np.max(np.abs(m - m.T)) > SYM_TOL * _sym_scale(m):
        raise NotSymmetric(f"{what} is not symmetric")
    return 0.5 * (m + m.T)


def is_spd(m):
    try:
        m = check_symmetric(m)
    except NotSymmetric:
        return False
    lam = np.linalg.eigvalsh(m)
    return lam[-1] > 0 and lam[0] > SPD_REL_TOL * lam[-1]


def spd_power(m, p):
    """Matrix power ``m**p`` of a symmetric positive definite matrix."""
    try:
        m = check_symmetric(m)
    except NotSymmetric as exc:
        raise NotSPD(str(exc)) from exc
    lam, v = np.linalg.eigh(m)
    if not (lam[-1] > 0 and lam[0] > SPD_REL_TOL * lam[-1]):
        raise NotSPD(f"matrix is not positive definite (eigenvalues {lam[0]:.3e}..{lam[-1]:.3e})")
    out = (v * lam**p) @ v.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class SymEig:
    values: np.ndarray
    vectors: np.ndarray


def sym_eig6(m):
    """Ascending eigendecomposition with a deterministic eigenvector sign:
    the entry of largest magnitude in each column is positive."""
    m = check_symmetric(m)
    lam, v = np.linalg.eigh(m)
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return SymEig(values=lam, vectors=v * signs)


class Kind(str, Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    NEGATIVE_DEFINITE = "NegativeDefinite"
    SEMIDEFINITE = "Semidefinite"
    INDEFINITE = "Indefinite"


@dataclass(frozen=True)
class Definiteness:
    kind: Kind
    margin: float
    eig_min: float
    eig_max: float


def definiteness(m, tol):
    m = check_symmetric(m)
    lam = np.linalg.eigvalsh(m)
    lo, hi = float(lam[0]), float(lam[-1])
    if lo > tol:
        return Definiteness(Kind.POSITIVE_DEFINITE, lo, lo, hi)
    if hi < -tol:
        return Definiteness(Kind.NEGATIVE_DEFINITE, -hi, lo, hi)
    if lo >= -tol or hi <= tol:
        # the critical eigenvalue is the one hugging zero
        margin = abs(lo) if lo >= -tol else abs(hi)
        return Definiteness(Kind.SEMIDEFINITE, margin, lo, hi)
    return Definiteness(Kind.INDEFINITE, min(-lo, hi), lo, hi)


def sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def block_diag(*blocks):
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    k = 0
    for b in blocks:
        s = b.shape[0]
        out[k:k + s, k:k + s] = b
        k += s
    return out


def spd_power_batch(mats, p):
    """Stacked SPD powers without validation; inputs must already be SPD."""
    lam, v = np.linalg.eigh(sym(np.asarray(mats, dtype=float)))
    out = (v * lam[..., None, :] ** p) @ np.swapaxes(v, -1, -2)
    return sym(out)
