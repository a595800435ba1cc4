"""Per-beam parameters and coefficient assembly for the intrinsic beam system

    dt y + A(x) dx y + Bbar(x) y = gbar(x, y),   y = (v, z) in R^12,

with A = [[0, -M^-1], [-C^-1, 0]], Bbar = [[0, -M^-1 E], [C^-1 E^T, 0]] and
the quadratic source gbar. All assembly helpers accept either a scalar x or
an array of positions and then return stacked matrices.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, polar

from .errors import NotRotation, NotSPD, OutOfDomain
from .linalg import SYM_TOL, hat, hat_batch, sym

COND_MAX = 1e12
ROT_TOL = 1e-10
E1 = np.array([1.0, 0.0, 0.0])


def _check_spd_stack(mats, what):
    mats = np.asarray(mats, dtype=float)
    if mats.shape[-2:] != (6, 6):
        raise NotSPD(f"{what} must be 6x6, got {mats.shape[-2:]}")
    if not np.all(np.isfinite(mats)):
        raise NotSPD(f"{what} has non-finite entries")
    scale = np.maximum(1.0, np.max(np.abs(mats), axis=(-2, -1)))
    asym = np.max(np.abs(mats - np.swapaxes(mats, -1, -2)), axis=(-2, -1))
    if np.any(asym > SYM_TOL * scale):
        raise NotSPD(f"{what} is not symmetric")
    lam = np.linalg.eigvalsh(sym(mats))
    lo, hi = lam[..., 0], lam[..., -1]
    if np.any(lo <= 0) or np.any(hi / lo > COND_MAX):
        raise NotSPD(f"{what} is not positive definite or has condition number above {COND_MAX:g}")
    return sym(mats)


class ParamField:
    """A 6x6 SPD matrix field on [0, length]: constant, or sampled with
    linear interpolation between samples."""

    def __init__(self, value=None, xs=None, values=None, what="parameter"):
        if value is not None:
            self.constant = _check_spd_stack(value, what)
            self.xs = None
            self.values = None
        else:
            xs = np.asarray(xs, dtype=float)
            values = np.asarray(values, dtype=float)
            if xs.ndim != 1 or len(xs) < 2 or values.shape != (len(xs), 6, 6):
                raise NotSPD(f"{what}: sampled field needs >= 2 positions and one 6x6 matrix per position")
            if np.any(np.diff(xs) <= 0):
                raise NotSPD(f"{what}: sample positions must be strictly increasing")
            self.constant = None
            self.xs = xs
            self.values = _check_spd_stack(values, what)

    @classmethod
    def const(cls, mat, what="parameter"):
        return cls(value=mat, what=what)

    @classmethod
    def sampled(cls, xs, values, what="parameter"):
        return cls(xs=xs, values=values, what=what)

    @property
    def is_constant(self):
        return self.constant is not None

    def covers(self, length):
        if self.is_constant:
            return True
        tol = 1e-12 * max(1.0, length)
        return self.xs[0] <= tol and self.xs[-1] >= length - tol

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.broadcast_to(self.constant, x.shape + (6, 6)).copy()
        flat = self.values.reshape(len(self.xs), 36)
        out = np.stack([np.interp(x, self.xs, flat[:, k]) for k in range(36)], axis=-1)
        return sym(out.reshape(x.shape + (6, 6)))


class RotationField:
    """Reference rotation R(x) of the beam's undeformed centerline frame.

    Kinds: identity, constant, constant curvature ``R0 @ expm(x*hat(kappa))``,
    or sampled with curvature recovered from finite differences."""

    def __init__(self, kind="identity", R0=None, kappa=None, xs=None, values=None):
        self.kind = kind
        self.R0 = np.eye(3) if R0 is None else _check_rotation(R0)
        self.kappa = np.zeros(3) if kappa is None else np.asarray(kappa, dtype=float).reshape(3)
        self.xs = None
        self.values = None
        if kind == "sampled":
            xs = np.asarray(xs, dtype=float)
            values = np.asarray(values, dtype=float)
            if xs.ndim != 1 or len(xs) < 3 or values.shape != (len(xs), 3, 3):
                raise NotRotation("sampled rotation needs >= 3 positions and one 3x3 matrix per position")
            if np.any(np.diff(xs) <= 0):
                raise NotRotation("rotation sample positions must be strictly increasing")
            for R in values:
                _check_rotation(R)
            self.xs = xs
            self.values = values
            self._curv_samples = _fd_curvature(xs, values)
        elif kind not in ("identity", "constant", "curvature"):
            raise NotRotation(f"unknown rotation kind {kind!r}")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def constant(cls, R):
        return cls("constant", R0=R)

    @classmethod
    def constant_curvature(cls, kappa, R0=None):
        return cls("curvature", R0=R0, kappa=kappa)

    @classmethod
    def sampled(cls, xs, values):
        return cls("sampled", xs=xs, values=values)

    @property
    def is_straight(self):
        return self.kind in ("identity", "constant") or (
            self.kind == "curvature" and not np.any(self.kappa))

    @property
    def is_constant_curvature(self):
        return self.kind != "sampled"

    def covers(self, length):
        if self.kind != "sampled":
            return True
        tol = 1e-12 * max(1.0, length)
        return self.xs[0] <= tol and self.xs[-1] >= length - tol

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in ("identity", "constant"):
            return np.broadcast_to(self.R0, x.shape + (3, 3)).copy()
        if self.kind == "curvature":
            K = hat(self.kappa)
            out = np.array([self.R0 @ expm(xi * K) for xi in x.reshape(-1)])
            return out.reshape(x.shape + (3, 3))
        flat = self.values.reshape(len(self.xs), 9)
        raw = np.stack([np.interp(x, self.xs, flat[:, k]) for k in range(9)], axis=-1)
        raw = raw.reshape(-1, 3, 3)
        # entrywise interpolation leaves SO(3); project back with the polar factor
        out = np.array([polar(R)[0] for R in raw])
        return out.reshape(x.shape + (3, 3))

    def curvature(self, x):
        """Curvature-twist vector vec(R^T dR/dx)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sampled":
            return np.stack([np.interp(x, self.xs, self._curv_samples[:, k]) for k in range(3)], axis=-1)
        return np.broadcast_to(self.kappa, x.shape + (3,)).copy()


def _check_rotation(R):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise NotRotation("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > ROT_TOL or np.linalg.det(R) <= 0:
        raise NotRotation("matrix is not a proper rotation")
    return R


def _fd_curvature(xs, Rs):
    dR = np.gradient(Rs, xs, axis=0, edge_order=2)
    S = np.einsum("nji,njk->nik", Rs, dR)
    S = 0.5 * (S - np.swapaxes(S, -1, -2))
    return np.stack([S[:, 2, 1], S[:, 0, 2], S[:, 1, 0]], axis=-1)


@dataclass(frozen=True)
class BeamParams:
    length: float
    mass: ParamField
    flexibility: ParamField
    rotation: RotationField = field(default_factory=RotationField.identity)

    def __post_init__(self):
        if not (np.isfinite(self.length) and self.length > 0):
            raise OutOfDomain(f"beam length must be positive, got {self.length}")
        for f, name in ((self.mass, "mass"), (self.flexibility, "flexibility"), (self.rotation, "rotation")):
            if not f.covers(self.length):
                raise OutOfDomain(f"{name} samples do not cover [0, {self.length}]")

    @classmethod
    def uniform(cls, length=1.0, M=None, C=None, rotation=None):
        M = np.eye(6) if M is None else M
        C = np.eye(6) if C is None else C
        return cls(float(length), ParamField.const(M, "mass"), ParamField.const(C, "flexibility"),
                   rotation or RotationField.identity())

    @property
    def is_constant(self):
        return self.mass.is_constant and self.flexibility.is_constant

    def check_x(self, x):
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * max(1.0, self.length)
        if np.any(x < -tol) or np.any(x > self.length + tol) or not np.all(np.isfinite(x)):
            raise OutOfDomain(f"position outside [0, {self.length}]")
        return np.clip(x, 0.0, self.length)

    def M(self, x):
        return self.mass(self.check_x(x))

    def C(self, x):
        return self.flexibility(self.check_x(x))

    def R(self, x):
        return self.rotation(self.check_x(x))

    def curvature(self, x):
        return self.rotation.curvature(self.check_x(x))


def E_from_curvature(ups):
    ups = np.asarray(ups, dtype=float)
    H = hat_batch(ups)
    out = np.zeros(ups.shape[:-1] + (6, 6))
    out[..., :3, :3] = H
    out[..., 3:, 3:] = H
    out[..., 3:, :3] = hat(E1)
    return out


def assemble_E(params, x):
    return E_from_curvature(params.curvature(x))


def A_from(Minv, Cinv):
    out = np.zeros(Minv.shape[:-2] + (12, 12))
    out[..., :6, 6:] = -Minv
    out[..., 6:, :6] = -Cinv
    return out


def Bbar_from(Minv, Cinv, E):
    out = np.zeros(Minv.shape[:-2] + (12, 12))
    out[..., :6, 6:] = -Minv @ E
    out[..., 6:, :6] = Cinv @ np.swapaxes(E, -1, -2)
    return out


def assemble_A(params, x):
    return A_from(np.linalg.inv(params.M(x)), np.linalg.inv(params.C(x)))


def assemble_Bbar(params, x):
    return Bbar_from(np.linalg.inv(params.M(x)), np.linalg.inv(params.C(x)), assemble_E(params, x))


def energy_matrix(params, x):
    M, C = params.M(x), params.C(x)
    out = np.zeros(M.shape[:-2] + (12, 12))
    out[..., :6, :6] = M
    out[..., 6:, 6:] = C
    return out


def _cross(a, b):
    return np.cross(a, b)


def gbar_from(M, C, u):
    """Quadratic source for stacked states ``u[..., 12]`` and matching
    stacked ``M``, ``C``."""
    u = np.asarray(u, dtype=float)
    u1, u2, u3, u4 = u[..., 0:3], u[..., 3:6], u[..., 6:9], u[..., 9:12]
    p = np.einsum("...ij,...j->...i", M, u[..., :6])
    q = np.einsum("...ij,...j->...i", C, u[..., 6:])
    p1, p2, q1, q2 = p[..., :3], p[..., 3:], q[..., :3], q[..., 3:]
    top = np.concatenate([
        _cross(u2, p1) + _cross(u3, q2),
        _cross(u1, p1) + _cross(u2, p2) + _cross(u3, q1) + _cross(u4, q2),
    ], axis=-1)
    bot = np.concatenate([
        _cross(u2, q1) + _cross(u1, q2),
        _cross(u2, q2),
    ], axis=-1)
    return -np.concatenate([
        np.linalg.solve(M, top[..., None])[..., 0],
        np.linalg.solve(C, bot[..., None])[..., 0],
    ], axis=-1)


def gbar_eval(params, x, u):
    return gbar_from(params.M(x), params.C(x), u)


def gbar_quadratic_forms(params, x):
    """Symmetric matrices G^m with gbar(x, u)_m = <u, G^m u>, built by
    polarization of the bilinear map b(u, w) = -Q^-1 G(u) Q w."""
    M, C = params.M(x), params.C(x)
    if M.ndim != 2:
        raise OutOfDomain("gbar_quadratic_forms expects a scalar position")
    Q = np.zeros((12, 12))
    Q[:6, :6], Q[6:, 6:] = M, C
    Qinv = np.linalg.inv(Q)
    I = np.eye(12)
    # bilin[m, j, k] = b(e_j, e_k)_m
    bilin = np.empty((12, 12, 12))
    for j in range(12):
        Gj = _G_matrix(I[j])
        bilin[:, j, :] = -Qinv @ Gj @ Q
    return 0.5 * (bilin + np.swapaxes(bilin, 1, 2))


def _G_matrix(u):
    h = [hat(u[3 * k:3 * k + 3]) for k in range(4)]
    Z = np.zeros((3, 3))
    return np.block([
        [h[1], Z, Z, h[2]],
        [h[0], h[1], h[2], h[3]],
        [Z, Z, h[1], h[0]],
        [Z, Z, Z, h[1]],
    ])
