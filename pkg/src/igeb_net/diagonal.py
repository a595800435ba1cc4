"""Characteristic (Riemann invariant) form of each beam and the reflection
matrices that express outgoing information at a node in terms of incoming
information.

For Theta = C^-1/2 M^-1 C^-1/2 = U^T D^2 U (D ascending),

    L = [[U C^-1/2,  D U C^1/2],
         [U C^-1/2, -D U C^1/2]],      L A L^-1 = diag(-D, D),

and r = L y splits into r- (speeds -D) and r+ (speeds +D).
"""

from dataclasses import dataclass

import numpy as np

from .beam import A_from, Bbar_from, E_from_curvature, gbar_from
from .errors import EigenvalueCrossing, GridMismatch, SingularCoupling, SingularSystem
from .linalg import block_diag, spd_power, spd_power_batch, sym, sym_eig6
from .network import CondKind, NodeKind, Rbar

GAP_TOL = 1e-8
FD_REL_STEP = 1e-5


def compute_theta(params, x):
    Cis = spd_power(params.C(x), -0.5)
    return sym(Cis @ np.linalg.inv(params.M(x)) @ Cis)


def _theta_stack(M, C):
    Cs = spd_power_batch(C, 0.5)
    Cis = spd_power_batch(C, -0.5)
    theta = sym(Cis @ np.linalg.inv(M) @ Cis)
    return theta, Cs, Cis


def _diag_permutation(theta):
    """Sort permutation if every Theta is diagonal and the ascending order
    of its diagonal is the same at every point, else None."""
    scale = np.max(np.abs(theta))
    off = theta - np.einsum("nii->ni", theta)[..., None] * np.eye(6)
    if np.max(np.abs(off)) > 1e-13 * scale:
        return None
    diag = np.einsum("nii->ni", theta)
    # take the ordering where the entries are most spread out; ties elsewhere
    # are compatible with any ordering
    spread = np.min(np.diff(np.sort(diag, axis=-1), axis=-1), axis=-1)
    perm = np.argsort(diag[int(np.argmax(spread))], kind="stable")
    if np.any(np.diff(diag[:, perm], axis=-1) < 0):
        return None
    return perm


def _eig_stack(theta, ref=None, perm=None):
    """Return (U, D) with Theta = U^T D^2 U. With ``ref`` given, eigenvector
    signs follow the reference U instead of the largest-entry rule."""
    n = theta.shape[0]
    if perm is not None:
        U = np.broadcast_to(np.eye(6)[perm], (n, 6, 6)).copy()
        D = np.sqrt(np.einsum("nii->ni", theta)[:, perm])
        return U, D
    U = np.empty_like(theta)
    D = np.empty((n, 6))
    prev = ref
    for k in range(n):
        e = sym_eig6(theta[k])
        V = e.vectors
        if prev is not None:
            s = np.sign(np.einsum("ij,ji->i", prev, V))
            s[s == 0] = 1.0
            V = V * s
        U[k] = V.T
        D[k] = np.sqrt(e.values)
        if ref is None:
            prev = U[k]
    return U, D


def _check_gaps(theta, what):
    lam = np.linalg.eigvalsh(theta)
    gap = np.min(np.diff(lam, axis=-1) / lam[:, -1:], axis=-1)
    k = int(np.argmin(gap))
    if gap[k] <= GAP_TOL:
        raise EigenvalueCrossing(
            f"{what}: eigenvalues of Theta are not separated (relative gap {gap[k]:.2e} at sample {k}); "
            "varying parameter fields need distinct eigenvalues or a diagonal Theta with fixed ordering")


def _L_blocks(U, D, Cs, Cis):
    UCi = U @ Cis
    DUC = D[..., :, None] * (U @ Cs)
    L = np.zeros(U.shape[:-2] + (12, 12))
    L[..., :6, :6] = UCi
    L[..., 6:, :6] = UCi
    L[..., :6, 6:] = DUC
    L[..., 6:, 6:] = -DUC
    Ut = np.swapaxes(U, -1, -2)
    CsUt = Cs @ Ut
    CiUtDi = (Cis @ Ut) / D[..., None, :]
    Linv = np.zeros_like(L)
    Linv[..., :6, :6] = 0.5 * CsUt
    Linv[..., :6, 6:] = 0.5 * CsUt
    Linv[..., 6:, :6] = 0.5 * CiUtDi
    Linv[..., 6:, 6:] = -0.5 * CiUtDi
    return L, Linv


@dataclass
class Diagonalization:
    xs: np.ndarray
    M: np.ndarray
    C: np.ndarray
    Theta: np.ndarray
    U: np.ndarray
    D: np.ndarray
    L: np.ndarray
    Linv: np.ndarray
    A: np.ndarray
    Bbar: np.ndarray
    B: np.ndarray
    Csqrt: np.ndarray
    Cisqrt: np.ndarray

    @property
    def speeds(self):
        """Diagonal entries of diag(-D, D) per point."""
        return np.concatenate([-self.D, self.D], axis=-1)

    def g(self, r, idx=slice(None)):
        """Source in Riemann variables, L gbar(L^-1 r), at points ``idx``."""
        Linv = self.Linv[idx]
        y = np.einsum("nij,nj->ni", Linv, r)
        gb = gbar_from(self.M[idx], self.C[idx], y)
        return np.einsum("nij,nj->ni", self.L[idx], gb)


def _linv_at(params, xs, ref_U, perm):
    M, C = params.M(xs), params.C(xs)
    theta, Cs, Cis = _theta_stack(M, C)
    if perm is not None:
        U, D = _eig_stack(theta, perm=perm)
    else:
        U = np.empty_like(theta)
        D = np.empty((len(xs), 6))
        for k in range(len(xs)):
            U[k:k + 1], D[k:k + 1] = _eig_stack(theta[k:k + 1], ref=ref_U[k])
    return _L_blocks(U, D, Cs, Cis)[1]


def build_diagonalization(params, grid):
    xs = params.check_x(np.asarray(grid, dtype=float))
    if xs.ndim != 1 or len(xs) < 1 or np.any(np.diff(xs) <= 0):
        raise GridMismatch("grid must be a strictly increasing 1-D array")
    M, C = params.M(xs), params.C(xs)
    Minv, Cinv = np.linalg.inv(M), np.linalg.inv(C)
    theta, Cs, Cis = _theta_stack(M, C)
    n = len(xs)
    if params.is_constant:
        U1, D1 = _eig_stack(theta[:1])
        U = np.repeat(U1, n, axis=0)
        D = np.repeat(D1, n, axis=0)
        dLinv = np.zeros((n, 12, 12))
        L, Linv = _L_blocks(U, D, Cs, Cis)
    else:
        # probe between grid points too so a crossing cannot hide between samples
        probe = np.linspace(0.0, params.length, max(257, 2 * n + 1))
        ptheta = _theta_stack(params.M(probe), params.C(probe))[0]
        perm = _diag_permutation(np.concatenate([ptheta, theta]))
        if perm is None:
            _check_gaps(ptheta, "mass/flexibility field")
            _check_gaps(theta, "mass/flexibility field")
        U, D = _eig_stack(theta, perm=perm)
        L, Linv = _L_blocks(U, D, Cs, Cis)
        dLinv = _dLinv(params, xs, U, perm)
    A = A_from(Minv, Cinv)
    Bbar = Bbar_from(Minv, Cinv, E_from_curvature(params.curvature(xs)))
    B = L @ Bbar @ Linv + L @ A @ dLinv
    return Diagonalization(xs=xs, M=M, C=C, Theta=theta, U=U, D=D, L=L, Linv=Linv,
                           A=A, Bbar=Bbar, B=B, Csqrt=Cs, Cisqrt=Cis)


def _dLinv(params, xs, U, perm):
    """d(L^-1)/dx by second-order differences of the parameter fields,
    one-sided at the beam ends."""
    ell = params.length
    h = FD_REL_STEP * ell
    out = np.empty((len(xs), 12, 12))
    left = xs - h < 0
    right = xs + h > ell
    mid = ~(left | right)
    if np.any(mid):
        xm = xs[mid]
        out[mid] = (_linv_at(params, xm + h, U[mid], perm) - _linv_at(params, xm - h, U[mid], perm)) / (2 * h)
    if np.any(left):
        xl = xs[left]
        f0 = _linv_at(params, xl, U[left], perm)
        f1 = _linv_at(params, xl + h, U[left], perm)
        f2 = _linv_at(params, xl + 2 * h, U[left], perm)
        out[left] = (-3 * f0 + 4 * f1 - f2) / (2 * h)
    if np.any(right):
        xr = xs[right]
        f0 = _linv_at(params, xr, U[right], perm)
        f1 = _linv_at(params, xr - h, U[right], perm)
        f2 = _linv_at(params, xr - 2 * h, U[right], perm)
        out[right] = (3 * f0 - 4 * f1 + f2) / (2 * h)
    return out


def _check_grid(d, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (len(d.xs), 12):
        raise GridMismatch(f"state shape {arr.shape} does not match grid of {len(d.xs)} points")
    return arr


def riemann_forward(d, y):
    return np.einsum("nij,nj->ni", d.L, _check_grid(d, y))


def riemann_inverse(d, r):
    return np.einsum("nij,nj->ni", d.Linv, _check_grid(d, r))


@dataclass
class NodeCoupling:
    node: int
    kind: NodeKind
    condition: object
    edges: list          # incident edges, ending edge first
    gammas: list
    sigmas: list
    Kbar: np.ndarray
    Dbars: list          # endpoint speeds D per incident edge
    alpha: np.ndarray = None
    beta: np.ndarray = None
    Bn: np.ndarray = None

    @property
    def k(self):
        return len(self.gammas) if self.kind is NodeKind.MULTIPLE else 1

    @property
    def G(self):
        return block_diag(*self.gammas)

    @property
    def sigma_sum(self):
        return sum(self.sigmas)


def _endpoint(d, where):
    if where == "start":
        return 0
    return len(d.xs) - 1


def _gamma_sigma(beam, d, idx):
    R = Rbar(beam.R(d.xs[idx]))
    Ut = d.U[idx].T
    gamma = R @ d.Csqrt[idx] @ Ut
    sigma = sym(R @ d.Cisqrt[idx] @ Ut @ np.diag(1.0 / d.D[idx]) @ d.U[idx] @ d.Cisqrt[idx] @ R.T)
    return gamma, sigma


def build_nodal_coupling(scenario, diags):
    """Per-node gamma, sigma, Kbar, alpha, beta and reflection matrix. Each
    diagonalization grid must contain both beam ends."""
    t = scenario.topology
    for i, d in enumerate(diags, start=1):
        ell = scenario.beam(i).length
        if abs(d.xs[0]) > 1e-12 * ell or abs(d.xs[-1] - ell) > 1e-12 * ell:
            raise GridMismatch(f"diagonalization of edge {i} must include both beam ends")
    out = {}
    for n in t.nodes:
        cond = scenario.condition(n)
        incident = t.incident(n) if n != 0 else [(1, "start")]
        gammas, sigmas, Ds = [], [], []
        for i, where in incident:
            d = diags[i - 1]
            idx = _endpoint(d, where)
            gm, sg = _gamma_sigma(scenario.beam(i), d, idx)
            gammas.append(gm)
            sigmas.append(sg)
            Ds.append(d.D[idx].copy())
        i0, where0 = incident[0]
        b0 = scenario.beam(i0)
        R0 = Rbar(b0.R(0.0 if where0 == "start" else b0.length))
        Kbar = sym(R0 @ cond.K @ R0.T)
        nc = NodeCoupling(n, t.kind(n), cond, [i for i, _ in incident], gammas, sigmas, Kbar, Ds)
        if nc.kind is NodeKind.MULTIPLE:
            g0 = gammas[0]
            nc.alpha = np.hstack([(sigmas[0] + Kbar) @ g0] + [s @ g for s, g in zip(sigmas[1:], gammas[1:])])
            nc.beta = np.hstack([(sigmas[0] - Kbar) @ g0] + [s @ g for s, g in zip(sigmas[1:], gammas[1:])])
        else:
            nc.alpha = (sigmas[0] + Kbar) @ gammas[0]
            nc.beta = (sigmas[0] - Kbar) @ gammas[0]
        nc.Bn = build_Bn(nc)
        out[n] = nc
    return out


def build_Bn(nc):
    if nc.kind is NodeKind.SIMPLE:
        if nc.condition.kind is CondKind.FREE:
            return np.eye(6)
        if nc.condition.kind is CondKind.CLAMPED:
            return -np.eye(6)
        try:
            return np.linalg.solve(nc.alpha, nc.beta)
        except np.linalg.LinAlgError as exc:
            raise SingularCoupling(f"node {nc.node}: (sigma + Kbar) gamma is singular") from exc
    k = nc.k
    G = nc.G
    try:
        SKinv = np.linalg.inv(nc.sigma_sum + nc.Kbar)
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise SingularCoupling(f"node {nc.node}: coupling matrices are singular") from exc
    # diag(S)^-1 Ibb diag(sigma_i) has block (a, b) = S^-1 sigma_b
    row = np.hstack([SKinv @ s for s in nc.sigmas])
    inner = np.vstack([row] * k)
    return 2.0 * Ginv @ inner @ G - np.eye(6 * k)


def nodal_system(nc):
    """Matrices (A_n G_n, B_n G_n) of the raw continuity plus Kirchhoff
    system A_n G_n r_out = B_n G_n r_in at a multiple node."""
    k = nc.k
    a = nc.sigmas[0] + nc.Kbar
    d = nc.sigmas[0] - nc.Kbar
    b = np.hstack(nc.sigmas[1:])
    c = -np.vstack([np.eye(6)] * (k - 1))
    I = np.eye(6 * (k - 1))
    An = np.block([[a, b], [c, I]])
    Bn = np.block([[d, b], [-c, -I]])
    G = nc.G
    return An @ G, Bn @ G


def solve_nodal_oracle(nc, r_in):
    if nc.kind is not NodeKind.MULTIPLE:
        raise ValueError("the nodal oracle applies to multiple nodes")
    lhs, rhs = nodal_system(nc)
    try:
        return np.linalg.solve(lhs, rhs @ np.asarray(r_in, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"node {nc.node}: nodal system is singular") from exc


def transparent_gain(params, endpoint):
    x = 0.0 if endpoint in ("start", 0, 0.0) else params.length
    C = params.C(x)
    Cs = spd_power(C, 0.5)
    Cis = spd_power(C, -0.5)
    return sym(Cis @ spd_power(Cs @ params.M(x) @ Cs, 0.5) @ Cis)
