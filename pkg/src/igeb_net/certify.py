"""Quadratic Lyapunov certificates for beam networks.

The ansatz is Qbar = rho * diag(M, C) + w(x) [[0, W], [W^T, 0]] per beam, with
an increasing exponential weight w and one of three coupling matrices W:

    "514": W = I
    "515": W = M C
    "516": W = C^-1/2 (C^1/2 M C^1/2)^1/2 C^1/2    (theta = I)

A certificate checks, on a verification grid, that Qbar is SPD, Qbar A is
symmetric, Sbar = d/dx(Qbar A) - Qbar Bbar - Bbar^T Qbar is negative
definite, and that the boundary terms are nonpositive.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .beam import Bbar_from, E_from_curvature, A_from
from .diagonal import build_diagonalization, build_nodal_coupling
from .errors import BadEndpoints, InfeasibleWeights, InvalidCertificate
from .linalg import Kind, definiteness, spd_power, spd_power_batch, sym
from .network import CondKind, NodeKind

W_CHOICES = ("514", "515", "516")
DEFAULT_GRID = 257
RHO_SLACK = 1.1
ETA_FLOOR = 1e-6
FD_REL_STEP = 1e-5


def _threads():
    try:
        return max(1, int(os.environ.get("IGEB_NET_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# coupling matrix W and derived quantities

def W_from(M, C, choice):
    if choice == "514":
        return np.broadcast_to(np.eye(6), M.shape).copy()
    if choice == "515":
        return M @ C
    if choice == "516":
        Cs = spd_power_batch(C, 0.5)
        Cis = spd_power_batch(C, -0.5)
        return Cis @ spd_power_batch(Cs @ M @ Cs, 0.5) @ Cs
    raise ValueError(f"unknown W choice {choice!r}; expected one of {W_CHOICES}")


def build_W(params, choice, x):
    return W_from(params.M(x), params.C(x), choice)


def lambdas_from(M, C, W):
    LI = sym(W @ np.linalg.inv(C))
    LII = sym(np.swapaxes(W, -1, -2) @ np.linalg.inv(M))
    return LI, LII


def lambdas(params, choice, x):
    M, C = params.M(x), params.C(x)
    return lambdas_from(M, C, W_from(M, C, choice))


def theta_from(M, C, W):
    Mis = spd_power_batch(M, -0.5)
    return sym(Mis @ W @ np.linalg.inv(C) @ np.swapaxes(W, -1, -2) @ Mis)


def _d_dx(fn, params, xs):
    """Second-order finite difference of a field built from M, C, curvature;
    zero for constant mass and flexibility."""
    ell = params.length
    h = FD_REL_STEP * ell
    lo = np.clip(xs - h, 0.0, ell)
    hi = np.clip(xs + h, 0.0, ell)
    fl, fh = fn(lo), fn(hi)
    out = (fh - fl) / (hi - lo)[:, None, None]
    # one-sided second-order stencils at the ends
    for k in np.where((xs - h < 0) | (xs + h > ell))[0]:
        x = xs[k]
        s = 1.0 if x - h < 0 else -1.0
        f0, f1, f2 = fn(np.array([x, x + s * h, x + 2 * s * h]))
        out[k] = s * (-3 * f0 + 4 * f1 - f2) / (2 * h)
    return out


# weight functions

class WeightKind(str, Enum):
    EXP_NEG = "ExpNeg"
    EXP_POS = "ExpPos"


@dataclass(frozen=True)
class WeightFunction:
    kind: WeightKind
    a: float
    b: float
    eta: float
    length: float

    @property
    def eps(self):
        if self.kind is WeightKind.EXP_NEG:
            return (self.b - self.a) / self.length
        return np.exp(-self.eta * self.length) * (self.b - self.a) / self.length

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e, a, b = self.eps, self.a, self.b
        if self.kind is WeightKind.EXP_NEG:
            return np.exp(-self.eta * x) * (a - b + e * x) + b
        return a + np.exp(self.eta * x) * e * x

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        e, a, b, eta = self.eps, self.a, self.b, self.eta
        if self.kind is WeightKind.EXP_NEG:
            return np.exp(-eta * x) * (e - eta * (a - b + e * x))
        return np.exp(eta * x) * e * (1.0 + eta * x)

    def margin(self, x):
        """q' - eta (b - q) for ExpNeg, q' - eta (q - a) for ExpPos."""
        q, dq = self(x), self.derivative(x)
        if self.kind is WeightKind.EXP_NEG:
            return dq - self.eta * (self.b - q)
        return dq - self.eta * (q - self.a)

    @property
    def sign(self):
        return -1.0 if self.kind is WeightKind.EXP_NEG else 1.0

    def to_dict(self):
        return {"kind": self.kind.value, "a": self.a, "b": self.b, "eta": self.eta, "length": self.length}

    @classmethod
    def from_dict(cls, d):
        return build_weight(d["kind"], d["a"], d["b"], d["eta"], d["length"])


def build_weight(kind, a, b, eta, length):
    kind = WeightKind(kind)
    a, b, eta, length = float(a), float(b), float(eta), float(length)
    if not (eta > 0 and length > 0):
        raise BadEndpoints("weight needs eta > 0 and length > 0")
    if kind is WeightKind.EXP_NEG and not (a < b <= 0):
        raise BadEndpoints(f"ExpNeg weight needs a < b <= 0, got a={a}, b={b}")
    if kind is WeightKind.EXP_POS and not (0 <= a < b):
        raise BadEndpoints(f"ExpPos weight needs 0 <= a < b, got a={a}, b={b}")
    return WeightFunction(kind, a, b, eta, length)


# per-beam grid data

@dataclass
class BeamFields:
    xs: np.ndarray
    M: np.ndarray
    C: np.ndarray
    W: np.ndarray
    LI: np.ndarray
    LII: np.ndarray
    Xi_prime: np.ndarray      # Sbar = -w' Lambda + w Xi'
    theta: np.ndarray
    A: np.ndarray
    Bbar: np.ndarray


def beam_fields(params, choice, xs):
    M, C = params.M(xs), params.C(xs)
    W = W_from(M, C, choice)
    LI, LII = lambdas_from(M, C, W)
    E = E_from_curvature(params.curvature(xs))
    Et = np.swapaxes(E, -1, -2)
    if params.is_constant:
        dLI = np.zeros_like(LI)
        dLII = np.zeros_like(LII)
    else:
        dLI = _d_dx(lambda x: lambdas(params, choice, x)[0], params, xs)
        dLII = _d_dx(lambda x: lambdas(params, choice, x)[1], params, xs)
    n = len(xs)
    Xi = np.zeros((n, 12, 12))
    Xi[:, :6, :6] = -LI @ Et - E @ LI - dLI
    Xi[:, 6:, 6:] = LII @ E + Et @ LII - dLII
    Minv, Cinv = np.linalg.inv(M), np.linalg.inv(C)
    return BeamFields(xs, M, C, W, LI, LII, sym(Xi), theta_from(M, C, W),
                      A_from(Minv, Cinv), Bbar_from(Minv, Cinv, E))


def qbar_from(fields, rho, w):
    n = len(fields.xs)
    Q = np.zeros((n, 12, 12))
    Q[:, :6, :6] = rho * fields.M
    Q[:, 6:, 6:] = rho * fields.C
    Q[:, :6, 6:] = w[:, None, None] * fields.W
    Q[:, 6:, :6] = w[:, None, None] * np.swapaxes(fields.W, -1, -2)
    return Q


def assemble_S_bar(params, choice, weight, x, rho=1.0):
    """Return (Sbar, Lambda, Xi) at positions x via the split
    Sbar = -w' Lambda + |w| Xi."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    f = beam_fields(params, choice, xs)
    w = _weight_values(weight, xs)
    dw = _weight_derivs(weight, xs)
    Lam = np.zeros((len(xs), 12, 12))
    Lam[:, :6, :6] = f.LI
    Lam[:, 6:, 6:] = f.LII
    sgn = np.sign(w) if weight is not None else np.zeros_like(w)
    Xi = sgn[:, None, None] * f.Xi_prime
    S = -dw[:, None, None] * Lam + np.abs(w)[:, None, None] * Xi
    if np.ndim(x) == 0:
        return S[0], Lam[0], Xi[0]
    return S, Lam, Xi


def assemble_S_bar_direct(params, choice, weight, x, rho=1.0):
    """Sbar straight from its definition, d/dx(Qbar A) by finite
    differences; used to cross-check the split form."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))

    def QA(xx):
        f = beam_fields(params, choice, xx)
        return qbar_from(f, rho, _weight_values(weight, xx)) @ f.A

    dQA = _d_dx_any(QA, params.length, xs)
    f = beam_fields(params, choice, xs)
    Q = qbar_from(f, rho, _weight_values(weight, xs))
    QB = Q @ f.Bbar
    S = dQA - QB - np.swapaxes(QB, -1, -2)
    return S[0] if np.ndim(x) == 0 else S


def _d_dx_any(fn, ell, xs):
    h = FD_REL_STEP * ell
    out = np.empty((len(xs), 12, 12))
    for k, x in enumerate(xs):
        if x - h >= 0 and x + h <= ell:
            f = fn(np.array([x - h, x + h]))
            out[k] = (f[1] - f[0]) / (2 * h)
        else:
            s = 1.0 if x - h < 0 else -1.0
            f0, f1, f2 = fn(np.array([x, x + s * h, x + 2 * s * h]))
            out[k] = s * (-3 * f0 + 4 * f1 - f2) / (2 * h)
    return out


def _weight_values(weight, xs):
    return np.zeros(len(xs)) if weight is None else np.asarray(weight(xs), dtype=float)


def _weight_derivs(weight, xs):
    return np.zeros(len(xs)) if weight is None else np.asarray(weight.derivative(xs), dtype=float)


# sign requirements and weight drafting

@dataclass
class BeamRequirements:
    edge: int
    start_nonneg: list = field(default_factory=list)   # reasons w(0) >= 0 is needed
    end_nonpos: list = field(default_factory=list)     # reasons w(length) <= 0 is needed
    controlled_start: object = None                    # feedback matrix K at x = 0
    controlled_end: object = None                      # feedback matrix K at x = length

    @property
    def conflict(self):
        return bool(self.start_nonneg and self.end_nonpos)


def sign_requirements(scenario):
    t = scenario.topology
    out = []
    for i in range(1, scenario.N + 1):
        req = BeamRequirements(i)
        p = t.parent(i)
        if t.kind(p) is NodeKind.MULTIPLE:
            req.start_nonneg.append(f"multiple node {p}")
        else:
            c = scenario.condition(p)
            if c.controlled:
                req.controlled_start = c.K
            else:
                req.start_nonneg.append(f"{c.kind.value} node {p}")
        if t.kind(i) is NodeKind.MULTIPLE:
            req.end_nonpos.append(f"multiple node {i}")
        else:
            c = scenario.condition(i)
            if c.controlled:
                req.controlled_end = c.K
            else:
                req.end_nonpos.append(f"{c.kind.value} node {i}")
        out.append(req)
    return out


def removed_control_diagnostic(scenario):
    """Explain why the exponential-weight ansatz cannot certify the network
    when some beam needs both w(0) >= 0 and w(length) <= 0 while w must
    increase. Infeasibility of the ansatz is not an instability proof."""
    reqs = sign_requirements(scenario)
    conflicts = []
    for r in reqs:
        if r.conflict:
            conflicts.append({
                "edge": r.edge,
                "requires": [f"w_{r.edge}(0) >= 0 ({', '.join(r.start_nonneg)})",
                             f"w_{r.edge}(length) <= 0 ({', '.join(r.end_nonpos)})",
                             f"w_{r.edge} increasing"],
            })
    node0 = scenario.condition(0)
    return {
        "applicable": not node0.controlled or bool(conflicts),
        "node0": node0.kind.value,
        "feasible_within_ansatz": not conflicts,
        "conflicts": conflicts,
        "note": ("the weight of each listed edge would have to be increasing, nonnegative at x = 0 "
                 "and nonpositive at its end; no such weight exists, so the ansatz is infeasible. "
                 "This does not show instability.") if conflicts else "",
    }


@dataclass
class BeamConstants:
    edge: int
    sign: float
    C_Lambda: float
    C_Xi: float
    C_theta: float
    eta: float
    C_mu_start: float = None
    C_mu_end: float = None


def _C_mu(K, LI, LII):
    Ks = spd_power(K, 0.5)
    Kis = spd_power(K, -0.5)
    return float(np.linalg.eigvalsh(sym(Kis @ LI @ Kis + Ks @ LII @ Ks))[-1])


def beam_constants(params, choice, xs, sign, req):
    f = beam_fields(params, choice, xs)
    lamI = np.linalg.eigvalsh(f.LI)
    lamII = np.linalg.eigvalsh(f.LII)
    C_Lambda = float(min(lamI[:, 0].min(), lamII[:, 0].min()))
    C_Xi = max(0.0, float(np.linalg.eigvalsh(sign * f.Xi_prime)[:, -1].max()))
    C_theta = float(np.linalg.eigvalsh(f.theta)[:, -1].max())
    eta = max(C_Xi / C_Lambda, ETA_FLOOR)
    bc = BeamConstants(req.edge, sign, C_Lambda, C_Xi, C_theta, eta)
    if req.controlled_start is not None:
        bc.C_mu_start = _C_mu(req.controlled_start, f.LI[0], f.LII[0])
    if req.controlled_end is not None:
        bc.C_mu_end = _C_mu(req.controlled_end, f.LI[-1], f.LII[-1])
    return bc, f


@dataclass
class AnsatzDraft:
    w_choice: str
    weights: list
    constants: list
    requirements: list
    grid: int


def draft_ansatz(scenario, w_choice="516", grid=DEFAULT_GRID, scale=1.0):
    """Pick the weight family per beam from its sign requirements and build
    exponential weights with eta = C_Xi / C_Lambda."""
    if w_choice not in W_CHOICES:
        raise ValueError(f"unknown W choice {w_choice!r}")
    reqs = sign_requirements(scenario)

    def one(req):
        b = scenario.beam(req.edge)
        xs = np.linspace(0.0, b.length, grid)
        sign = -1.0 if (req.end_nonpos and not req.start_nonneg) else 1.0
        bc, _ = beam_constants(b, w_choice, xs, sign, req)
        if sign < 0:
            w = build_weight(WeightKind.EXP_NEG, -scale, 0.0, bc.eta, b.length)
        else:
            w = build_weight(WeightKind.EXP_POS, 0.0, scale, bc.eta, b.length)
        return w, bc

    res = _pmap(one, reqs)
    return AnsatzDraft(w_choice, [r[0] for r in res], [r[1] for r in res], reqs, grid)


def choose_rho(scenario, draft):
    """Smallest rho meeting |w| < rho C_theta^-1/2 on every beam and
    |w| < rho / C_mu at controlled ends, times a 10% slack."""
    need = 0.0
    for w, bc, req in zip(draft.weights, draft.constants, draft.requirements):
        b = scenario.beam(req.edge)
        xs = np.linspace(0.0, b.length, draft.grid)
        wv = _weight_values(w, xs)
        if np.any(wv > 0) and np.any(wv < 0):
            raise InfeasibleWeights(f"edge {req.edge}: weight changes sign")
        need = max(need, float(np.max(np.abs(wv))) * np.sqrt(bc.C_theta))
        if bc.C_mu_start is not None:
            need = max(need, abs(float(wv[0])) * bc.C_mu_start)
        if bc.C_mu_end is not None:
            need = max(need, abs(float(wv[-1])) * bc.C_mu_end)
    return 1.0 if need == 0.0 else RHO_SLACK * need


# certificate

@dataclass
class Check:
    name: str
    where: str
    margin: float
    strict: bool = True

    @property
    def passed(self):
        return self.margin > 0 if self.strict else self.margin >= 0

    def to_dict(self):
        return {"name": self.name, "where": self.where, "margin": float(self.margin),
                "strict": self.strict, "passed": bool(self.passed)}


@dataclass
class Certificate:
    rho: float
    w_choice: str
    weights: list
    constants: list
    checks: list
    beta: float
    C4: list
    Q_eig_max: float
    Q_eig_min: float
    mn_reports: list
    diagnostic: dict
    scenario: object = None
    scenario_hash: str = ""
    grid: int = DEFAULT_GRID
    notes: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def valid(self):
        return all(c.passed for c in self.checks)

    @property
    def verdict(self):
        return "valid" if self.valid else "invalid"

    def qbar(self, i, xs):
        xs = np.asarray(xs, dtype=float)
        f = beam_fields(self.scenario.beam(i), self.w_choice, xs)
        return qbar_from(f, self.rho, _weight_values(self.weights[i - 1], xs))

    def lyapunov_value(self, solver, state):
        return lyapunov_value(self, solver, state)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "scenario_hash": self.scenario_hash,
            "verdict": self.verdict,
            "ansatz": {"rho": self.rho, "w_choice": self.w_choice, "grid": self.grid,
                       "weights": [None if w is None else w.to_dict() for w in self.weights]},
            "constants": [asdict(c) for c in self.constants],
            "beta": self.beta,
            "C4": self.C4,
            "Qbar_eig_range": [self.Q_eig_min, self.Q_eig_max],
            "checks": [c.to_dict() for c in self.checks],
            "nodes": [m.to_dict() for m in self.mn_reports],
            "diagnostic": self.diagnostic,
            "notes": self.notes,
        }


def check_certificate(scenario, rho="auto", w_choice="516", grid=DEFAULT_GRID, weights=None,
                      scenario_hash=""):
    draft = draft_ansatz(scenario, w_choice, grid)
    if weights is not None:
        draft.weights = list(weights)
    if rho == "auto" or rho is None:
        rho = choose_rho(scenario, draft)
    rho = float(rho)

    def per_beam(k):
        req, bc, w = draft.requirements[k], draft.constants[k], draft.weights[k]
        b = scenario.beam(req.edge)
        xs = np.linspace(0.0, b.length, grid)
        f = beam_fields(b, w_choice, xs)
        wv, dw = _weight_values(w, xs), _weight_derivs(w, xs)
        Q = qbar_from(f, rho, wv)
        QA = Q @ f.A
        Lam = np.zeros((grid, 12, 12))
        Lam[:, :6, :6] = f.LI
        Lam[:, 6:, 6:] = f.LII
        S = -dw[:, None, None] * Lam + wv[:, None, None] * f.Xi_prime
        qe = np.linalg.eigvalsh(Q)
        se = np.linalg.eigvalsh(sym(S))
        scale = max(1.0, float(np.max(np.abs(QA))))
        where = f"edge {req.edge}"
        checks = [
            Check("(i) Qbar positive definite", where, float(qe[:, 0].min())),
            Check("(ii) Qbar A symmetric", where,
                  1e-10 * scale - float(np.max(np.abs(QA - np.swapaxes(QA, -1, -2))))),
            Check("(iii) Sbar negative definite", where, -float(se[:, -1].max())),
            Check("weight inequality w' > eta |w|", where,
                  float(np.min(dw - bc.eta * np.abs(wv)))),
        ]
        if np.any(wv > 0) and np.any(wv < 0):
            checks.append(Check("weight has one sign", where, -1.0))
        for end, x_idx, K, reasons, sgn in (
                ("start", 0, req.controlled_start, req.start_nonneg, 1.0),
                ("end", -1, req.controlled_end, req.end_nonpos, -1.0)):
            if K is not None:
                mu = -2 * rho * K + abs(wv[x_idx]) * f.LI[x_idx] + abs(wv[x_idx]) * K @ f.LII[x_idx] @ K
                checks.append(Check(f"(iv) mu negative semidefinite at {end}", where,
                                    -float(np.linalg.eigvalsh(sym(mu))[-1]), strict=False))
            for r in reasons:
                label = "w(0) >= 0" if end == "start" else "w(length) <= 0"
                checks.append(Check(f"(iv) sign {label} ({r})", where, sgn * float(wv[x_idx]), strict=False))
        return checks, float(se[:, -1].max()), float(qe[:, -1].max()), float(qe[:, 0].min())

    results = _pmap(per_beam, range(scenario.N))
    checks = [c for r in results for c in r[0]]
    C4 = [r[1] for r in results]
    qmax = max(r[2] for r in results)
    qmin = min(r[3] for r in results)
    beta = -max(C4) / (2.0 * qmax)
    cert = Certificate(rho=rho, w_choice=w_choice, weights=draft.weights, constants=draft.constants,
                       checks=checks, beta=beta, C4=C4, Q_eig_max=qmax, Q_eig_min=qmin,
                       mn_reports=[], diagnostic=removed_control_diagnostic(scenario),
                       scenario=scenario, scenario_hash=scenario_hash, grid=grid)
    cert.notes.append("beta is the linearized rate: the quadratic source term is not included")
    cert.notes.append(f"pointwise properties verified on {grid} uniform points per beam")
    try:
        diags = [build_diagonalization(scenario.beam(i), np.linspace(0.0, scenario.beam(i).length, 2))
                 for i in range(1, scenario.N + 1)]
        coupling = build_nodal_coupling(scenario, diags)
        cert.mn_reports = build_Mn_reports(scenario, coupling, rho, draft.weights, w_choice)
    except Exception as exc:  # diagnostics only; the verdict does not depend on them
        cert.notes.append(f"nodal matrix reports unavailable: {exc}")
    return cert


def certificate_from_dict(doc, scenario, scenario_hash=None):
    """Rebuild a certificate from its JSON form and re-verify it."""
    if scenario_hash is not None and doc.get("scenario_hash") and doc["scenario_hash"] != scenario_hash:
        raise InvalidCertificate("certificate was issued for a different scenario")
    try:
        ans = doc["ansatz"]
        weights = [None if w is None else WeightFunction.from_dict(w) for w in ans["weights"]]
        return check_certificate(scenario, rho=float(ans["rho"]), w_choice=str(ans["w_choice"]),
                                 grid=int(ans.get("grid", DEFAULT_GRID)), weights=weights,
                                 scenario_hash=scenario_hash or doc.get("scenario_hash", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidCertificate(f"malformed certificate: {exc}") from exc


def write_certificate(cert, path):
    with open(path, "w") as fh:
        json.dump(cert.to_dict(), fh, indent=1, default=float)


# Lyapunov functional

def lyapunov_value(cert, solver, state, order=1, require_valid=True):
    """Sum over beams of int <dt^a y, Qbar dt^a y> dx for a = 0..order,
    cell-midpoint quadrature on the solver grid."""
    if require_valid and not cert.valid:
        raise InvalidCertificate("certificate verdict is invalid")
    key = ("qbar", id(solver))
    if key not in cert._cache:
        cert._cache[key] = [cert.qbar(i, solver.xc[i - 1]) for i in range(1, solver.scenario.N + 1)]
    Qs = cert._cache[key]
    ys = solver.to_physical(state)
    total = sum(solver.dx[i] * np.einsum("ni,nij,nj->", y, Qs[i], y) for i, y in enumerate(ys))
    if order >= 1:
        dys = solver.time_derivative(state)
        total += sum(solver.dx[i] * np.einsum("ni,nij,nj->", y, Qs[i], y) for i, y in enumerate(dys))
    return float(total)


# diagonal-frame nodal matrices

def q_diag_closed_form(choice, rho, w, D):
    """(Q-, Q+) diagonals of Q = L^-T Qbar L^-1 for the three W choices."""
    D = np.asarray(D, dtype=float)
    f = {"514": D, "515": 1.0 / D, "516": np.ones_like(D)}[choice]
    Dm2 = D ** -2
    w = np.asarray(w, dtype=float)[..., None]
    return 0.5 * (rho + w * f) * Dm2, 0.5 * (rho - w * f) * Dm2


@dataclass
class MnReport:
    node: int
    kind: str
    Mn: np.ndarray
    Mn_tilde: np.ndarray = None
    factor: np.ndarray = None          # P_n, or Z_n for controlled simple nodes
    Upsilon: np.ndarray = None
    wbar: np.ndarray = None
    Dbar: np.ndarray = None
    C_K: float = None
    congruence_residual: float = None
    class_Mn: str = ""
    class_Mn_tilde: str = ""

    def to_dict(self):
        ev = np.linalg.eigvalsh(sym(self.Mn))
        return {"node": self.node, "kind": self.kind, "class": self.class_Mn,
                "class_tilde": self.class_Mn_tilde or None,
                "eig_min": float(ev[0]), "eig_max": float(ev[-1]),
                "C_K": self.C_K, "congruence_residual": self.congruence_residual}


def _classify(m):
    ev = np.linalg.eigvalsh(sym(m))
    scale = max(1.0, float(np.max(np.abs(ev)))) if ev.size else 1.0
    return definiteness(sym(m), 1e-10 * scale).kind.value


def _Ibb(k):
    return np.kron(np.ones((k, k)), np.eye(6))


def _bd(mats):
    from .linalg import block_diag
    return block_diag(*mats)


def build_Mn_reports(scenario, coupling, rho, weights, w_choice="516"):
    t = scenario.topology
    reports = []
    for n in t.nodes:
        nc = coupling[n]
        ends = ["start"] if n == 0 else ["end"] + ["start"] * (len(nc.edges) - 1)
        wvals, Qout, Qin = [], [], []
        for i, where, D in zip(nc.edges, ends, nc.Dbars):
            x = 0.0 if where == "start" else scenario.beam(i).length
            wx = float(_weight_values(weights[i - 1], np.array([x]))[0])
            qm, qp = q_diag_closed_form(w_choice, rho, wx, D)
            if where == "end":
                Qout.append(qm), Qin.append(qp), wvals.append(wx)
            else:
                Qout.append(qp), Qin.append(qm), wvals.append(-wx)
        Dbar = np.concatenate(nc.Dbars)
        Qout, Qin = np.concatenate(Qout), np.concatenate(Qin)
        wbar = np.repeat(wvals, 6)
        Bn = nc.Bn
        Mn = sym(Bn.T @ np.diag(Qout * Dbar) @ Bn - np.diag(Qin * Dbar))
        rep = MnReport(n, nc.kind.value if nc.kind is NodeKind.MULTIPLE else
                       f"simple-{nc.condition.kind.value}", Mn, wbar=np.diag(wbar), Dbar=np.diag(Dbar))
        if w_choice == "516":
            _attach_tilde(rep, nc, rho, wbar, Dbar)
        rep.class_Mn = _classify(Mn)
        if rep.Mn_tilde is not None:
            rep.class_Mn_tilde = _classify(rep.Mn_tilde)
        reports.append(rep)
    return reports


def _attach_tilde(rep, nc, rho, wbar, Dbar):
    W = np.diag(wbar)
    if nc.kind is NodeKind.MULTIPLE:
        k = nc.k
        I = _Ibb(k)
        SK = _bd([nc.sigma_sum + nc.Kbar] * k)
        Sig = _bd(nc.sigmas)
        Kd = _bd([nc.Kbar] * k)
        Mt = (-2.0 * rho / k * I @ Kd @ I + 2.0 * I @ W @ Sig @ I - I @ W @ SK - SK @ W @ I
              + W @ SK @ np.linalg.inv(Sig) @ SK)
        P = np.linalg.solve(SK, Sig @ nc.G)
        rep.Mn_tilde = sym(Mt)
        rep.factor = P
        rep.congruence_residual = float(np.max(np.abs(rep.Mn - P.T @ rep.Mn_tilde @ P)))
        return
    if not nc.condition.controlled:
        rep.Mn_tilde = rep.Mn.copy()
        rep.congruence_residual = float(np.max(np.abs(rep.Mn - W @ np.diag(1.0 / Dbar))))
        return
    g = nc.gammas[0]
    Dh = np.sqrt(Dbar)
    X = sym((Dh[:, None] * (g.T @ nc.Kbar @ g)) * Dh[None, :])
    ups, V = np.linalg.eigh(X)
    Z = V.T
    f = (1.0 - ups) ** 2 / (1.0 + ups) ** 2
    wb = float(wbar[0])
    Mt = np.diag(rho * (f - 1.0) + wb * (f + 1.0))
    Dmh = np.diag(1.0 / Dh)
    rep.Mn_tilde = Mt
    rep.factor = Z
    rep.Upsilon = np.diag(ups)
    rep.C_K = float(np.max((f - 1.0) / (f + 1.0)))
    rep.congruence_residual = float(np.max(np.abs(rep.Mn - 0.5 * Dmh @ Z.T @ Mt @ Z @ Dmh)))
