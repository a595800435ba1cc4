"""First-order upwind / Heun time marching of the network in Riemann
variables, with energy, discrete H1 and Lyapunov diagnostics."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .beam import gbar_from
from .diagonal import build_diagonalization, build_nodal_coupling
from .errors import CFLViolation, NonFiniteState, NonPositiveValues

BLOWUP_FACTOR = 1e3


@dataclass(frozen=True)
class SimConfig:
    cells: int = 128
    cfl: float = 0.9
    t_end: float = 1.0
    record_stride: int = 1

    def __post_init__(self):
        if not (0.0 < self.cfl <= 1.0):
            raise CFLViolation(f"CFL factor must lie in (0, 1], got {self.cfl}")
        if int(self.cells) < 8:
            raise ValueError(f"need at least 8 cells per beam, got {self.cells}")
        if not self.t_end > 0:
            raise ValueError("end time must be positive")
        if int(self.record_stride) < 1:
            raise ValueError("record stride must be >= 1")


@dataclass
class TimeSeries:
    times: list = field(default_factory=list)
    E_phys: list = field(default_factory=list)
    E_diag: list = field(default_factory=list)
    lyap: list = field(default_factory=list)
    H1: list = field(default_factory=list)
    node_flux: dict = field(default_factory=dict)
    steps: int = 0
    dt: float = 0.0
    max_step_energy_increase: float = 0.0

    def as_arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in ("times", "E_phys", "E_diag", "lyap", "H1")}


class NetworkSolver:
    """Discretized network: uniform cells per beam, diagonalization at the
    beam ends and cell centres, reflection matrices at every node."""

    def __init__(self, scenario, cells=128):
        self.scenario = scenario
        self.cells = int(cells)
        self.beams = scenario.beams
        self.dx = []
        self.xc = []
        diags = []
        for b in self.beams:
            dx = b.length / self.cells
            xc = (np.arange(self.cells) + 0.5) * dx
            grid = np.concatenate([[0.0], xc, [b.length]])
            diags.append(build_diagonalization(b, grid))
            self.dx.append(dx)
            self.xc.append(xc)
        self.full_diags = diags
        self.coupling = build_nodal_coupling(scenario, diags)
        inner = slice(1, self.cells + 1)
        self.speeds = [d.speeds[inner] for d in diags]
        self.B = [d.B[inner] for d in diags]
        self.L = [d.L[inner] for d in diags]
        self.Linv = [d.Linv[inner] for d in diags]
        self.M = [d.M[inner] for d in diags]
        self.C = [d.C[inner] for d in diags]
        self.Qd = [0.5 * np.concatenate([d.D[inner] ** -2, d.D[inner] ** -2], axis=-1) for d in diags]
        self.max_speed = max(float(np.max(d.D)) for d in diags)
        self.dt_max = min(self.dx) / self.max_speed
        self.nodes = list(scenario.topology.nodes)

    # state helpers

    def initial_state(self, datum=None):
        datum = datum or self.scenario.initial
        out = []
        for i, b in enumerate(self.beams, start=1):
            y = datum.sample(i, self.xc[i - 1])
            out.append(np.einsum("nij,nj->ni", self.L[i - 1], y))
        return out

    def to_physical(self, state):
        return [np.einsum("nij,nj->ni", Li, r) for Li, r in zip(self.Linv, state)]

    def from_physical(self, ys):
        return [np.einsum("nij,nj->ni", Li, y) for Li, y in zip(self.L, ys)]

    def ghosts(self, state):
        """Outgoing values at every beam end from r_out = B_n r_in, as
        (left r+ ghost, right r- ghost) per edge."""
        left = [None] * len(self.beams)
        right = [None] * len(self.beams)
        for n, nc in self.coupling.items():
            r_in = []
            for i, where in zip(nc.edges, self._ends(n)):
                r = state[i - 1]
                r_in.append(r[-1, 6:] if where == "end" else r[0, :6])
            r_out = nc.Bn @ np.concatenate(r_in)
            for j, (i, where) in enumerate(zip(nc.edges, self._ends(n))):
                part = r_out[6 * j:6 * j + 6]
                if where == "end":
                    right[i - 1] = part
                else:
                    left[i - 1] = part
        return left, right

    def _ends(self, n):
        if n == 0:
            return ["start"]
        return ["end"] + ["start"] * (len(self.coupling[n].edges) - 1)

    def rhs(self, state, ghosts=None):
        left, right = ghosts or self.ghosts(state)
        out = []
        for i, r in enumerate(state):
            lam = self.speeds[i]
            dr = np.empty_like(r)
            # r- travel left: difference with the right neighbour
            rm = np.vstack([r[1:, :6], right[i][None, :]])
            dr[:, :6] = rm - r[:, :6]
            # r+ travel right: difference with the left neighbour
            rp = np.vstack([left[i][None, :], r[:-1, 6:]])
            dr[:, 6:] = r[:, 6:] - rp
            rate = -lam * dr / self.dx[i]
            rate -= np.einsum("nij,nj->ni", self.B[i], r)
            y = np.einsum("nij,nj->ni", self.Linv[i], r)
            rate += np.einsum("nij,nj->ni", self.L[i], gbar_from(self.M[i], self.C[i], y))
            out.append(rate)
        return out

    def step(self, state, dt):
        if dt > self.dt_max * (1 + 1e-12):
            raise CFLViolation(f"time step {dt:.3e} exceeds the stability limit {self.dt_max:.3e}")
        k1 = self.rhs(state)
        s1 = [r + dt * k for r, k in zip(state, k1)]
        k2 = self.rhs(s1)
        return [0.5 * (r + s + dt * k) for r, s, k in zip(state, s1, k2)]

    # diagnostics

    def energy_phys(self, state):
        total = 0.0
        for i, y in enumerate(self.to_physical(state)):
            v, z = y[:, :6], y[:, 6:]
            total += self.dx[i] * (np.einsum("ni,nij,nj->", v, self.M[i], v)
                                   + np.einsum("ni,nij,nj->", z, self.C[i], z))
        return float(total)

    def energy_diag(self, state):
        return float(sum(self.dx[i] * np.sum(self.Qd[i] * r * r) for i, r in enumerate(state)))

    def h1_norm(self, state):
        total = 0.0
        for i, y in enumerate(self.to_physical(state)):
            dy = np.diff(y, axis=0) / self.dx[i]
            total += self.dx[i] * (np.sum(y * y) + np.sum(dy * dy))
        return float(np.sqrt(total))

    def time_derivative(self, state):
        """Physical dt y from the semidiscrete equations."""
        return self.to_physical(self.rhs(state))

    def node_flux(self, state, ghosts=None):
        """Power entering the network through each node, 2<v, z> at beam
        ends with the sign fixed by orientation."""
        left, right = ghosts or self.ghosts(state)
        out = {}
        for n, nc in self.coupling.items():
            p = 0.0
            for i, where in zip(nc.edges, self._ends(n)):
                d = self.full_diags[i - 1]
                r = state[i - 1]
                if where == "end":
                    rb = np.concatenate([right[i - 1], r[-1, 6:]])
                    y = d.Linv[-1] @ rb
                    p += 2.0 * y[:6] @ y[6:]
                else:
                    rb = np.concatenate([r[0, :6], left[i - 1]])
                    y = d.Linv[0] @ rb
                    p -= 2.0 * y[:6] @ y[6:]
            out[n] = float(p)
        return out


def semidiscrete_rhs(solver, state):
    return solver.rhs(state)


def network_energy(solver, state):
    return solver.energy_phys(state)


def simulate(scenario, config, certificate=None, solver=None, datum=None):
    """Run to ``config.t_end``; returns (TimeSeries, final state, solver)."""
    solver = solver or NetworkSolver(scenario, config.cells)
    state = solver.initial_state(datum)
    dt_cfl = config.cfl * solver.dt_max
    n_steps = int(np.ceil(config.t_end / dt_cfl - 1e-12))
    dt = config.t_end / n_steps
    bound = max(float(np.max(np.abs(r))) for r in state)
    limit = BLOWUP_FACTOR * bound
    ts = TimeSeries(dt=dt, steps=n_steps)
    ts.node_flux = {n: [] for n in solver.nodes}

    def record(t, st):
        ts.times.append(t)
        ts.E_phys.append(solver.energy_phys(st))
        ts.E_diag.append(solver.energy_diag(st))
        ts.H1.append(solver.h1_norm(st))
        ts.lyap.append(certificate.lyapunov_value(solver, st) if certificate is not None else float("nan"))
        for n, p in solver.node_flux(st).items():
            ts.node_flux[n].append(p)

    record(0.0, state)
    e_prev = ts.E_phys[0]
    for m in range(1, n_steps + 1):
        state = solver.step(state, dt)
        peak = max(float(np.max(np.abs(r))) for r in state)
        if not np.isfinite(peak) or peak > limit:
            raise NonFiniteState(f"solution left the admissible range at t = {m * dt:.4g} (max |r| = {peak:.3e})")
        e = solver.energy_phys(state)
        ts.max_step_energy_increase = max(ts.max_step_energy_increase, e - e_prev)
        e_prev = e
        if m % config.record_stride == 0 or m == n_steps:
            record(m * dt, state)
    return ts, state, solver


def fit_decay_rate(times, values, window=None):
    """Least-squares slope of log(values) against time; rate = -slope / 2."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
        t, v = t[mask], v[mask]
    if len(t) < 2:
        raise ValueError("need at least two samples to fit a rate")
    if np.any(~(v > 0)):
        raise NonPositiveValues("decay fit needs strictly positive values")
    logv = np.log(v)
    slope, icpt = np.polyfit(t, logv, 1)
    resid = logv - (slope * t + icpt)
    ss_tot = np.sum((logv - logv.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid ** 2) / ss_tot
    return -slope / 2.0, float(r2)


FIELDS = ("t", "E_phys", "E_diag", "Lyap", "H1")


def _rows(ts):
    return zip(ts.times, ts.E_phys, ts.E_diag, ts.lyap, ts.H1)


def write_csv(ts, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS)
        for row in _rows(ts):
            w.writerow([repr(float(x)) for x in row])


def write_json(ts, path, scenario_hash):
    doc = {name: [None if not np.isfinite(x) else float(x) for x in col]
           for name, col in zip(FIELDS, (ts.times, ts.E_phys, ts.E_diag, ts.lyap, ts.H1))}
    doc["scenario_hash"] = scenario_hash
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def write_snapshot(solver, state, prefix):
    """Per-beam CSV of the physical state at cell centres."""
    paths = []
    for i, y in enumerate(solver.to_physical(state), start=1):
        path = f"{prefix}_edge{i}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"] + [f"v{k}" for k in range(1, 7)] + [f"z{k}" for k in range(1, 7)])
            for x, row in zip(solver.xc[i - 1], y):
                w.writerow([repr(float(x))] + [repr(float(a)) for a in row])
        paths.append(path)
    return paths
