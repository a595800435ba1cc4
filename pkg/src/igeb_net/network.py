"""Oriented tree topology, nodal conditions, network scenarios and the
compatibility checker for initial data.

Conventions: nodes are 0..N, edge i (1-based) ends at node i and starts at
``parents[i-1]``. Node 0 is simple and starts edge 1 only.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .beam import BeamParams, gbar_from, A_from, Bbar_from, E_from_curvature
from .errors import BadOrientation, NotATree, Node0NotSimple, NotSPD, TopologyError, ValidationError
from .linalg import check_symmetric, is_spd

COMPAT_TOL = 1e-8


class NodeKind(str, Enum):
    SIMPLE = "simple"
    MULTIPLE = "multiple"


@dataclass(frozen=True)
class NetworkTopology:
    parents: tuple

    @property
    def N(self):
        return len(self.parents)

    @property
    def nodes(self):
        return range(self.N + 1)

    def parent(self, i):
        return self.parents[i - 1]

    def starting(self, n):
        """Edges starting at node n, ascending (the incidence set)."""
        return tuple(i for i in range(1, self.N + 1) if self.parents[i - 1] == n)

    def kind(self, n):
        if n == 0 or not self.starting(n):
            return NodeKind.SIMPLE
        return NodeKind.MULTIPLE

    def k(self, n):
        return 1 if self.kind(n) is NodeKind.SIMPLE else len(self.starting(n)) + 1

    @property
    def simple_nodes(self):
        return [n for n in self.nodes if self.kind(n) is NodeKind.SIMPLE]

    @property
    def multiple_nodes(self):
        return [n for n in self.nodes if self.kind(n) is NodeKind.MULTIPLE]

    def is_star(self):
        return len(self.multiple_nodes) <= 1

    def incident(self, n):
        """(edge, end) pairs touching node n, ending edge first; end is "end"
        for x = length, "start" for x = 0."""
        out = []
        if n >= 1:
            out.append((n, "end"))
        out.extend((i, "start") for i in self.starting(n))
        return out


@dataclass
class TopologyReport:
    N: int
    simple: list
    multiple: list
    k: dict
    problems: list = field(default_factory=list)

    @property
    def valid(self):
        return not self.problems


def validate_topology(t):
    """Check tree structure and orientation conventions; raise the first
    violated error class with every problem listed in the message."""
    problems = []
    N = len(t.parents)
    if N < 1:
        problems.append((NotATree, "network needs at least one edge"))
    for i, p in enumerate(t.parents, start=1):
        if not isinstance(p, (int, np.integer)) or p < 0 or p > N:
            problems.append((BadOrientation, f"edge {i}: parent node {p} is not in 0..{N}"))
        elif p == i:
            problems.append((NotATree, f"edge {i} starts and ends at node {i}"))
    if problems:
        _raise(problems)
    if t.parents[0] != 0:
        problems.append((BadOrientation, "edge 1 must start at node 0"))
    extra = [i for i in t.starting(0) if i != 1]
    if extra:
        problems.append((Node0NotSimple, f"node 0 must start edge 1 only, also starts {extra}"))
    # every node must reach node 0 by following parents
    for i in range(1, N + 1):
        seen, n = set(), i
        while n != 0:
            if n in seen:
                problems.append((NotATree, f"node {i} lies on a cycle and is not connected to node 0"))
                break
            seen.add(n)
            n = t.parents[n - 1]
    if problems:
        _raise(problems)
    simple, multiple = t.simple_nodes, t.multiple_nodes
    k = {n: t.k(n) for n in t.nodes}
    assert sum(k[n] for n in multiple) + len(simple) == 2 * N
    return TopologyReport(N=N, simple=simple, multiple=multiple, k=k)


def _raise(problems):
    cls = problems[0][0]
    raise cls("; ".join(msg for _, msg in problems))


class CondKind(str, Enum):
    FEEDBACK = "feedback"
    FREE = "free"
    CLAMPED = "clamped"


@dataclass(frozen=True)
class NodeCondition:
    kind: CondKind
    K: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    transparent: bool = False

    def __post_init__(self):
        if self.kind is CondKind.FEEDBACK:
            K = check_symmetric(self.K, "feedback matrix")
            if K.shape != (6, 6) or not is_spd(K):
                raise NotSPD("feedback matrix must be 6x6 symmetric positive definite")
            object.__setattr__(self, "K", K)
        else:
            object.__setattr__(self, "K", np.zeros((6, 6)))

    @classmethod
    def free(cls):
        return cls(CondKind.FREE)

    @classmethod
    def clamped(cls):
        return cls(CondKind.CLAMPED)

    @classmethod
    def feedback(cls, K, transparent=False):
        return cls(CondKind.FEEDBACK, np.asarray(K, dtype=float), transparent)

    @property
    def controlled(self):
        return self.kind is CondKind.FEEDBACK


class InitialDatum:
    """Initial state y0 per beam, evaluated on demand at arbitrary positions.

    ``fn(i, xs)`` returns an array of shape (len(xs), 12) for edge i.
    ``descriptor`` is the JSON-serializable source of the datum.
    """

    def __init__(self, fn: Callable, descriptor):
        self._fn = fn
        self.descriptor = descriptor

    def sample(self, i, xs):
        out = np.asarray(self._fn(i, np.asarray(xs, dtype=float)), dtype=float)
        if out.shape != (len(xs), 12):
            raise ValidationError(f"initial datum for edge {i} has shape {out.shape}")
        if not np.all(np.isfinite(out)):
            raise ValidationError(f"initial datum for edge {i} is not finite")
        return out

    @classmethod
    def zero(cls):
        return cls(lambda i, xs: np.zeros((len(xs), 12)), "zero")

    @classmethod
    def from_samples(cls, lengths, samples):
        """Per-edge arrays on uniform grids including both endpoints,
        linearly interpolated."""
        arrays = [np.asarray(s, dtype=float) for s in samples]
        for i, a in enumerate(arrays, start=1):
            if a.ndim != 2 or a.shape[1] != 12 or a.shape[0] < 2:
                raise ValidationError(f"initial samples for edge {i} must have shape (n >= 2, 12)")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"initial samples for edge {i} are not finite")

        def fn(i, xs):
            a = arrays[i - 1]
            grid = np.linspace(0.0, lengths[i - 1], a.shape[0])
            return np.stack([np.interp(xs, grid, a[:, k]) for k in range(12)], axis=-1)

        return cls(fn, {"samples": [a.tolist() for a in arrays]})


@dataclass
class NetworkScenario:
    topology: NetworkTopology
    beams: list
    conditions: dict
    initial: Optional[InitialDatum] = None
    name: str = ""

    def __post_init__(self):
        problems = []
        try:
            validate_topology(self.topology)
        except TopologyError as exc:
            problems.append(f"{type(exc).__name__}: {exc}")
        if len(self.beams) != self.topology.N:
            problems.append(f"{len(self.beams)} beams given for {self.topology.N} edges")
        for b in self.beams:
            if not isinstance(b, BeamParams):
                problems.append("beams must be BeamParams")
                break
        for n in range(self.topology.N + 1):
            c = self.conditions.get(n)
            if c is None:
                problems.append(f"node {n}: no condition given")
            elif not problems and self.topology.kind(n) is NodeKind.MULTIPLE and c.kind is CondKind.CLAMPED:
                problems.append(f"node {n}: a multiple node cannot be clamped")
        if problems:
            raise ValidationError(problems)
        if self.initial is None:
            self.initial = InitialDatum.zero()

    @property
    def N(self):
        return self.topology.N

    def beam(self, i):
        return self.beams[i - 1]

    def condition(self, n):
        return self.conditions[n]


def Rbar(R):
    R = np.asarray(R)
    out = np.zeros(R.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    return out


@dataclass(frozen=True)
class Residual:
    order: int
    node: int
    condition: str
    value: float


@dataclass
class CompatReport:
    residuals: list
    threshold: float

    @property
    def max_residual(self):
        return max((r.value for r in self.residuals), default=0.0)

    @property
    def passed(self):
        return self.max_residual <= self.threshold

    def worst(self):
        return max(self.residuals, key=lambda r: r.value, default=None)


def first_order_datum(beam, xs, y0):
    """y1 = -A dy0/dx - Bbar y0 + gbar(y0) on the sample grid."""
    M, C = beam.M(xs), beam.C(xs)
    Minv, Cinv = np.linalg.inv(M), np.linalg.inv(C)
    A = A_from(Minv, Cinv)
    Bb = Bbar_from(Minv, Cinv, E_from_curvature(beam.curvature(xs)))
    dy = np.gradient(y0, xs, axis=0, edge_order=2)
    return (-np.einsum("nij,nj->ni", A, dy) - np.einsum("nij,nj->ni", Bb, y0)
            + gbar_from(M, C, y0))


def _endpoint_residuals(scenario, ends, order):
    """``ends[i] = (y(0), y(length))`` per edge."""
    t = scenario.topology
    out = []
    for n in t.nodes:
        cond = scenario.condition(n)
        if t.kind(n) is NodeKind.MULTIPLE:
            bn = scenario.beam(n)
            Rn = Rbar(bn.R(bn.length))
            vn, zn = ends[n][1][:6], ends[n][1][6:]
            flux = Rn @ zn + Rn @ cond.K @ vn
            for i in t.starting(n):
                bi = scenario.beam(i)
                Ri = Rbar(bi.R(0.0))
                vi, zi = ends[i][0][:6], ends[i][0][6:]
                out.append(Residual(order, n, f"continuity edge {i}",
                                    float(np.max(np.abs(Ri @ vi - Rn @ vn)))))
                flux = flux - Ri @ zi
            out.append(Residual(order, n, "kirchhoff", float(np.max(np.abs(flux)))))
            continue
        if n == 0:
            v, z = ends[1][0][:6], ends[1][0][6:]
            sign = 1.0
        else:
            v, z = ends[n][1][:6], ends[n][1][6:]
            sign = -1.0
        if cond.kind is CondKind.CLAMPED:
            out.append(Residual(order, n, "clamped", float(np.max(np.abs(v)))))
        else:
            out.append(Residual(order, n, cond.kind.value,
                                float(np.max(np.abs(z - sign * cond.K @ v)))))
    return out


def check_compatibility(scenario, order=1, n_points=257, threshold=COMPAT_TOL, datum=None):
    """Residuals of the zero-order (and, for order 1, first-order)
    compatibility conditions of the initial datum at every node."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    datum = datum or scenario.initial
    residuals = []
    grids, y0s = [], []
    for i in range(1, scenario.N + 1):
        xs = np.linspace(0.0, scenario.beam(i).length, max(3, n_points))
        grids.append(xs)
        y0s.append(datum.sample(i, xs))
    ends = {i: (y0s[i - 1][0], y0s[i - 1][-1]) for i in range(1, scenario.N + 1)}
    residuals += _endpoint_residuals(scenario, ends, 0)
    if order == 1:
        ends1 = {}
        for i in range(1, scenario.N + 1):
            y1 = first_order_datum(scenario.beam(i), grids[i - 1], y0s[i - 1])
            ends1[i] = (y1[0], y1[-1])
        residuals += _endpoint_residuals(scenario, ends1, 1)
    return CompatReport(residuals, threshold)
