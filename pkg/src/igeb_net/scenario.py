"""Scenario files: JSON loading with strict key checking, serialization and
a platform-stable content hash."""

import hashlib
import json
import re
import struct

import numpy as np

from .beam import BeamParams, ParamField, RotationField
from .diagonal import build_diagonalization, riemann_inverse, transparent_gain
from .errors import IgebError, ParseError, ValidationError
from .network import CondKind, InitialDatum, NetworkScenario, NetworkTopology, NodeCondition

TOP_KEYS = {"name", "edges", "nodes", "initial"}
EDGE_KEYS = {"id", "length", "parent_node", "mass", "flexibility", "rotation"}
NODE_KEYS = {"id", "condition"}
BUMP_KEYS = {"edge", "amplitude", "center", "width", "component", "direction"}

_RANDOM_RE = re.compile(r"^random_compatible\(\s*([-+]?\d+)\s*,\s*([-+0-9.eE]+)\s*\)$")
_MODES = 3
_SCALE_POINTS = 2049


def _unknown(d, allowed, where, problems):
    extra = sorted(set(d) - allowed)
    if extra:
        problems.append(f"{where}: unknown keys {extra}")


def _matrix(obj, shape, where):
    a = np.asarray(obj, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{where}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{where}: entries must be finite")
    return a


def _param_field(spec, where):
    if isinstance(spec, list):
        return ParamField.const(_matrix(spec, (6, 6), where), where)
    if isinstance(spec, dict) and set(spec) == {"diagonal"}:
        d = _matrix(spec["diagonal"], (6,), where)
        return ParamField.const(np.diag(d), where)
    if isinstance(spec, dict) and set(spec) == {"sampled"}:
        s = spec["sampled"]
        if not isinstance(s, dict) or set(s) != {"x", "values"}:
            raise ValueError(f"{where}: sampled field needs exactly the keys 'x' and 'values'")
        xs = np.asarray(s["x"], dtype=float)
        return ParamField.sampled(xs, _matrix(s["values"], (len(xs), 6, 6), where), where)
    raise ValueError(f"{where}: expected a 6x6 list, {{'diagonal': [...]}} or {{'sampled': {{...}}}}")


def _rotation(spec, where):
    if spec is None or spec == "identity":
        return RotationField.identity()
    if isinstance(spec, list):
        return RotationField.constant(_matrix(spec, (3, 3), where))
    if isinstance(spec, dict) and set(spec) == {"sampled"}:
        s = spec["sampled"]
        if not isinstance(s, dict) or set(s) != {"x", "values"}:
            raise ValueError(f"{where}: sampled rotation needs exactly the keys 'x' and 'values'")
        xs = np.asarray(s["x"], dtype=float)
        return RotationField.sampled(xs, _matrix(s["values"], (len(xs), 3, 3), where))
    if isinstance(spec, dict) and "curvature" in spec and set(spec) <= {"curvature", "R0"}:
        R0 = _matrix(spec["R0"], (3, 3), where) if "R0" in spec else None
        return RotationField.constant_curvature(_matrix(spec["curvature"], (3,), where), R0)
    raise ValueError(f"{where}: expected 'identity', a 3x3 list, {{'sampled': ...}} or {{'curvature': ...}}")


def _condition(spec, where, beam, endpoint):
    if spec == "free":
        return NodeCondition.free()
    if spec == "clamped":
        return NodeCondition.clamped()
    if spec == "transparent":
        return NodeCondition.feedback(transparent_gain(beam, endpoint), transparent=True)
    if isinstance(spec, dict) and set(spec) == {"feedback"}:
        return NodeCondition.feedback(_matrix(spec["feedback"], (6, 6), where))
    raise ValueError(f"{where}: condition must be 'free', 'clamped', 'transparent' or {{'feedback': 6x6}}")


# initial data presets

def _window_modes(length, coef, xs):
    # sin^6 keeps y0 flat to high order at the ends, so one-sided difference
    # stencils also see vanishing slopes
    w = np.sin(np.pi * xs / length) ** 6
    return sum(np.outer(w * np.sin((k + 1) * np.pi * xs / length), coef[k]) for k in range(len(coef)))


def random_compatible(lengths, seed, amplitude):
    """Smooth random data whose value and first derivatives vanish at both
    ends of every beam, so every compatibility condition of order 0 and 1 holds; scaled so
    that max |y0| equals ``amplitude``."""
    rng = np.random.default_rng(seed)
    coefs = [rng.standard_normal((_MODES, 12)) for _ in lengths]
    peak = max(float(np.max(np.abs(_window_modes(ell, c, np.linspace(0.0, ell, _SCALE_POINTS)))))
               for ell, c in zip(lengths, coefs))
    scale = amplitude / peak if peak > 0 else 0.0

    def fn(i, xs):
        return scale * _window_modes(lengths[i - 1], coefs[i - 1], xs)

    return InitialDatum(fn, f"random_compatible({seed}, {amplitude!r})")


def bump(beams, edge=1, amplitude=1e-2, center=None, width=None, component=0, direction="right"):
    """A C^1 cos^2 pulse in one Riemann component of one beam, zero elsewhere.
    ``direction`` "right" uses the positive-speed family."""
    if not 1 <= edge <= len(beams):
        raise ValueError(f"bump edge {edge} out of range")
    if direction not in ("right", "left"):
        raise ValueError("bump direction must be 'right' or 'left'")
    if not 0 <= int(component) < 6:
        raise ValueError("bump component must be in 0..5")
    ell = beams[edge - 1].length
    center = 0.5 * ell if center is None else float(center)
    width = 0.25 * ell if width is None else float(width)
    col = (6 if direction == "right" else 0) + int(component)

    def fn(i, xs):
        out = np.zeros((len(xs), 12))
        if i != edge or len(xs) == 0:
            return out
        grid, inv = np.unique(xs, return_inverse=True)
        s = np.clip((grid - center) / width, -0.5, 0.5)
        r = np.zeros((len(grid), 12))
        r[:, col] = amplitude * np.cos(np.pi * s) ** 2
        d = build_diagonalization(beams[i - 1], grid)
        return riemann_inverse(d, r)[inv]

    desc = {"bump": {"edge": edge, "amplitude": amplitude, "center": center, "width": width,
                     "component": int(component), "direction": direction}}
    return InitialDatum(fn, desc)


def _initial(spec, beams, problems):
    lengths = [b.length for b in beams]
    if spec is None or spec == "zero":
        return InitialDatum.zero()
    if spec == "bump":
        return bump(beams)
    if isinstance(spec, str):
        m = _RANDOM_RE.match(spec.strip())
        if m:
            return random_compatible(lengths, int(m.group(1)), float(m.group(2)))
        problems.append(f"initial: unknown preset {spec!r}")
        return None
    if isinstance(spec, dict) and set(spec) == {"bump"} and isinstance(spec["bump"], dict):
        _unknown(spec["bump"], BUMP_KEYS, "initial.bump", problems)
        return bump(beams, **{k: v for k, v in spec["bump"].items() if k in BUMP_KEYS})
    if isinstance(spec, dict) and set(spec) == {"samples"}:
        spec = spec["samples"]
    if isinstance(spec, list):
        if len(spec) != len(beams):
            problems.append(f"initial: {len(spec)} sample arrays given for {len(beams)} edges")
            return None
        return InitialDatum.from_samples(lengths, spec)
    problems.append("initial: expected 'zero', 'bump', 'random_compatible(seed, amplitude)' or per-edge samples")
    return None


# loading

def parse_scenario(doc, name=""):
    problems = []
    if not isinstance(doc, dict):
        raise ValidationError(["scenario must be a JSON object"])
    _unknown(doc, TOP_KEYS, "scenario", problems)
    edges = doc.get("edges")
    nodes = doc.get("nodes")
    if not isinstance(edges, list) or not edges:
        raise ValidationError(problems + ["scenario needs a non-empty 'edges' list"])
    if not isinstance(nodes, list):
        raise ValidationError(problems + ["scenario needs a 'nodes' list"])

    N = len(edges)
    by_id = {}
    for k, e in enumerate(edges):
        where = f"edge #{k}"
        if not isinstance(e, dict):
            problems.append(f"{where}: must be an object")
            continue
        _unknown(e, EDGE_KEYS, where, problems)
        eid = e.get("id")
        if not isinstance(eid, int) or not 1 <= eid <= N:
            problems.append(f"{where}: id must be an integer in 1..{N}")
            continue
        if eid in by_id:
            problems.append(f"edge {eid}: duplicate id")
            continue
        by_id[eid] = e
    parents, beams = [], []
    for eid in range(1, N + 1):
        e = by_id.get(eid)
        if e is None:
            problems.append(f"edge {eid}: missing")
            continue
        where = f"edge {eid}"
        p = e.get("parent_node")
        if not isinstance(p, int) or isinstance(p, bool):
            problems.append(f"{where}: parent_node must be an integer")
            p = -1
        parents.append(p)
        try:
            beams.append(BeamParams(
                length=float(e.get("length", float("nan"))),
                mass=_param_field(e.get("mass"), f"{where} mass"),
                flexibility=_param_field(e.get("flexibility"), f"{where} flexibility"),
                rotation=_rotation(e.get("rotation", "identity"), f"{where} rotation")))
        except (IgebError, ValueError, TypeError) as exc:
            problems.append(f"{where}: {exc}" if not str(exc).startswith(where) else str(exc))
    if problems:
        raise ValidationError(problems)

    topology = NetworkTopology(tuple(parents))
    node_specs = {}
    for k, nd in enumerate(nodes):
        if not isinstance(nd, dict):
            problems.append(f"node #{k}: must be an object")
            continue
        _unknown(nd, NODE_KEYS, f"node #{k}", problems)
        nid = nd.get("id")
        if not isinstance(nid, int) or not 0 <= nid <= N:
            problems.append(f"node #{k}: id must be an integer in 0..{N}")
        elif nid in node_specs:
            problems.append(f"node {nid}: duplicate id")
        else:
            node_specs[nid] = nd.get("condition")
    conditions = {}
    for nid in range(N + 1):
        if nid not in node_specs:
            problems.append(f"node {nid}: missing")
            continue
        # the transparent gain is taken from the beam end touching the node
        if nid == 0:
            beam, endpoint = beams[0], "start"
        else:
            beam, endpoint = beams[nid - 1], "end"
        try:
            conditions[nid] = _condition(node_specs[nid], f"node {nid}", beam, endpoint)
        except (IgebError, ValueError, TypeError) as exc:
            msg = str(exc)
            problems.append(msg if msg.startswith(f"node {nid}") else f"node {nid}: {msg}")
    if problems:
        raise ValidationError(problems)

    try:
        initial = _initial(doc.get("initial", "zero"), beams, problems)
    except (IgebError, ValueError, TypeError) as exc:
        problems.append(f"initial: {exc}")
        initial = None
    if problems:
        raise ValidationError(problems)
    return NetworkScenario(topology, beams, conditions, initial, doc.get("name", name))


def loads_scenario(text, name=""):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                         exc.lineno, exc.colno) from exc
    return parse_scenario(doc, name)


def load_scenario(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw[:exc.start].count(b"\n") + 1
        col = exc.start - (raw.rfind(b"\n", 0, exc.start) + 1) + 1
        raise ParseError(f"{path} is not valid UTF-8 (line {line}, column {col})", line, col) from exc
    return loads_scenario(text, name=str(path))


# serialization and hashing

def _field_doc(f):
    if f.is_constant:
        return f.constant.tolist()
    return {"sampled": {"x": f.xs.tolist(), "values": f.values.tolist()}}


def _rotation_doc(r):
    if r.kind == "identity":
        return "identity"
    if r.kind == "constant":
        return r.R0.tolist()
    if r.kind == "curvature":
        return {"curvature": r.kappa.tolist(), "R0": r.R0.tolist()}
    return {"sampled": {"x": r.xs.tolist(), "values": r.values.tolist()}}


def _condition_doc(c):
    if c.kind is CondKind.FREE:
        return "free"
    if c.kind is CondKind.CLAMPED:
        return "clamped"
    if c.transparent:
        return "transparent"
    return {"feedback": c.K.tolist()}


def serialize(scenario):
    """JSON document that loads back to an equivalent scenario."""
    t = scenario.topology
    desc = scenario.initial.descriptor if scenario.initial is not None else "zero"
    if isinstance(desc, dict) and "samples" in desc:
        desc = desc["samples"]
    doc = {
        "name": scenario.name,
        "edges": [{"id": i, "length": b.length, "parent_node": t.parent(i),
                   "mass": _field_doc(b.mass), "flexibility": _field_doc(b.flexibility),
                   "rotation": _rotation_doc(b.rotation)}
                  for i, b in enumerate(scenario.beams, start=1)],
        "nodes": [{"id": n, "condition": _condition_doc(scenario.condition(n))} for n in t.nodes],
        "initial": desc,
    }
    json.dumps(doc)     # fails loudly on a non-serializable initial datum
    return doc


def _canonical(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return "f:" + struct.pack("<d", float(obj)).hex()
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    raise TypeError(f"cannot hash {type(obj).__name__}")


def scenario_hash(scenario):
    """sha256 of the canonical serialized form; every number is encoded by
    its little-endian IEEE-754 bits, so the hash is platform independent.
    The scenario name does not enter the hash."""
    doc = serialize(scenario)
    doc.pop("name", None)
    text = json.dumps(_canonical(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dump_scenario(scenario, path):
    with open(path, "w") as fh:
        json.dump(serialize(scenario), fh, indent=1)


def fixture_path(name):
    """Path of a bundled scenario file, e.g. ``fixture_path("star3_unit.json")``."""
    from importlib.resources import files
    p = files("igeb_net") / "fixtures" / name
    if not p.is_file():
        raise FileNotFoundError(f"no bundled fixture {name!r}")
    return str(p)


def bundled_fixtures():
    from importlib.resources import files
    return sorted(p.name for p in (files("igeb_net") / "fixtures").iterdir() if p.name.endswith(".json"))
