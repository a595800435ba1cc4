"""Command line entry point: ``igeb-net simulate|certify|check-compat|inspect-coupling``.

Exit codes: 0 success, 1 parse or validation error, 2 blow-up during a
simulation, 3 an invalid certificate or failed compatibility check.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .certify import W_CHOICES, certificate_from_dict, check_certificate, write_certificate
from .diagonal import build_diagonalization, build_nodal_coupling
from .errors import IgebError, NonFiniteState, ParseError
from .network import check_compatibility
from .scenario import load_scenario, scenario_hash
from .simulate import SimConfig, simulate, write_csv, write_json, write_snapshot

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_BLOWUP = 2
EXIT_NOT_CERTIFIED = 3


def _rho(text):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("rho must be 'auto' or a positive number")
    if not value > 0:
        raise argparse.ArgumentTypeError("rho must be positive")
    return value


class _Parser(argparse.ArgumentParser):
    # usage errors share the exit code of invalid input; 2 means blow-up
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="igeb-net", description="Networks of intrinsic geometrically exact beams.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="march a scenario in time and export energy series")
    s.add_argument("scenario")
    s.add_argument("--cells", type=int, default=128)
    s.add_argument("--cfl", type=float, default=0.9)
    s.add_argument("--tend", type=float, default=1.0)
    s.add_argument("--record-stride", type=int, default=1)
    s.add_argument("--certificate", help="certificate JSON; adds the Lyapunov column")
    s.add_argument("--snapshot", action="store_true", help="also write the final state per beam")
    s.add_argument("--out", default=".")

    c = sub.add_parser("certify", help="build and verify a quadratic Lyapunov certificate")
    c.add_argument("scenario")
    c.add_argument("--rho", type=_rho, default="auto")
    c.add_argument("--w-choice", choices=W_CHOICES, default="516")
    c.add_argument("--grid", type=int, default=257)
    c.add_argument("--out", default="certificate.json")

    k = sub.add_parser("check-compat", help="residuals of the compatibility conditions of the initial datum")
    k.add_argument("scenario")
    k.add_argument("--order", type=int, choices=(0, 1), default=1)
    k.add_argument("--threshold", type=float, default=1e-8)
    k.add_argument("--points", type=int, default=257)

    i = sub.add_parser("inspect-coupling", help="print the nodal reflection matrices")
    i.add_argument("scenario")
    i.add_argument("--matrices", action="store_true", help="print every reflection matrix in full")
    return p


def cmd_simulate(args):
    scenario = load_scenario(args.scenario)
    h = scenario_hash(scenario)
    config = SimConfig(cells=args.cells, cfl=args.cfl, t_end=args.tend, record_stride=args.record_stride)
    cert = None
    if args.certificate:
        try:
            with open(args.certificate) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read certificate {args.certificate}: {exc}") from exc
        cert = certificate_from_dict(doc, scenario, h)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "timeseries.csv")
    json_path = os.path.join(args.out, "timeseries.json")
    manifest_path = os.path.join(args.out, "manifest.json")
    try:
        ts, state, solver = simulate(scenario, config, certificate=cert)
    except NonFiniteState as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    write_csv(ts, csv_path)
    write_json(ts, json_path, h)
    outputs = {"csv": csv_path, "json": json_path}
    if args.snapshot:
        outputs["snapshot"] = write_snapshot(solver, state, os.path.join(args.out, "state"))
    manifest = {
        "scenario_hash": h,
        "scenario": os.path.abspath(args.scenario),
        "config": {"cells": config.cells, "cfl": config.cfl, "t_end": config.t_end,
                   "record_stride": config.record_stride, "dt": ts.dt, "steps": ts.steps},
        "certificate": os.path.abspath(args.certificate) if args.certificate else None,
        "outputs": outputs,
        "version": __version__,
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    E = ts.E_phys
    print(f"{ts.steps} steps, dt = {ts.dt:.4e}; energy {E[0]:.6e} -> {E[-1]:.6e}")
    print(f"wrote {csv_path}, {json_path}, {manifest_path}")
    return EXIT_OK


def cmd_certify(args):
    scenario = load_scenario(args.scenario)
    if args.grid < 3:
        raise ValueError("--grid must be at least 3")
    cert = check_certificate(scenario, rho=args.rho, w_choice=args.w_choice, grid=args.grid,
                             scenario_hash=scenario_hash(scenario))
    write_certificate(cert, args.out)
    print(f"verdict: {cert.verdict}  rho = {cert.rho:.6g}  beta = {cert.beta:.6g}")
    for chk in cert.failed():
        print(f"  failed {chk.name} [{chk.where}] margin {chk.margin:.3e}")
    for conflict in cert.diagnostic["conflicts"]:
        print(f"  edge {conflict['edge']}: " + "; ".join(conflict["requires"]))
    print(f"wrote {args.out}")
    return EXIT_OK if cert.valid else EXIT_NOT_CERTIFIED


def cmd_check_compat(args):
    scenario = load_scenario(args.scenario)
    rep = check_compatibility(scenario, order=args.order, n_points=args.points, threshold=args.threshold)
    for r in rep.residuals:
        flag = "" if r.value <= rep.threshold else "  <-- exceeds threshold"
        print(f"order {r.order} node {r.node} {r.condition}: {r.value:.3e}{flag}")
    print(f"max residual {rep.max_residual:.3e} ({'pass' if rep.passed else 'fail'})")
    return EXIT_OK if rep.passed else EXIT_NOT_CERTIFIED


def cmd_inspect_coupling(args):
    scenario = load_scenario(args.scenario)
    diags = [build_diagonalization(b, np.array([0.0, b.length])) for b in scenario.beams]
    coupling = build_nodal_coupling(scenario, diags)
    with np.printoptions(precision=4, suppress=True, linewidth=140):
        for n, nc in coupling.items():
            sv = np.linalg.svd(nc.Bn, compute_uv=False)
            print(f"node {n}: {nc.kind.value}, condition {nc.condition.kind.value}, k = {nc.k}, "
                  f"edges {list(nc.edges)}, |B| = {sv[0]:.6g}")
            if args.matrices:
                print(nc.Bn)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "check-compat": cmd_check_compat,
    "inspect-coupling": cmd_inspect_coupling,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
    except (IgebError, ValueError) as exc:
        problems = getattr(exc, "problems", None) or [str(exc)]
        print(f"{type(exc).__name__}:", file=sys.stderr)
        for p in problems:
            print(f"  {p}", file=sys.stderr)
    return EXIT_INVALID_INPUT


if __name__ == "__main__":
    sys.exit(main())
