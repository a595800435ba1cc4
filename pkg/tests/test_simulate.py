import json
import sys

import numpy as np
import pytest

from igeb_net import BeamParams, InitialDatum, NetworkScenario, NetworkTopology, NodeCondition
from igeb_net.diagonal import transparent_gain
from igeb_net.errors import CFLViolation, NonFiniteState, NonPositiveValues
from igeb_net.scenario import bump, random_compatible
from igeb_net.simulate import NetworkSolver, SimConfig, fit_decay_rate, simulate, write_csv, write_json

from conftest import random_beam, star


def _transparent_beam(beam=None):
    b = beam or BeamParams.uniform(1.0)
    return NetworkScenario(NetworkTopology((0,)), [b], {
        0: NodeCondition.feedback(transparent_gain(b, "start"), transparent=True),
        1: NodeCondition.feedback(transparent_gain(b, "end"), transparent=True)})


def test_zero_stays_zero(unit_star):
    ts, state, _ = simulate(unit_star, SimConfig(cells=16, t_end=0.5))
    assert all(np.array_equal(r, np.zeros_like(r)) for r in state)
    assert max(ts.E_phys) == 0.0


def test_constant_axial_state_is_steady_in_the_interior():
    sc = _transparent_beam()
    solver = NetworkSolver(sc, cells=16)
    y = np.zeros((16, 12))
    y[:, 0] = 0.3                       # axial velocity only
    rate = solver.rhs(solver.from_physical([y]))[0]
    assert np.abs(rate[1:-1]).max() < 1e-14


def test_transport_converges_first_order():
    # axial r+ decouples on a straight unit beam, so the exact solution is a shifted pulse
    sc = _transparent_beam()
    amp, c, w, T = 1e-6, 0.4, 0.3, 0.3
    exact = lambda x: amp * np.cos(np.pi * np.clip((x - c) / w, -0.5, 0.5)) ** 2
    errs = []
    for cells in (128, 256, 512):
        _, state, solver = simulate(sc, SimConfig(cells=cells, t_end=T, cfl=0.5),
                                    datum=bump(sc.beams, center=c, width=w, amplitude=amp))
        r = state[0]
        errs.append(np.sum(np.abs(r[:, 6] - exact(solver.xc[0] - T))) * solver.dx[0] / amp)
        assert np.abs(np.delete(r, 6, axis=1)).max() < 1e-3 * amp
    ratios = errs[0] / errs[1], errs[1] / errs[2]
    assert 1.75 < ratios[0] < ratios[1] < 2.05


def test_transparent_ends_absorb():
    sc = _transparent_beam()
    ts, _, _ = simulate(sc, SimConfig(cells=64, t_end=1.5),
                        datum=bump(sc.beams, center=0.5, width=0.3, amplitude=1e-4))
    assert ts.E_phys[-1] < 1e-12 * ts.E_phys[0]


def test_energy_of_constant_state():
    solver = NetworkSolver(_transparent_beam(), cells=10)
    state = solver.from_physical([np.ones((10, 12))])
    assert solver.energy_phys(state) == pytest.approx(12.0)
    assert solver.energy_diag(state) == pytest.approx(12.0)


def test_energy_representations_agree(rng):
    sc = star([random_beam(rng) for _ in range(3)])
    solver = NetworkSolver(sc, cells=12)
    state = [rng.standard_normal((12, 12)) for _ in range(3)]
    assert solver.energy_diag(state) == pytest.approx(solver.energy_phys(state), rel=1e-12)


def test_energy_decays_on_damped_star(unit_star):
    unit_star.initial = random_compatible([1.0] * 3, 3, 1e-2)
    ts, _, _ = simulate(unit_star, SimConfig(cells=32, t_end=2.0))
    assert ts.max_step_energy_increase <= 0.0
    assert ts.E_phys[-1] < ts.E_phys[0]


def test_fit_decay_rate():
    t = np.linspace(0, 4, 41)
    rate, r2 = fit_decay_rate(t, 3.0 * np.exp(-2 * 0.5 * t))
    assert rate == pytest.approx(0.5, rel=1e-12) and r2 == pytest.approx(1.0)
    rate, r2 = fit_decay_rate(t, np.full_like(t, 2.0))
    assert rate == pytest.approx(0.0, abs=1e-14) and r2 == 1.0
    rate, _ = fit_decay_rate(t, np.exp(-t), window=(1.0, 2.0))
    assert rate == pytest.approx(0.5)
    with pytest.raises(NonPositiveValues):
        fit_decay_rate(t, np.r_[1.0, np.zeros(40)])
    with pytest.raises(ValueError):
        fit_decay_rate([0.0], [1.0])


def test_cfl_violation(unit_star):
    with pytest.raises(CFLViolation):
        SimConfig(cfl=1.5)
    with pytest.raises(CFLViolation):
        SimConfig(cfl=0.0)
    solver = NetworkSolver(unit_star, cells=8)
    with pytest.raises(CFLViolation):
        solver.step(solver.initial_state(), 1.01 * solver.dt_max)


def test_time_step_respects_cfl(rng):
    sc = star([random_beam(rng) for _ in range(3)])
    ts, _, solver = simulate(sc, SimConfig(cells=16, t_end=0.37, cfl=0.8))
    assert ts.dt <= 0.8 * solver.dt_max
    assert ts.steps * ts.dt == pytest.approx(0.37)


def test_deterministic(unit_star):
    unit_star.initial = random_compatible([1.0] * 3, 5, 1e-2)
    a, sa, _ = simulate(unit_star, SimConfig(cells=16, t_end=0.5))
    b, sb, _ = simulate(unit_star, SimConfig(cells=16, t_end=0.5))
    assert a.E_phys == b.E_phys
    assert all(np.array_equal(x, y) for x, y in zip(sa, sb))


def test_blowup_detected(unit_star, monkeypatch):
    unit_star.initial = random_compatible([1.0] * 3, 5, 1e-2)
    monkeypatch.setattr(sys.modules["igeb_net.simulate"], "BLOWUP_FACTOR", 0.5)
    with pytest.raises(NonFiniteState):
        simulate(unit_star, SimConfig(cells=16, t_end=2.0))


def test_nan_state_detected(unit_star):
    datum = InitialDatum(lambda i, xs: np.full((len(xs), 12), 1e-3), "c")
    solver = NetworkSolver(unit_star, cells=8)
    solver.rhs = lambda state, ghosts=None: [np.full_like(r, np.nan) for r in state]
    with pytest.raises(NonFiniteState):
        simulate(unit_star, SimConfig(cells=8, t_end=0.1), solver=solver, datum=datum)


def test_writers(tmp_path, unit_star):
    unit_star.initial = random_compatible([1.0] * 3, 2, 1e-2)
    ts, _, _ = simulate(unit_star, SimConfig(cells=16, t_end=0.2, record_stride=3))
    write_csv(ts, tmp_path / "ts.csv")
    write_json(ts, tmp_path / "ts.json", "abc")
    lines = (tmp_path / "ts.csv").read_text().splitlines()
    assert lines[0] == "t,E_phys,E_diag,Lyap,H1"
    assert len(lines) == len(ts.times) + 1
    assert float(lines[1].split(",")[1]) == ts.E_phys[0]
    doc = json.loads((tmp_path / "ts.json").read_text())
    assert doc["scenario_hash"] == "abc"
    assert doc["Lyap"] == [None] * len(ts.times)
    assert doc["t"][-1] == pytest.approx(0.2)
