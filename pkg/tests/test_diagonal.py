import numpy as np
import pytest

from igeb_net import BeamParams, NetworkScenario, NetworkTopology, NodeCondition, ParamField, RotationField
from igeb_net.diagonal import (build_diagonalization, build_nodal_coupling, riemann_forward, riemann_inverse,
                               transparent_gain)
from igeb_net.errors import EigenvalueCrossing, GridMismatch
from igeb_net.linalg import spd_power

from conftest import random_beam, random_spd


def _sampled_beam(rng, n=5, length=1.5):
    xs = np.linspace(0.0, length, n)
    M = [random_spd(rng) for _ in xs]
    C = [random_spd(rng) for _ in xs]
    return BeamParams(length, ParamField.sampled(xs, M), ParamField.sampled(xs, C),
                      RotationField.constant_curvature(rng.standard_normal(3)))


def test_L_inverse_and_theta_factorization(rng):
    b = _sampled_beam(rng)
    d = build_diagonalization(b, np.linspace(0, b.length, 33))
    np.testing.assert_allclose(d.L @ d.Linv, np.broadcast_to(np.eye(12), d.L.shape), atol=1e-11)
    UtD2U = np.swapaxes(d.U, -1, -2) @ (d.D[..., :, None] ** 2 * d.U)
    np.testing.assert_allclose(UtD2U, d.Theta, atol=1e-12)
    # Theta = C^-1/2 M^-1 C^-1/2 computed independently
    k = 17
    Ci = spd_power(d.C[k], -0.5)
    np.testing.assert_allclose(d.Theta[k], Ci @ np.linalg.inv(d.M[k]) @ Ci, atol=1e-12)
    assert np.all(d.D > 0)


def test_L_diagonalizes_A(rng):
    b = random_beam(rng)
    d = build_diagonalization(b, np.array([0.0, b.length]))
    LAL = d.L[0] @ d.A[0] @ d.Linv[0]
    np.testing.assert_allclose(LAL, np.diag(d.speeds[0]), atol=1e-11)


def test_split_coefficient(rng):
    b = random_beam(rng)
    d = build_diagonalization(b, np.array([0.0]))
    top_left, top_right = d.L[0, :6, :6], d.L[0, :6, 6:]
    coeff = np.linalg.solve(top_left, top_right)
    Cs = spd_power(d.C[0], 0.5)
    np.testing.assert_allclose(coeff, Cs @ spd_power(d.Theta[0], 0.5) @ Cs, atol=1e-11)
    np.testing.assert_allclose(np.linalg.solve(d.L[0, 6:, :6], d.L[0, 6:, 6:]), -coeff, atol=1e-11)


def test_split_coefficient_scaled_mass():
    b = BeamParams.uniform(1.0, M=2 * np.eye(6))
    d = build_diagonalization(b, np.array([0.0]))
    coeff = np.linalg.solve(d.L[0, :6, :6], d.L[0, :6, 6:])
    np.testing.assert_allclose(coeff, np.eye(6) / np.sqrt(2), atol=1e-14)
    np.testing.assert_allclose(d.D[0], np.full(6, 1 / np.sqrt(2)))


def test_unit_parameters_riemann_variables(rng):
    b = BeamParams.uniform(1.0)
    xs = np.linspace(0, 1, 4)
    d = build_diagonalization(b, xs)
    y = rng.standard_normal((4, 12))
    r = riemann_forward(d, y)
    v, z = y[:, :6], y[:, 6:]
    np.testing.assert_allclose(r[:, :6], v + z, atol=1e-14)
    np.testing.assert_allclose(r[:, 6:], v - z, atol=1e-14)
    np.testing.assert_allclose(riemann_inverse(d, r), y, atol=1e-14)


def test_crossing_is_rejected():
    # two eigenvalues of a diagonal field cross inside the beam, hidden by a constant rotation
    xs = np.array([0.0, 1.0])
    C0 = np.diag([1.0, 2.0, 3, 4, 5, 6])
    C1 = np.diag([2.0, 1.0, 3, 4, 5, 6])
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    b = BeamParams(1.0, ParamField.const(np.eye(6)), ParamField.sampled(xs, [q @ C0 @ q.T, q @ C1 @ q.T]))
    with pytest.raises(EigenvalueCrossing):
        build_diagonalization(b, np.linspace(0, 1, 11))


def test_sampled_diagonal_field_is_accepted():
    # starting at the identity makes eigenvalues coincide; a diagonal field is still smooth
    xs = np.linspace(0.0, 1.0, 5)
    Cs = [np.diag(1.0 + x * np.arange(1, 7)) for x in xs]
    b = BeamParams(1.0, ParamField.const(np.eye(6)), ParamField.sampled(xs, Cs))
    d = build_diagonalization(b, np.linspace(0, 1, 9))
    np.testing.assert_allclose(d.L @ d.Linv, np.broadcast_to(np.eye(12), d.L.shape), atol=1e-11)


def test_constant_parameters_B_is_similarity(rng):
    b = random_beam(rng)
    d = build_diagonalization(b, np.linspace(0, b.length, 5))
    np.testing.assert_allclose(d.B, d.L @ d.Bbar @ d.Linv, atol=1e-13)


def test_B_derivative_term_against_differences(rng):
    b = _sampled_beam(rng, n=3)
    errs = []
    for n in (161, 641):
        xs = np.linspace(0, b.length, n)
        d = build_diagonalization(b, xs)
        dLinv = np.gradient(d.Linv, xs, axis=0, edge_order=2)
        k = (n - 1) // 4                         # inside a segment of the piecewise-linear fields
        expected = d.L[k] @ d.Bbar[k] @ d.Linv[k] + d.L[k] @ d.A[k] @ dLinv[k]
        errs.append(np.abs(d.B[k] - expected).max())
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 10


def test_grid_mismatch(rng):
    b = BeamParams.uniform(1.0)
    d = build_diagonalization(b, np.linspace(0, 1, 5))
    with pytest.raises(GridMismatch):
        riemann_forward(d, np.zeros((4, 12)))
    with pytest.raises(GridMismatch):
        build_diagonalization(b, np.array([0.5, 0.2]))


def _coupling(sc):
    diags = [build_diagonalization(b, np.array([0.0, b.length])) for b in sc.beams]
    return build_nodal_coupling(sc, diags)


def test_simple_node_reflections(rng):
    b = random_beam(rng)
    sc = NetworkScenario(NetworkTopology((0,)), [b], {
        0: NodeCondition.free(), 1: NodeCondition.clamped()})
    c = _coupling(sc)
    np.testing.assert_array_equal(c[0].Bn, np.eye(6))
    np.testing.assert_array_equal(c[1].Bn, -np.eye(6))
    sc = NetworkScenario(NetworkTopology((0,)), [b], {
        0: NodeCondition.feedback(transparent_gain(b, "start")),
        1: NodeCondition.feedback(transparent_gain(b, "end"))})
    c = _coupling(sc)
    assert np.abs(c[0].Bn).max() < 1e-12 and np.abs(c[1].Bn).max() < 1e-12


def test_transparent_gain_unit_parameters():
    np.testing.assert_allclose(transparent_gain(BeamParams.uniform(1.0), "end"), np.eye(6), atol=1e-15)
    np.testing.assert_allclose(transparent_gain(BeamParams.uniform(1.0, M=4 * np.eye(6)), 0), 2 * np.eye(6))


def test_identical_serial_joint_is_transmission(rng):
    b = random_beam(rng)
    sc = NetworkScenario(NetworkTopology((0, 1)), [b, b], {
        0: NodeCondition.free(), 1: NodeCondition.free(), 2: NodeCondition.free()})
    Bn = _coupling(sc)[1].Bn
    Z, I = np.zeros((6, 6)), np.eye(6)
    np.testing.assert_allclose(Bn, np.block([[Z, I], [I, Z]]), atol=1e-12)
