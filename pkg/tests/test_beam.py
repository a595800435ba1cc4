import numpy as np
import pytest
from scipy.linalg import expm

from igeb_net.beam import (BeamParams, ParamField, RotationField, assemble_A, assemble_Bbar, assemble_E,
                           energy_matrix, gbar_eval, gbar_quadratic_forms)
from igeb_net.errors import NotRotation, NotSPD, OutOfDomain
from igeb_net.linalg import hat

from conftest import random_rotation, random_spd

E1 = np.array([1.0, 0.0, 0.0])
Z6 = np.zeros((6, 6))


def test_E_straight_beam():
    E = assemble_E(BeamParams.uniform(1.0), 0.3)
    expected = np.zeros((6, 6))
    expected[3:, :3] = hat(E1)
    np.testing.assert_array_equal(E, expected)


def test_E_constant_curvature_blocks():
    kappa = np.array([0.0, 0.0, 0.7])
    b = BeamParams.uniform(1.0, rotation=RotationField.constant_curvature(kappa))
    E = assemble_E(b, 0.5)
    np.testing.assert_allclose(E[:3, :3], hat(kappa))
    np.testing.assert_allclose(E[3:, 3:], hat(kappa))
    np.testing.assert_allclose(E[3:, :3], hat(E1))
    np.testing.assert_array_equal(E[:3, 3:], 0)


def test_sampled_helix_curvature_second_order():
    kappa = np.array([0.4, 0.0, 1.1])        # twist plus bending: a helix
    errs = []
    for n in (21, 41, 81):
        xs = np.linspace(0.0, 2.0, n)
        Rs = np.array([expm(x * hat(kappa)) for x in xs])
        b = BeamParams.uniform(2.0, rotation=RotationField.sampled(xs, Rs))
        errs.append(np.max(np.abs(b.curvature(xs) - kappa)))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_A_unit_parameters():
    A = assemble_A(BeamParams.uniform(1.0), 0.0)
    np.testing.assert_array_equal(A, np.block([[Z6, -np.eye(6)], [-np.eye(6), Z6]]))
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(A).real), [-1] * 6 + [1] * 6)


def test_A_diagonal_mass():
    M = np.diag([2.0] * 6)
    A = assemble_A(BeamParams.uniform(1.0, M=M), 0.0)
    np.testing.assert_allclose(A[:6, 6:], -np.diag([0.5] * 6))


def test_A_random_hyperbolic(rng):
    for _ in range(10):
        A = assemble_A(BeamParams.uniform(1.0, random_spd(rng), random_spd(rng)), 0.0)
        ev = np.linalg.eigvals(A)
        assert np.max(np.abs(ev.imag)) < 1e-10
        assert np.sum(ev.real > 0) == 6 and np.sum(ev.real < 0) == 6


def test_Bbar_straight_unit():
    b = BeamParams.uniform(1.0)
    E = assemble_E(b, 0.0)
    Bb = assemble_Bbar(b, 0.0)
    np.testing.assert_array_equal(Bb, np.block([[Z6, -E], [E.T, Z6]]))
    assert np.linalg.norm(Bb, 2) == pytest.approx(1.0)


def test_energy_products_structure(rng):
    # the products actually satisfy: Q^P A = [[0,-I],[-I,0]] (symmetric) and Q^P Bbar skew
    b = BeamParams(1.0, ParamField.sampled([0, 1], [random_spd(rng), random_spd(rng)]),
                   ParamField.const(random_spd(rng)), RotationField.constant_curvature(rng.standard_normal(3)))
    for x in np.linspace(0, 1, 9):
        Q = energy_matrix(b, x)
        QA, QB = Q @ assemble_A(b, x), Q @ assemble_Bbar(b, x)
        np.testing.assert_allclose(QA, np.block([[Z6, -np.eye(6)], [-np.eye(6), Z6]]), atol=1e-12)
        np.testing.assert_allclose(QB + QB.T, 0, atol=1e-12)
        E = assemble_E(b, x)
        np.testing.assert_allclose(QB, np.block([[Z6, -E], [E.T, Z6]]), atol=1e-12)


def test_gbar_basic_properties(rng):
    b = BeamParams.uniform(1.0, random_spd(rng), random_spd(rng))
    assert np.array_equal(gbar_eval(b, 0.2, np.zeros(12)), np.zeros(12))
    u = rng.standard_normal(12)
    np.testing.assert_allclose(gbar_eval(b, 0.2, 2 * u), 4 * gbar_eval(b, 0.2, u), rtol=1e-12, atol=1e-12)


def test_gbar_block_example():
    u = np.zeros(12)
    u[0], u[4] = 1.0, 1.0                  # u1 = e1, u2 = e2
    g = gbar_eval(BeamParams.uniform(1.0), 0.0, u)
    expected = np.zeros(12)
    expected[2] = 1.0                      # (e3, 0, 0, 0)
    np.testing.assert_allclose(g, expected, atol=1e-15)


def test_gbar_quadratic_forms_agree(rng):
    b = BeamParams.uniform(1.0, random_spd(rng), random_spd(rng))
    G = gbar_quadratic_forms(b, 0.4)
    np.testing.assert_array_equal(G, np.swapaxes(G, 1, 2))
    for _ in range(100):
        u = rng.standard_normal(12)
        np.testing.assert_allclose(np.einsum("i,mij,j->m", u, G, u), gbar_eval(b, 0.4, u), atol=1e-12)


def test_gbar_is_energy_neutral(rng):
    b = BeamParams.uniform(1.0, random_spd(rng), random_spd(rng))
    for _ in range(20):
        u = rng.standard_normal(12)
        assert abs(u @ energy_matrix(b, 0.0) @ gbar_eval(b, 0.0, u)) < 1e-12


def test_out_of_domain():
    b = BeamParams.uniform(1.0)
    with pytest.raises(OutOfDomain):
        assemble_A(b, 1.5)
    with pytest.raises(OutOfDomain):
        BeamParams.uniform(0.0)


def test_param_field_validation(rng):
    with pytest.raises(NotSPD):
        ParamField.const(np.diag([1.0, 1, 1, 1, 1, -1]))
    with pytest.raises(NotSPD):
        ParamField.const(np.diag([1.0, 1, 1, 1, 1, 1e-13]))      # condition number above 1e12
    with pytest.raises(NotSPD):
        ParamField.sampled([0.0, 0.0], [np.eye(6), np.eye(6)])
    f = ParamField.sampled([0.0, 1.0], [np.eye(6), 3 * np.eye(6)])
    np.testing.assert_allclose(f(0.5), 2 * np.eye(6))
    with pytest.raises(OutOfDomain):
        BeamParams(2.0, f, ParamField.const(np.eye(6)))


def test_rotation_validation(rng):
    with pytest.raises(NotRotation):
        RotationField.constant(2 * np.eye(3))
    with pytest.raises(NotRotation):
        RotationField.constant(np.diag([1.0, 1.0, -1.0]))
    R = random_rotation(rng)
    b = BeamParams.uniform(1.0, rotation=RotationField.constant(R))
    np.testing.assert_array_equal(b.R(0.3), R)
    assert np.array_equal(b.curvature(0.3), np.zeros(3))
