import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_q, random_swarm
from emff.config import SwarmConfig
from emff.constraint import (ConstraintGeometry, angular_momentum, basis_dir, full_positions,
                             momentum_map, momentum_matrix, momentum_matrix_dir,
                             nullspace_basis, nullspace_basis_rate)
from emff.dynamics import mass_matrix
from emff.kinematics import apply_zhat, mrp_to_dcm, split_q


def test_full_positions_centre_of_mass(rng, fig_swarm):
    q = random_q(rng, 3)
    pos = full_positions(q, fig_swarm)
    np.testing.assert_allclose(fig_swarm.masses @ pos, 0, atol=1e-14)
    np.testing.assert_array_equal(pos[1:].ravel(), q[:6])


def test_attitude_blocks_at_zero_attitude(rng, fig_swarm):
    q = np.concatenate([rng.normal(size=6), np.zeros(9)])
    a = momentum_matrix(q, fig_swarm)
    for j in range(3):
        np.testing.assert_array_equal(a[:, 6 + 3 * j:9 + 3 * j], fig_swarm.inertias[j])


def test_a_zeta_is_total_angular_momentum(rng):
    for n in (2, 3, 4):
        sw = random_swarm(rng, n)
        for _ in range(20):
            q = random_q(rng, n)
            zeta = rng.normal(size=6 * n - 3)
            h = angular_momentum(q, zeta, sw)
            assert np.linalg.norm(momentum_matrix(q, sw) @ zeta - h) <= 1e-12 * np.linalg.norm(h)


def test_angular_momentum_explicit_sum():
    # two satellites, unit masses, r_2 = (1,0,0) moving along y, no spin
    sw = SwarmConfig(np.ones(2), np.stack([np.eye(3)] * 2))
    q = np.array([1.0, 0, 0, 0, 0, 0, 0, 0, 0])
    zeta = np.array([0, 1.0, 0, 0, 0, 0, 0, 0, 0])
    # r_1 = -r_2, v_1 = -v_2: H = 2 * (1,0,0) x (0,1,0) = (0,0,2)
    np.testing.assert_allclose(angular_momentum(q, zeta, sw), [0, 0, 2.0], atol=1e-15)


def test_doubling_masses_doubles_a(rng, fig_swarm):
    q = random_q(rng, 3)
    np.testing.assert_allclose(momentum_matrix(q, fig_swarm.scaled(2.0)),
                               2 * momentum_matrix(q, fig_swarm), rtol=1e-14, atol=1e-15)


def test_nullspace_properties(rng):
    for n in (2, 3, 4):
        sw = random_swarm(rng, n)
        for _ in range(50):
            q = random_q(rng, n)
            a = momentum_matrix(q, sw)
            s = nullspace_basis(q, sw)
            np.testing.assert_array_equal(s[:6 * n - 6], np.eye(6 * n - 6))
            scale = np.linalg.norm(a, 2) * np.linalg.norm(s, 2)
            assert np.abs(a @ s).max() <= 1e-10 * scale
            assert np.linalg.matrix_rank(s) == 6 * n - 6


@given(st.integers(0, 2 ** 31), st.sampled_from([2, 3, 4]))
def test_reconstructed_velocity_has_zero_momentum(seed, n):
    rng = np.random.default_rng(seed)
    sw = random_swarm(rng, n)
    q = random_q(rng, n)
    s = nullspace_basis(q, sw)
    v = rng.normal(size=6 * n - 6)
    h = momentum_matrix(q, sw) @ (s @ v)
    assert np.linalg.norm(h) <= 1e-12 * np.linalg.norm(momentum_matrix(q, sw), 2) * np.linalg.norm(s @ v)


def test_momentum_matrix_dir_matches_difference(rng, fig_swarm):
    q, d = random_q(rng, 3), rng.normal(size=15)
    h = 1e-6
    fd = (momentum_matrix(q + h * d, fig_swarm) - momentum_matrix(q - h * d, fig_swarm)) / (2 * h)
    np.testing.assert_allclose(momentum_matrix_dir(q, d, fig_swarm), fd, atol=1e-8)


def test_basis_rate_zero_at_rest(rng, fig_swarm):
    q = random_q(rng, 3)
    assert np.all(nullspace_basis_rate(q, np.zeros(15), fig_swarm) == 0)


def test_basis_rate_matches_difference(rng):
    for n in (2, 3, 4):
        sw = random_swarm(rng, n)
        q = random_q(rng, n)
        zeta = rng.normal(size=6 * n - 3)
        qd = apply_zhat(q, zeta, n)
        h = 1e-6
        fd = (nullspace_basis(q + h * qd, sw) - nullspace_basis(q - h * qd, sw)) / (2 * h)
        np.testing.assert_allclose(nullspace_basis_rate(q, zeta, sw), fd, atol=1e-7)


def test_differentiated_constraint(rng):
    for n in (2, 3, 4):
        sw = random_swarm(rng, n)
        for _ in range(10):
            q = random_q(rng, n)
            zeta = rng.normal(size=6 * n - 3)
            qd = apply_zhat(q, zeta, n)
            a = momentum_matrix(q, sw)
            total = momentum_matrix_dir(q, qd, sw) @ nullspace_basis(q, sw) + \
                a @ nullspace_basis_rate(q, zeta, sw)
            assert np.abs(total).max() <= 1e-8


def test_r_m_s_vanishes(rng):
    for n in (2, 3, 4):
        sw = random_swarm(rng, n)
        for _ in range(20):
            q = random_q(rng, n)
            r = momentum_map(q, sw)
            rms = r @ mass_matrix(sw) @ nullspace_basis(q, sw)
            assert np.abs(rms).max() <= 1e-10 * max(1.0, np.abs(r @ mass_matrix(sw)).max())


def test_momentum_map_torque_oracle(rng, fig_swarm):
    # action on satellites 2..n is balanced by satellite 1: f_1 = -sum f_j
    q = random_q(rng, 3)
    u = rng.normal(size=15)
    pos = full_positions(q, fig_swarm)
    forces = u[:6].reshape(2, 3)
    f1 = -forces.sum(axis=0)
    _, sig = split_q(q, 3)
    expected = np.cross(pos[0], f1) + sum(np.cross(pos[j + 1], forces[j]) for j in range(2))
    expected = expected + sum(mrp_to_dcm(sig[j]) @ u[6 + 3 * j:9 + 3 * j] for j in range(3))
    np.testing.assert_allclose(momentum_map(q, fig_swarm) @ u, expected, atol=1e-13)


def test_pure_force_on_satellite_two(rng, fig_swarm):
    q = random_q(rng, 3)
    pos = full_positions(q, fig_swarm)
    f = rng.normal(size=3)
    u = np.zeros(15)
    u[:3] = f
    np.testing.assert_allclose(momentum_map(q, fig_swarm) @ u, np.cross(pos[1] - pos[0], f),
                               atol=1e-14)


def test_geometry_bundle(rng, fig_swarm):
    q = random_q(rng, 3)
    zeta = rng.normal(size=15)
    g = ConstraintGeometry.at(q, zeta, fig_swarm)
    np.testing.assert_array_equal(g.A, momentum_matrix(q, fig_swarm))
    np.testing.assert_array_equal(g.S, nullspace_basis(q, fig_swarm))
    np.testing.assert_allclose(g.S_dot, basis_dir(q, apply_zhat(q, zeta, 3), fig_swarm))
    np.testing.assert_array_equal(g.R, momentum_map(q, fig_swarm))
