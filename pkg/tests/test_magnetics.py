import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from emff.config import MU0, CoilParams, SwarmConfig
from emff.errors import NotConverged, SaturationExceeded, SeparationTooSmall
from emff.magnetics import (DipolePair, allocate_dipoles, averaged_wrench, dc_wrench,
                            dipole_force, dipole_torque, instantaneous_dipole,
                            pairs_to_vector, stack_wrenches, vector_to_pairs)

vec = arrays(np.float64, 3, elements=st.floats(-50, 50))
sep = arrays(np.float64, 3, elements=st.floats(-3, 3)).filter(lambda r: np.linalg.norm(r) > 0.3)


def random_pairs(rng, n, scale=100.0):
    return [DipolePair(rng.normal(size=3) * scale, rng.normal(size=3) * scale) for _ in range(n)]


def spread_positions(rng, n, min_sep=0.8):
    while True:
        p = rng.uniform(-2, 2, (n, 3))
        d = np.linalg.norm(p[:, None] - p[None], axis=-1)[np.triu_indices(n, 1)]
        if d.min() > min_sep:
            return p


# -- frozen oracles -------------------------------------------------------

def test_force_hand_value():
    f = dipole_force(np.array([0, 0, 10.0]), np.array([0, 0, 10.0]), np.array([0, 0, 1.0]))
    np.testing.assert_allclose(f, [0, 0, -6e-5], rtol=1e-12, atol=1e-20)


def test_torque_hand_value():
    t = dipole_torque(np.array([10.0, 0, 0]), np.array([0, 10.0, 0]), np.array([0, 0, 1.0]))
    np.testing.assert_allclose(t, [0, 0, 1e-5], rtol=1e-12, atol=1e-20)


def test_zero_dipole_gives_zero_force(rng):
    for _ in range(10):
        f = dipole_force(np.zeros(3), rng.normal(size=3), rng.normal(size=3) + 2)
        assert np.all(f == 0)


def test_parallel_dipole_has_no_torque(rng):
    mu_i = rng.normal(size=3)
    r = np.array([0.3, -1.2, 0.7])
    d = np.linalg.norm(r)
    field = 3 * r * (mu_i @ r) / d ** 5 - mu_i / d ** 3
    t = dipole_torque(mu_i, 4.0 * field, r)
    assert np.linalg.norm(t) < 1e-15 * np.linalg.norm(field) ** 2


def test_separation_guard():
    with pytest.raises(SeparationTooSmall):
        dipole_force(np.ones(3), np.ones(3), np.array([0.05, 0, 0]))
    with pytest.raises(SeparationTooSmall):
        dipole_torque(np.ones(3), np.ones(3), np.zeros(3))


def test_swap_antisymmetry(rng):
    for _ in range(100):
        mi, mj = rng.normal(size=(2, 3)) * 10
        r = rng.normal(size=3)
        r *= 1.5 / np.linalg.norm(r)
        f1 = dipole_force(mj, mi, -r)
        f2 = dipole_force(mi, mj, r)
        assert np.linalg.norm(f1 + f2) <= 1e-12 * np.linalg.norm(f2)


def test_pair_angular_momentum_balance(rng):
    for _ in range(100):
        mi, mj = rng.normal(size=(2, 3)) * 10
        r = rng.normal(size=3)
        r *= rng.uniform(0.5, 3) / np.linalg.norm(r)
        t_j = dipole_torque(mi, mj, r)
        t_i = dipole_torque(mj, mi, -r)
        f_j = dipole_force(mi, mj, r)
        total = t_j + t_i + np.cross(r, f_j)
        scale = np.linalg.norm(t_j) + np.linalg.norm(t_i) + np.linalg.norm(r) * np.linalg.norm(f_j)
        assert np.linalg.norm(total) <= 1e-12 * scale


# -- properties -----------------------------------------------------------

def natural_scale(mi, mj, r, power):
    """|mu_i| |mu_j| mu0 / (4 pi d^power): the size any term can reach."""
    return 1e-7 * np.linalg.norm(mi) * np.linalg.norm(mj) / np.linalg.norm(r) ** power


def close(a, b, ref, tol):
    return np.linalg.norm(a - b) <= tol * ref


@given(vec, vec, sep, st.floats(-5, 5), st.floats(-5, 5))
def test_bilinearity(mi, mj, r, a, b):
    ref_f = abs(a * b) * natural_scale(mi, mj, r, 4) * 30
    ref_t = abs(a * b) * natural_scale(mi, mj, r, 3) * 30
    assert close(dipole_force(a * mi, b * mj, r), a * b * dipole_force(mi, mj, r), ref_f, 1e-13)
    assert close(dipole_torque(a * mi, b * mj, r), a * b * dipole_torque(mi, mj, r), ref_t, 1e-13)


@given(vec, vec, sep, st.floats(0.5, 5))
def test_scaling_law(mi, mj, r, k):
    ref_f = natural_scale(mi, mj, r, 4) * 30 / k ** 4
    ref_t = natural_scale(mi, mj, r, 3) * 30 / k ** 3
    assert close(dipole_force(mi, mj, k * r), dipole_force(mi, mj, r) / k ** 4, ref_f, 1e-13)
    assert close(dipole_torque(mi, mj, k * r), dipole_torque(mi, mj, r) / k ** 3, ref_t, 1e-13)


@given(vec, vec, sep)
def test_action_reaction(mi, mj, r):
    f = dipole_force(mi, mj, r)
    g = dipole_force(mj, mi, -r)
    assert close(f, -g, natural_scale(mi, mj, r, 4) * 30, 1e-13)


# -- AC modulation and averaging -----------------------------------------

def test_instantaneous_dipole_phases(rng):
    p = DipolePair(rng.normal(size=3), rng.normal(size=3))
    w = 37.0
    np.testing.assert_allclose(instantaneous_dipole(p, 0.0, w), p.mu_cos, atol=1e-15)
    np.testing.assert_allclose(instantaneous_dipole(p, np.pi / (2 * w), w), p.mu_sin, atol=1e-14)
    ts = np.linspace(0, 2 * np.pi / w, 400, endpoint=False)
    mean = np.mean([instantaneous_dipole(p, t, w) for t in ts], axis=0)
    np.testing.assert_allclose(mean, 0.0, atol=1e-14)


def test_dipole_pair_validation():
    with pytest.raises(ValueError):
        DipolePair(np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        DipolePair(np.array([np.nan, 0, 0]), np.ones(3))


def test_cos_free_average_is_half_dc(rng):
    pos = spread_positions(rng, 3)
    sins = rng.normal(size=(3, 3)) * 50
    avg = averaged_wrench([DipolePair(s, np.zeros(3)) for s in sins], pos)
    f, t = dc_wrench(sins, pos)
    for j in range(3):
        np.testing.assert_allclose(avg[j].force, 0.5 * f[j], rtol=1e-14, atol=0)
        np.testing.assert_allclose(avg[j].torque, 0.5 * t[j], rtol=1e-14, atol=0)


def quadrature_average(pairs, pos, w=10.0, samples=64):
    """Mean of the instantaneous wrench over one AC period (trapezoid rule)."""
    ts = np.arange(samples) * (2 * np.pi / w) / samples
    fs = np.zeros((len(pos), 3))
    ts_ = np.zeros((len(pos), 3))
    for t in ts:
        f, tq = dc_wrench([instantaneous_dipole(p, t, w) for p in pairs], pos)
        fs += f
        ts_ += tq
    return fs / samples, ts_ / samples


def test_average_matches_quadrature(rng):
    for _ in range(10):
        pos = spread_positions(rng, 3)
        pairs = random_pairs(rng, 3)
        fq, tq = quadrature_average(pairs, pos)
        avg = averaged_wrench(pairs, pos)
        f = np.array([a.force for a in avg])
        t = np.array([a.torque for a in avg])
        assert np.abs(f - fq).max() <= 1e-8 * np.abs(f).max()
        assert np.abs(t - tq).max() <= 1e-8 * np.abs(t).max()


def test_averaged_forces_sum_to_zero(rng):
    for n in (2, 3, 5):
        pos = spread_positions(rng, n)
        avg = averaged_wrench(random_pairs(rng, n), pos)
        f = np.array([a.force for a in avg])
        assert np.linalg.norm(f.sum(axis=0)) <= 1e-12 * np.abs(f).sum()


def test_stack_wrenches_layout(rng):
    pos = spread_positions(rng, 3)
    sig = rng.normal(size=(3, 3)) * 0.3
    avg = averaged_wrench(random_pairs(rng, 3), pos)
    u = stack_wrenches(avg, sig)
    assert u.shape == (15,)
    np.testing.assert_array_equal(u[:3], avg[1].force)
    np.testing.assert_array_equal(u[3:6], avg[2].force)
    from emff.kinematics import mrp_to_dcm
    np.testing.assert_allclose(mrp_to_dcm(sig[0]) @ u[6:9], avg[0].torque, rtol=1e-12)


def test_pair_vector_round_trip(rng):
    pairs = random_pairs(rng, 4)
    back = vector_to_pairs(pairs_to_vector(pairs))
    for a, b in zip(pairs, back):
        np.testing.assert_array_equal(a.mu_sin, b.mu_sin)
        np.testing.assert_array_equal(a.mu_cos, b.mu_cos)


# -- allocation -----------------------------------------------------------

def test_zero_target_zero_guess():
    pos = np.array([[0, 0, 0], [1.5, 0, 0], [0, 1.5, 0]], dtype=float)
    res = allocate_dipoles(np.zeros(15), pos, np.zeros((3, 3)), [DipolePair.zero()] * 3)
    assert res.residual == 0.0
    assert res.iterations == 0
    assert np.all(pairs_to_vector(res.pairs) == 0)


def test_allocation_round_trip(rng):
    for _ in range(10):
        pos = spread_positions(rng, 3)
        sig = rng.normal(size=(3, 3)) * 0.3
        pairs = random_pairs(rng, 3)
        target = stack_wrenches(averaged_wrench(pairs, pos), sig)
        x0 = pairs_to_vector(pairs)
        guess = vector_to_pairs(x0 + 0.2 * np.abs(x0).mean() * rng.normal(size=x0.size))
        res = allocate_dipoles(target, pos, sig, guess, tol=1e-6)
        got = stack_wrenches(averaged_wrench(res.pairs, pos), sig)
        assert np.linalg.norm(got - target) <= 1e-6 * np.linalg.norm(target)
        assert res.residual <= 1e-6


def test_infeasible_target_raises(rng):
    sw = SwarmConfig(np.full(3, 3.0), np.stack([np.eye(3)] * 3),
                     coils=tuple(CoilParams(turns=1, area=0.1, current_max=1.0) for _ in range(3)))
    pos = np.array([[0, 0, 0], [1.5, 0, 0], [0, 1.5, 0]], dtype=float)
    target = np.full(15, 1e3)
    with pytest.raises((NotConverged, SaturationExceeded)) as info:
        allocate_dipoles(target, pos, np.zeros((3, 3)), random_pairs(rng, 3), sw, max_iter=60)
    assert info.value.pairs is not None
    assert np.isfinite(info.value.residual)


def test_allocation_target_length_checked(rng):
    pos = spread_positions(rng, 3)
    with pytest.raises(ValueError):
        allocate_dipoles(np.zeros(14), pos, np.zeros((3, 3)), random_pairs(rng, 3))


def test_mu0_default():
    assert MU0 == pytest.approx(4e-7 * np.pi, rel=1e-15)
