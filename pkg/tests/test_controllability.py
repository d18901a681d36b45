import numpy as np
import pytest

from conftest import random_swarm, separated_q
from emff.config import SwarmConfig
from emff.constraint import momentum_matrix
from emff.controllability import (accessibility_rank, bracket_field, build_affine_system,
                                  classify, classify_brackets, hall_basis, lie_bracket,
                                  numerical_rank, span_residual, spanning_set, witt_dimension,
                                  word_to_str)
from emff.errors import DegenerateState


def rest_state(rng, sw):
    q = separated_q(rng, sw)
    return np.concatenate([q, np.zeros(sw.dim_q)])


def moving_state(rng, sw):
    q = separated_q(rng, sw)
    return np.concatenate([q, rng.normal(size=sw.dim_q) * 0.3])


# -- the affine system ----------------------------------------------------

def test_system_shapes_and_structure(rng, fig_swarm):
    sysm = build_affine_system(fig_swarm)
    assert sysm.dim == 30 and sysm.n_inputs == 12
    x = rest_state(rng, fig_swarm)
    assert np.all(sysm.drift(x) == 0)
    x = moving_state(rng, fig_swarm)
    G = sysm.control_fields(x)
    assert G.shape == (30, 12)
    assert np.all(G[:15] == 0)
    np.testing.assert_array_equal(sysm.control(3, x), G[:, 2])


def test_input_fields_are_velocity_independent(rng, fig_swarm):
    sysm = build_affine_system(fig_swarm)
    x = moving_state(rng, fig_swarm)
    y = x.copy()
    y[15:] = rng.normal(size=15)
    np.testing.assert_array_equal(sysm.control_fields(x), sysm.control_fields(y))


# -- brackets -------------------------------------------------------------

def test_bracket_of_field_with_itself(rng, fig_swarm):
    sysm = build_affine_system(fig_swarm)
    x = moving_state(rng, fig_swarm)
    assert np.linalg.norm(lie_bracket(sysm.drift, sysm.drift, x)) <= 1e-9


def test_constant_fields_commute(rng):
    a, b = rng.normal(size=(2, 5))
    x = rng.normal(size=5)
    assert np.all(lie_bracket(lambda y: a, lambda y: b, x) == 0)


def test_linear_field_oracle(rng):
    for _ in range(10):
        A, B = rng.normal(size=(2, 6, 6))
        x = rng.normal(size=6)
        got = lie_bracket(lambda y: A @ y, lambda y: B @ y, x)
        np.testing.assert_allclose(got, (B @ A - A @ B) @ x, rtol=1e-7, atol=1e-8)


def test_fourth_order_stencil_is_sharper(rng):
    f = lambda y: np.sin(y) * y[::-1]
    g = lambda y: np.cos(2 * y)
    x = rng.normal(size=4)
    exact = lie_bracket(f, g, x, 1e-5, 4)
    e2 = np.linalg.norm(lie_bracket(f, g, x, 1e-2, 2) - exact)
    e4 = np.linalg.norm(lie_bracket(f, g, x, 1e-2, 4) - exact)
    assert e4 < 1e-2 * e2
    with pytest.raises(ValueError):
        lie_bracket(f, g, x, 1e-3, 3)


def test_antisymmetry_and_bilinearity(rng, fig_swarm):
    sysm = build_affine_system(fig_swarm)
    x = moving_state(rng, fig_swarm)
    f0, g1, g2 = sysm.drift, sysm.field(1), sysm.field(2)
    ab = lie_bracket(f0, g1, x)
    ba = lie_bracket(g1, f0, x)
    assert np.linalg.norm(ab + ba) <= 1e-4 * np.linalg.norm(ab)
    combo = lambda y: 2.0 * g1(y) - 3.0 * g2(y)
    lhs = lie_bracket(f0, combo, x)
    rhs = 2.0 * ab - 3.0 * lie_bracket(f0, g2, x)
    assert np.linalg.norm(lhs - rhs) <= 1e-4 * np.linalg.norm(rhs)


def test_jacobi_identity(rng, fig_swarm):
    # third field is itself a bracket so no term vanishes identically
    sysm = build_affine_system(fig_swarm)
    x = moving_state(rng, fig_swarm)
    f, g = sysm.drift, sysm.field(7)
    k = bracket_field(sysm.drift, sysm.field(10), 1e-4, 4)
    br = lambda a, b: (lambda y: lie_bracket(a, b, y, 1e-4, 4))
    terms = [lie_bracket(f, br(g, k), x, 1e-3, 4), lie_bracket(g, br(k, f), x, 1e-3, 4),
             lie_bracket(k, br(f, g), x, 1e-3, 4)]
    scale = max(np.linalg.norm(t) for t in terms)
    assert scale > 1e-3
    assert np.linalg.norm(sum(terms)) <= 1e-3 * scale


def test_symmetric_products_of_inputs_vanish(rng, fig_swarm):
    # [g_a, [g_b, f0]] is zero for every pair, also away from rest
    sysm = build_affine_system(fig_swarm)
    x = moving_state(rng, fig_swarm)
    inner = bracket_field(sysm.field(10), sysm.drift, 1e-4, 4)
    ref = np.linalg.norm(lie_bracket(sysm.drift, sysm.field(10), x, 1e-4, 4))
    assert np.linalg.norm(lie_bracket(sysm.field(7), inner, x, 1e-3, 4)) <= 1e-7 * ref


# -- accessibility --------------------------------------------------------

def test_rank_reaches_the_momentum_leaf(rng, fig_swarm):
    for _ in range(5):
        rep = accessibility_rank(rest_state(rng, fig_swarm), fig_swarm)
        assert rep.rank == 27 == rep.leaf_dim
        assert rep.leaf_passed
        assert rep.expected == 30


def test_missing_directions_are_momentum_normals(rng, fig_swarm):
    # every spanning field is tangent to the level sets of A(q) zeta
    x = rest_state(rng, fig_swarm)
    mat, _ = spanning_set(x, fig_swarm)
    normals = np.hstack([np.zeros((3, 15)), momentum_matrix(x[:15], fig_swarm)])
    assert np.abs(normals @ mat).max() <= 1e-8 * np.abs(mat).max()
    sv = np.linalg.svd(mat, compute_uv=False)
    assert sv[26] > 1e-3 * sv[0]
    assert sv[27] < 1e-9 * sv[0]


def test_two_satellite_rank(rng):
    sw = SwarmConfig(np.array([2.0, 3.0]), np.stack([np.diag([1.0, 2, 3]), np.diag([2.0, 1, 4])]))
    rep = accessibility_rank(rest_state(rng, sw), sw)
    assert rep.rank == 15 == 12 * 2 - 9
    assert len(rep.labels) == 6 + 6 + 3 + 3


def test_inputs_alone_do_not_span(rng, fig_swarm):
    x = rest_state(rng, fig_swarm)
    rank, _ = numerical_rank(build_affine_system(fig_swarm).control_fields(x))
    assert rank == 12 < 30


def test_rank_is_scale_free(rng, fig_swarm):
    x = rest_state(rng, fig_swarm)
    assert accessibility_rank(x, fig_swarm.scaled(7.5)).rank == accessibility_rank(x, fig_swarm).rank


def test_rank_random_swarm(rng):
    sw = random_swarm(rng, 3)
    assert accessibility_rank(rest_state(rng, sw), sw).rank == 27


def test_degenerate_state(fig_swarm):
    q = np.zeros(15)
    q[:3] = [0.5, 0, 0]
    q[3:6] = [0.5, 0, 0]
    with pytest.raises(DegenerateState):
        accessibility_rank(np.concatenate([q, np.zeros(15)]), fig_swarm)


# -- Hall basis and classification ---------------------------------------

@pytest.mark.parametrize("gens,degree", [(2, 5), (3, 4), (13, 3)])
def test_hall_counts_match_witt(gens, degree):
    words = hall_basis(gens, degree)
    by_deg = {}
    for w in words:
        d = len(word_to_str(w).replace("[", "").replace("]", "").split(","))
        by_deg[d] = by_deg.get(d, 0) + 1
    for d in range(1, degree + 1):
        assert by_deg[d] == witt_dimension(gens, d)


def test_witt_values():
    assert [witt_dimension(2, d) for d in range(1, 7)] == [2, 1, 2, 3, 6, 9]
    assert [witt_dimension(13, d) for d in (1, 2, 3)] == [13, 78, 728]


def test_hall_words_are_standard():
    words = hall_basis(2, 4)
    text = [word_to_str(w) for w in words]
    assert text[:3] == ["f0", "g1", "[f0,g1]"]
    assert "[f0,[f0,g1]]" in text and "[g1,[f0,g1]]" in text
    assert "[g1,[g1,f0]]" not in text


def test_classification_examples():
    good = classify((0, 1), 12)
    assert (good.delta_0, good.delta[0], good.classification) == (1, 1, "good")
    bad = classify((1, (0, 1)), 12)
    assert (bad.delta_0, bad.delta[0], bad.classification) == (1, 2, "bad")
    assert classify((2, (0, 1)), 12).classification == "good"
    assert classify(0, 12).classification == "bad"


def test_classification_requires_degree_two():
    with pytest.raises(ValueError):
        classify_brackets(1, n_inputs=3)
    with pytest.raises(ValueError):
        classify_brackets(3)


def test_bad_brackets_counted():
    terms = classify_brackets(3, n_inputs=12)
    assert len(terms) == 13 + 78 + 728
    bad = [t.text for t in terms if t.classification == "bad"]
    assert len(bad) == 13
    assert "f0" in bad and "[g5,[f0,g5]]" in bad


def test_bad_brackets_in_good_span(rng, fig_swarm):
    states = [rest_state(rng, fig_swarm) for _ in range(2)]
    terms = classify_brackets(3, fig_swarm, states)
    for t in terms:
        if t.classification == "bad":
            assert len(t.residuals) == 2
            assert t.in_good_span, (t.text, t.residuals)
        else:
            assert t.in_good_span is None


def test_span_residual():
    basis = np.eye(4)[:, :2]
    assert span_residual(basis, np.array([1.0, 2, 0, 0])) == pytest.approx(0, abs=1e-15)
    assert span_residual(basis, np.array([0, 0, 3.0, 4])) == pytest.approx(1.0)
    assert span_residual(basis, np.array([0, 0, 3.0, 4]), scale=50.0) == pytest.approx(0.1)
    assert span_residual(np.zeros((4, 0)), np.zeros(4)) == 0.0
