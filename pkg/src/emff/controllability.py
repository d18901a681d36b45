"""Lie-bracket controllability checks for the control-affine swarm model.

The state is x = [q; zeta] of size 12n - 6 with

    x_dot = f0(x) + sum_i g_i(x) u_i,
    f0 = [Zhat zeta; -M^-1 C zeta],   g_i = [0; S_i(q)].

Brackets are taken with central finite differences so this module does not
depend on the analytic derivatives it is used to audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import SwarmConfig
from .constraint import full_positions, nullspace_basis
from .dynamics import coriolis_matrix, mass_matrix_inv
from .errors import DegenerateState
from .kinematics import apply_zhat, zhat

DRIFT = 0

# Nested brackets divide the inner difference error by the outer step, so
# they need a higher-order stencil and a larger step than the default.
NESTED_STEP = 1e-3
NESTED_ORDER = 4


@dataclass(frozen=True, eq=False)
class AffineSystem:
    """Drift and control vector fields on x = [q; zeta]."""

    config: SwarmConfig

    @property
    def dim(self) -> int:
        return 12 * self.config.n - 6

    @property
    def n_inputs(self) -> int:
        return self.config.dim_v

    def split(self, x):
        k = self.config.dim_q
        return x[:k], x[k:]

    def drift(self, x):
        q, zeta = self.split(x)
        cfg = self.config
        return np.concatenate([apply_zhat(q, zeta, cfg.n),
                               -mass_matrix_inv(cfg) @ (coriolis_matrix(cfg, zeta) @ zeta)])

    def control_fields(self, x):
        """All g_i as columns, shape (12n - 6, 6n - 6)."""
        q, _ = self.split(x)
        S = nullspace_basis(q, self.config)
        return np.vstack([np.zeros_like(S), S])

    def control(self, i, x):
        """g_i(x) for 1-based input index i."""
        return self.control_fields(x)[:, i - 1]

    def field(self, index) -> Callable:
        """Generator by index: 0 is the drift, i >= 1 is g_i."""
        if index == DRIFT:
            return self.drift
        return lambda x: self.control(index, x)

    def kinematic_field(self, i) -> Callable:
        """q-space field X_i = Zhat S_i (0-based i)."""
        n = self.config.n
        return lambda q: zhat(q, n) @ nullspace_basis(q, self.config)[:, i]


def build_affine_system(config: SwarmConfig) -> AffineSystem:
    return AffineSystem(config)


_STENCILS = {
    2: ((1.0, 0.5), (-1.0, -0.5)),
    4: ((2.0, -1.0 / 12), (1.0, 8.0 / 12), (-1.0, -8.0 / 12), (-2.0, 1.0 / 12)),
}


def directional_derivative(g, x, d, h=1e-6, order=2):
    """Central-difference Dg(x)[d]; the probe moves x by h * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    dn = np.linalg.norm(d)
    if dn == 0:
        return np.zeros_like(np.asarray(g(x), dtype=float))
    if order not in _STENCILS:
        raise ValueError("order must be 2 or 4")
    s = h * max(1.0, np.linalg.norm(x)) / dn
    return sum(c * np.asarray(g(x + k * s * d)) for k, c in _STENCILS[order]) / s


def lie_bracket(f, g, x, h=1e-6, order=2):
    """[f, g](x) = Dg f - Df g with central finite-difference Jacobians."""
    return (directional_derivative(g, x, f(x), h, order)
            - directional_derivative(f, x, g(x), h, order))


def bracket_field(f, g, h=1e-6, order=2) -> Callable:
    """The bracket [f, g] as a field, for nesting."""
    return lambda x: lie_bracket(f, g, x, h, order)


def min_separation(q, config: SwarmConfig):
    pos = full_positions(q, config)
    d = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(d, axis=-1)
    return float(dist[np.triu_indices(config.n, 1)].min())


def _check_geometry(x, config):
    q = x[:config.dim_q]
    sep = min_separation(q, config)
    if sep <= config.r_min:
        raise DegenerateState(f"satellites {sep:.3g} m apart, below r_min={config.r_min} m")
    S = nullspace_basis(q, config)
    if not np.all(np.isfinite(S)) or np.linalg.matrix_rank(S) < config.dim_v:
        raise DegenerateState("null-space basis is rank deficient")


def numerical_rank(mat, rel_tol=1e-8):
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0, sv
    return int(np.sum(sv > sv[0] * rel_tol)), sv


@dataclass(frozen=True, eq=False)
class AccessibilityReport:
    """Rank of the listed spanning set at one state.

    ``leaf_dim`` is 12n - 9: every field is tangent to the level sets of
    the angular momentum A(q) zeta, so no bracket can leave them.
    """

    rank: int
    expected: int
    leaf_dim: int
    singular_values: np.ndarray
    labels: tuple

    @property
    def passed(self) -> bool:
        return self.rank == self.expected

    @property
    def leaf_passed(self) -> bool:
        return self.rank == self.leaf_dim


def spanning_set(x, config: SwarmConfig, h=NESTED_STEP, order=NESTED_ORDER):
    """Columns g_i, [f0, g_i], [g_a, [f0, g_b]] (cyclic over 1..3) and the
    kinematic brackets [X_a, X_b] lifted to [[X_a, X_b]; 0].

    The literal [g_a, g_b] vanishes identically (g depends on q only and
    only moves zeta); the lifted kinematic bracket is what the spanning list
    means, and at zero velocity it equals [[f0, g_a], [f0, g_b]].
    """
    sysm = build_affine_system(config)
    x = np.asarray(x, dtype=float)
    f0 = sysm.drift
    cols, labels = [], []
    G = sysm.control_fields(x)
    for i in range(sysm.n_inputs):
        cols.append(G[:, i])
        labels.append(f"g{i + 1}")
    for i in range(1, sysm.n_inputs + 1):
        cols.append(lie_bracket(f0, sysm.field(i), x, h, order))
        labels.append(f"[f0,g{i}]")
    cyc = ((1, 2), (2, 3), (3, 1))
    for a, b in cyc:
        inner = bracket_field(f0, sysm.field(b), h, order)
        cols.append(lie_bracket(sysm.field(a), inner, x, h, order))
        labels.append(f"[g{a},[f0,g{b}]]")
    q = x[:config.dim_q]
    for a, b in cyc:
        kb = lie_bracket(sysm.kinematic_field(a - 1), sysm.kinematic_field(b - 1), q, h, order)
        cols.append(np.concatenate([kb, np.zeros(config.dim_q)]))
        labels.append(f"[g{a},g{b}]")
    return np.column_stack(cols), tuple(labels)


def accessibility_rank(x, config: SwarmConfig, rel_tol=1e-8, h=NESTED_STEP,
                       order=NESTED_ORDER) -> AccessibilityReport:
    """Numerical rank of the spanning set at x (tolerance sigma_max * rel_tol).

    Raises:
        DegenerateState: satellites within r_min of each other or a
            rank-deficient null-space basis.
    """
    x = np.asarray(x, dtype=float)
    _check_geometry(x, config)
    mat, labels = spanning_set(x, config, h, order)
    rank, sv = numerical_rank(mat, rel_tol)
    n = config.n
    return AccessibilityReport(rank, 12 * n - 6, 12 * n - 9, sv, labels)


# -- Philip Hall basis and the good/bad classification ------------------

def _degree(word):
    return 1 if isinstance(word, int) else _degree(word[0]) + _degree(word[1])


def word_to_str(word):
    if isinstance(word, int):
        return "f0" if word == DRIFT else f"g{word}"
    return f"[{word_to_str(word[0])},{word_to_str(word[1])}]"


def _letters(word, counts):
    if isinstance(word, int):
        counts[word] = counts.get(word, 0) + 1
    else:
        _letters(word[0], counts)
        _letters(word[1], counts)
    return counts


def hall_basis(n_generators: int, max_degree: int):
    """Philip Hall basis words over generators 0..n_generators-1.

    Ordered by degree, then by creation order.  [h1, h2] is admitted when
    h1 < h2 and, if h2 = [h3, h4], h3 <= h1.
    """
    words = list(range(n_generators))
    index = {w: i for i, w in enumerate(words)}
    by_degree = {1: list(words)}
    for d in range(2, max_degree + 1):
        new = []
        for d1 in range(1, d):
            for h1 in by_degree[d1]:
                for h2 in by_degree[d - d1]:
                    if index[h1] >= index[h2]:
                        continue
                    if not isinstance(h2, int) and index[h2[0]] > index[h1]:
                        continue
                    new.append((h1, h2))
        # creation order within the degree follows the index of (h1, h2)
        new.sort(key=lambda w: (index[w[0]], index[w[1]]))
        for w in new:
            index[w] = len(words)
            words.append(w)
        by_degree[d] = new
    return words


def witt_dimension(n_generators: int, degree: int):
    """Dimension of the degree-d part of the free Lie algebra (Witt formula)."""
    total = 0
    for k in range(1, degree + 1):
        if degree % k == 0:
            total += _mobius(k) * n_generators ** (degree // k)
    return total // degree


def _mobius(k):
    out = 1
    p = 2
    while p * p <= k:
        if k % p == 0:
            k //= p
            if k % p == 0:
                return 0
            out = -out
        p += 1
    return -out if k > 1 else out


@dataclass(frozen=True, eq=False)
class BracketTerm:
    """One Hall word with its letter counts and good/bad tag.

    ``residuals`` holds, for bad words evaluated at sample states, the
    least-squares residual of projecting the bracket onto the span of
    lower-degree good brackets (see ``span_residual`` for the scaling).
    """

    word: object
    delta_0: int
    delta: tuple
    classification: str
    residuals: tuple = field(default=())

    @property
    def degree(self) -> int:
        return _degree(self.word)

    @property
    def text(self) -> str:
        return word_to_str(self.word)

    @property
    def in_good_span(self):
        if not self.residuals:
            return None
        return max(self.residuals) <= 1e-8


def classify(word, n_inputs):
    counts = _letters(word, {})
    d0 = counts.get(DRIFT, 0)
    delta = tuple(counts.get(i, 0) for i in range(1, n_inputs + 1))
    bad = d0 % 2 == 1 and all(c % 2 == 0 for c in delta)
    return BracketTerm(word, d0, delta, "bad" if bad else "good")


def word_field(word, sysm: AffineSystem, h=NESTED_STEP, order=NESTED_ORDER) -> Callable:
    if isinstance(word, int):
        return sysm.field(word)
    return bracket_field(word_field(word[0], sysm, h, order),
                         word_field(word[1], sysm, h, order), h, order)


def span_residual(basis_cols, b, scale=0.0):
    """Least-squares residual of projecting b onto the columns.

    The residual is divided by max(|b|, scale).  Several bad brackets vanish
    at zero velocity, and for those |b| is pure difference noise, so callers
    pass the basis norm as ``scale``.
    """
    ref = max(np.linalg.norm(b), scale)
    if ref == 0:
        return 0.0
    if basis_cols.shape[1] == 0:
        return float(np.linalg.norm(b) / ref)
    coef, *_ = np.linalg.lstsq(basis_cols, b, rcond=None)
    return float(np.linalg.norm(basis_cols @ coef - b) / ref)


def classify_brackets(max_degree=3, config: SwarmConfig | None = None, states=(),
                      n_inputs=None, h=NESTED_STEP, order=NESTED_ORDER):
    """Tag every Hall word up to ``max_degree`` as good or bad.

    With a config and sample states, each bad word is evaluated at every
    state and projected onto the span of all good words of lower degree.

    Args:
        max_degree: highest word length, at least 2.
        config: the swarm; needed for evaluation and to fix the input count.
        states: iterable of x = [q; zeta] sample points.
        n_inputs: input count when no config is given.
    """
    if max_degree < 2:
        raise ValueError("max_degree must be at least 2")
    if config is not None:
        n_inputs = config.dim_v
    if n_inputs is None:
        raise ValueError("need a config or n_inputs")
    words = hall_basis(n_inputs + 1, max_degree)
    terms = [classify(w, n_inputs) for w in words]
    if config is None or not len(states):
        return terms
    sysm = build_affine_system(config)
    fields = {id(t): word_field(t.word, sysm, h, order) for t in terms}
    residuals = {id(t): [] for t in terms if t.classification == "bad"}
    for x in states:
        x = np.asarray(x, dtype=float)
        cache = {}

        def value(t):
            key = id(t)
            if key not in cache:
                cache[key] = np.asarray(fields[key](x), dtype=float)
            return cache[key]

        for t in terms:
            if t.classification != "bad":
                continue
            lower = [value(g) for g in terms
                     if g.classification == "good" and g.degree < t.degree]
            basis = np.column_stack(lower) if lower else np.zeros((sysm.dim, 0))
            scale = np.linalg.norm(basis, 2) if lower else 0.0
            residuals[id(t)].append(span_residual(basis, value(t), scale))
    return [BracketTerm(t.word, t.delta_0, t.delta, t.classification,
                        tuple(residuals.get(id(t), ()))) for t in terms]
