"""MRP attitude kinematics and the stacked rate map q_dot = Zhat zeta.

Coordinate layout for n satellites::

    q    = [r_2, ..., r_n, sigma_1, ..., sigma_n]        (6n - 3,)
    zeta = [rdot_2, ..., rdot_n, w_1, ..., w_n]          (6n - 3,)

Positions are inertial with the centre of mass pinned at the origin, the
angular rates are body-frame.  Everything here is written so complex inputs
go through unchanged (no conjugation), which the controller relies on for
complex-step derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

E3 = np.eye(3)


def skew(a):
    """Cross-product matrix: skew(a) @ b == a x b."""
    return np.array([[0.0 * a[0], -a[2], a[1]],
                     [a[2], 0.0 * a[0], -a[0]],
                     [-a[1], a[0], 0.0 * a[0]]])


def mrp_rate_matrix(sigma):
    """Z(sigma) with sigma_dot = Z(sigma) omega (omega in body frame)."""
    s2 = sigma @ sigma
    return 0.25 * ((1.0 - s2) * E3 + 2.0 * skew(sigma) + 2.0 * np.outer(sigma, sigma))


def mrp_rate_matrix_inv(sigma):
    """Inverse of Z(sigma), using Z Z^T = ((1 + s^2) / 4)^2 E."""
    s2 = sigma @ sigma
    return mrp_rate_matrix(sigma).T * (4.0 / (1.0 + s2)) ** 2


def mrp_rate_matrix_dir(sigma, d):
    """Directional derivative of Z(sigma) along d."""
    return 0.25 * (-2.0 * (sigma @ d) * E3 + 2.0 * skew(d)
                   + 2.0 * (np.outer(d, sigma) + np.outer(sigma, d)))


def mrp_to_dcm(sigma):
    """Rotation C^{I/B} taking body-frame components to inertial ones."""
    s2 = sigma @ sigma
    sk = skew(sigma)
    return E3 + (8.0 * sk @ sk + 4.0 * (1.0 - s2) * sk) / (1.0 + s2) ** 2


def shadow_switch(sigma):
    """Map sigma to the shadow set when |sigma| > 1."""
    sigma = np.asarray(sigma, dtype=float)
    s2 = sigma @ sigma
    if s2 > 1.0:
        return -sigma / s2
    return sigma.copy()


def split_q(q, n):
    """Return (positions of satellites 2..n, MRPs of 1..n) as (n-1,3), (n,3)."""
    k = 3 * (n - 1)
    return q[:k].reshape(n - 1, 3), q[k:].reshape(n, 3)


def split_zeta(zeta, n):
    """Return (velocities of 2..n, body rates of 1..n)."""
    return split_q(zeta, n)


def zhat(q, n):
    """The (6n-3)x(6n-3) block matrix diag(E_{3n-3}, Z(sigma_1), ..., Z(sigma_n))."""
    _, sig = split_q(q, n)
    k = 3 * (n - 1)
    out = np.zeros((6 * n - 3, 6 * n - 3), dtype=np.result_type(q, float))
    out[:k, :k] = np.eye(k)
    for j in range(n):
        a = k + 3 * j
        out[a:a + 3, a:a + 3] = mrp_rate_matrix(sig[j])
    return out


def zhat_dir(q, d, n):
    """Directional derivative of zhat(q) along d."""
    _, sig = split_q(q, n)
    _, dsig = split_q(d, n)
    k = 3 * (n - 1)
    out = np.zeros((6 * n - 3, 6 * n - 3), dtype=np.result_type(q, d, float))
    for j in range(n):
        a = k + 3 * j
        out[a:a + 3, a:a + 3] = mrp_rate_matrix_dir(sig[j], dsig[j])
    return out


def apply_zhat(q, zeta, n):
    """Zhat(q) @ zeta without forming the full matrix."""
    _, sig = split_q(q, n)
    _, w = split_zeta(zeta, n)
    k = 3 * (n - 1)
    out = np.array(zeta, dtype=np.result_type(q, zeta, float))
    for j in range(n):
        out[k + 3 * j:k + 3 * j + 3] = mrp_rate_matrix(sig[j]) @ w[j]
    return out


def switch_attitudes(q, n):
    """Apply shadow switching to every MRP in q; returns (q, switch count)."""
    q = np.array(q, dtype=float)
    k = 3 * (n - 1)
    count = 0
    for j in range(n):
        s = q[k + 3 * j:k + 3 * j + 3]
        if s @ s > 1.0:
            q[k + 3 * j:k + 3 * j + 3] = shadow_switch(s)
            count += 1
    return q, count


@dataclass(frozen=True, eq=False)
class SwarmState:
    """Generalized coordinates and velocities of the swarm."""

    q: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        if q.shape != zeta.shape or q.ndim != 1 or (q.size + 3) % 6:
            raise ValueError("q and zeta must both have length 6n - 3")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(zeta))):
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "zeta", zeta)

    @property
    def n(self) -> int:
        return (self.q.size + 3) // 6


def q_dot(state: SwarmState) -> np.ndarray:
    """Rate of the generalized coordinates, q_dot = Zhat(q) zeta."""
    return apply_zhat(state.q, state.zeta, state.n)
