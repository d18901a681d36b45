"""Angular momentum constraint A zeta = 0 and its null-space basis.

S is built in closed form, S = [E; -J_n^-1 C^{B_n/I} A_s], so it is smooth
in q.  Derivatives of S are analytic (``basis_dir``) and every function
accepts complex q so the controller can complex-step through them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SwarmConfig
from .kinematics import (apply_zhat, mrp_rate_matrix_inv, mrp_to_dcm, skew,
                         split_q)


def full_positions(q, config: SwarmConfig):
    """Inertial positions of all n satellites, r_1 from the centre of mass."""
    r, _ = split_q(q, config.n)
    m = config.masses
    r1 = -(m[1:, None] * r).sum(axis=0) / m[0]
    return np.vstack([r1, r])


def _rel(q, config):
    r, _ = split_q(q, config.n)
    return r - full_positions(q, config)[0]


def attitude_dcms(q, n):
    _, sig = split_q(q, n)
    return [mrp_to_dcm(s) for s in sig]


def momentum_matrix(q, config: SwarmConfig):
    """A(q), shape 3 x (6n-3); A @ zeta is the total angular momentum."""
    n = config.n
    k = 3 * (n - 1)
    rel = _rel(q, config)
    out = np.zeros((3, 6 * n - 3), dtype=np.result_type(q, float))
    for j in range(n - 1):
        out[:, 3 * j:3 * j + 3] = config.masses[j + 1] * skew(rel[j])
    for j, c in enumerate(attitude_dcms(q, n)):
        out[:, k + 3 * j:k + 3 * j + 3] = c @ config.inertias[j]
    return out


def momentum_matrix_dir(q, d, config: SwarmConfig):
    """Directional derivative of A(q) along the coordinate direction d."""
    n = config.n
    k = 3 * (n - 1)
    _, sig = split_q(q, n)
    _, dsig = split_q(d, n)
    drel = _rel(d, config)
    out = np.zeros((3, 6 * n - 3), dtype=np.result_type(q, d, float))
    for j in range(n - 1):
        out[:, 3 * j:3 * j + 3] = config.masses[j + 1] * skew(drel[j])
    for j in range(n):
        w = mrp_rate_matrix_inv(sig[j]) @ dsig[j]
        out[:, k + 3 * j:k + 3 * j + 3] = mrp_to_dcm(sig[j]) @ skew(w) @ config.inertias[j]
    return out


def nullspace_basis(q, config: SwarmConfig, a=None):
    """S(q), shape (6n-3) x (6n-6), with A S = 0 and identity top block."""
    n = config.n
    m = 6 * n - 6
    if a is None:
        a = momentum_matrix(q, config)
    _, sig = split_q(q, n)
    cn = mrp_to_dcm(sig[-1])
    out = np.zeros((6 * n - 3, m), dtype=a.dtype)
    out[:m] = np.eye(m)
    out[m:] = -config.inertia_inv[-1] @ cn.T @ a[:, :m]
    return out


def basis_dir(q, d, config: SwarmConfig, a=None):
    """Directional derivative of S(q) along d (analytic product rule)."""
    n = config.n
    m = 6 * n - 6
    if a is None:
        a = momentum_matrix(q, config)
    da = momentum_matrix_dir(q, d, config)
    _, sig = split_q(q, n)
    _, dsig = split_q(d, n)
    cnt = mrp_to_dcm(sig[-1]).T
    w = mrp_rate_matrix_inv(sig[-1]) @ dsig[-1]
    dcnt = -skew(w) @ cnt
    out = np.zeros((6 * n - 3, m), dtype=np.result_type(a, da))
    out[m:] = -config.inertia_inv[-1] @ (dcnt @ a[:, :m] + cnt @ da[:, :m])
    return out


def nullspace_basis_rate(q, zeta, config: SwarmConfig):
    """S_dot along the motion: S'(q)[Zhat(q) zeta]."""
    return basis_dir(q, apply_zhat(q, zeta, config.n), config)


def momentum_map(q, config: SwarmConfig):
    """R(q): R @ u_c is the inertial rate of change of angular momentum."""
    n = config.n
    k = 3 * (n - 1)
    rel = _rel(q, config)
    out = np.zeros((3, 6 * n - 3), dtype=np.result_type(q, float))
    for j in range(n - 1):
        out[:, 3 * j:3 * j + 3] = skew(rel[j])
    for j, c in enumerate(attitude_dcms(q, n)):
        out[:, k + 3 * j:k + 3 * j + 3] = c
    return out


@dataclass(frozen=True, eq=False)
class ConstraintGeometry:
    """A, S, S_dot and R evaluated at one state."""

    A: np.ndarray
    S: np.ndarray
    S_dot: np.ndarray
    R: np.ndarray

    @classmethod
    def at(cls, q, zeta, config: SwarmConfig) -> "ConstraintGeometry":
        a = momentum_matrix(q, config)
        return cls(a, nullspace_basis(q, config, a),
                   basis_dir(q, apply_zhat(q, zeta, config.n), config, a),
                   momentum_map(q, config))


def angular_momentum(q, zeta, config: SwarmConfig):
    """Total angular momentum about the centre of mass, summed satellite by satellite.

    Independent of A: r_1 and its velocity are rebuilt from the centre-of-mass
    condition and the sum runs over all n bodies.
    """
    n = config.n
    m = config.masses
    pos = full_positions(q, config)
    v, w = split_q(zeta, n)
    v1 = -(m[1:, None] * v).sum(axis=0) / m[0]
    vel = np.vstack([v1, v])
    _, sig = split_q(q, n)
    total = np.zeros(3)
    for j in range(n):
        total += m[j] * np.cross(pos[j], vel[j])
        total += mrp_to_dcm(sig[j]) @ config.inertias[j] @ w[j]
    return total
