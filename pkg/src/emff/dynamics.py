"""Equations of motion: full constrained form and the reduced quasi-velocity form.

The production loop integrates the reduced system

    q_dot = Zhat(q) S(q) v
    Mbar v_dot = -Cbar v + S^T u_c

with fixed-step RK4.  Because the top block of S is the identity, v is just
the first 6n - 6 entries of zeta, so a SwarmState carries everything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SwarmConfig
from .constraint import (basis_dir, momentum_matrix, momentum_matrix_dir,
                         nullspace_basis)
from .errors import NonFiniteState, SingularConstraint
from .kinematics import SwarmState, apply_zhat, skew, split_zeta, switch_attitudes


def mass_matrix(config: SwarmConfig):
    """[M] = blockdiag(m_2 E, ..., m_n E, J_1, ..., J_n)."""
    n = config.n
    k = 3 * (n - 1)
    out = np.zeros((6 * n - 3, 6 * n - 3))
    out[:k, :k] = np.diag(np.repeat(config.masses[1:], 3))
    for j in range(n):
        out[k + 3 * j:k + 3 * j + 3, k + 3 * j:k + 3 * j + 3] = config.inertias[j]
    return out


def mass_matrix_inv(config: SwarmConfig):
    n = config.n
    k = 3 * (n - 1)
    out = np.zeros((6 * n - 3, 6 * n - 3))
    out[:k, :k] = np.diag(np.repeat(1.0 / config.masses[1:], 3))
    for j in range(n):
        out[k + 3 * j:k + 3 * j + 3, k + 3 * j:k + 3 * j + 3] = config.inertia_inv[j]
    return out


def coriolis_matrix(config: SwarmConfig, zeta):
    """[C] = blockdiag(0, -skew(J_1 w_1), ..., -skew(J_n w_n))."""
    n = config.n
    k = 3 * (n - 1)
    _, w = split_zeta(zeta, n)
    out = np.zeros((6 * n - 3, 6 * n - 3))
    for j in range(n):
        out[k + 3 * j:k + 3 * j + 3, k + 3 * j:k + 3 * j + 3] = -skew(config.inertias[j] @ w[j])
    return out


@dataclass(frozen=True, eq=False)
class ReducedDynamics:
    """Mbar = S^T M S (SPD) and Cbar = S^T (M S_dot + C S)."""

    M_bar: np.ndarray
    C_bar: np.ndarray


def reduced_dynamics(config: SwarmConfig, q, zeta, S=None, a=None) -> ReducedDynamics:
    """Project the constrained equations onto the null space of A.

    ``zeta`` supplies the rate information needed for S_dot; it carries the
    same data as q_dot.
    """
    if a is None:
        a = momentum_matrix(q, config)
    if S is None:
        S = nullspace_basis(q, config, a)
    s_dot = basis_dir(q, apply_zhat(q, zeta, config.n), config, a)
    m = mass_matrix(config)
    c = coriolis_matrix(config, zeta)
    return ReducedDynamics(S.T @ m @ S, S.T @ (m @ s_dot + c @ S))


def reduced_accel(config: SwarmConfig, q, v, u_c):
    """v_dot from Mbar v_dot = -Cbar v + S^T u_c.

    Raises:
        np.linalg.LinAlgError: Mbar is not positive definite, which only
            happens when the state bookkeeping is broken.
    """
    a = momentum_matrix(q, config)
    S = nullspace_basis(q, config, a)
    zeta = S @ v
    rd = reduced_dynamics(config, q, zeta, S, a)
    chol = np.linalg.cholesky(rd.M_bar)
    rhs = -rd.C_bar @ v + S.T @ u_c
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


def full_accel(config: SwarmConfig, q, zeta, u_c):
    """Solve [M] zeta_dot + [C] zeta = u_c - A^T eta with d/dt(A zeta) = 0.

    Returns:
        (zeta_dot, eta)

    Raises:
        SingularConstraint: A M^-1 A^T is numerically singular.
    """
    a = momentum_matrix(q, config)
    a_dot = momentum_matrix_dir(q, apply_zhat(q, zeta, config.n), config)
    m_inv = mass_matrix_inv(config)
    c = coriolis_matrix(config, zeta)
    free = m_inv @ (u_c - c @ zeta)
    gram = a @ m_inv @ a.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularConstraint(f"A M^-1 A^T is singular (cond={cond:.3e})", cond)
    eta = np.linalg.solve(gram, a @ free + a_dot @ zeta)
    return free - m_inv @ a.T @ eta, eta


def _as_wrench(controller, t, q, v):
    if callable(controller):
        return controller(t, q, v)
    return controller


def integrate_step(config: SwarmConfig, state: SwarmState, controller, dt: float,
                   t: float = 0.0, switch: bool = True):
    """Advance the reduced system by one RK4 step.

    Args:
        controller: either a callable ``(t, q, v) -> u_c`` evaluated at every
            RK4 stage, or a fixed u_c array held over the step.
        switch: apply MRP shadow switching after the step.

    Returns:
        (new SwarmState, number of shadow switches applied)

    Raises:
        NonFiniteState: the step produced NaN or Inf.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = config.n
    m = config.dim_v
    q = state.q
    v = state.zeta[:m]

    def rhs(tt, qq, vv):
        S = nullspace_basis(qq, config)
        qd = apply_zhat(qq, S @ vv, n)
        vd = reduced_accel(config, qq, vv, _as_wrench(controller, tt, qq, vv))
        return qd, vd

    k1q, k1v = rhs(t, q, v)
    k2q, k2v = rhs(t + dt / 2, q + dt / 2 * k1q, v + dt / 2 * k1v)
    k3q, k3v = rhs(t + dt / 2, q + dt / 2 * k2q, v + dt / 2 * k2v)
    k4q, k4v = rhs(t + dt, q + dt * k3q, v + dt * k3v)
    q_new = q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    v_new = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(v_new))):
        raise NonFiniteState(f"non-finite state after step at t={t + dt:.6g}")
    count = 0
    if switch:
        q_new, count = switch_attitudes(q_new, n)
    zeta_new = nullspace_basis(q_new, config) @ v_new
    return SwarmState(q_new, zeta_new), count


def integrate_full_step(config: SwarmConfig, q, zeta, u_fn, dt: float, t: float = 0.0):
    """One RK4 step of the full constrained equations (oracle path, no switching)."""
    n = config.n

    def rhs(tt, qq, zz):
        zd, _ = full_accel(config, qq, zz, u_fn(tt, qq, zz))
        return apply_zhat(qq, zz, n), zd

    k1q, k1z = rhs(t, q, zeta)
    k2q, k2z = rhs(t + dt / 2, q + dt / 2 * k1q, zeta + dt / 2 * k1z)
    k3q, k3z = rhs(t + dt / 2, q + dt / 2 * k2q, zeta + dt / 2 * k2z)
    k4q, k4z = rhs(t + dt, q + dt * k3q, zeta + dt * k3z)
    return (q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q),
            zeta + dt / 6 * (k1z + 2 * k2z + 2 * k3z + k4z))
