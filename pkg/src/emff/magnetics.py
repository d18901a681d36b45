"""Far-field dipole interaction, AC modulation and dipole allocation.

All vectors here are inertial unless a name says otherwise.  ``r_ij`` points
from dipole i to dipole j, and the force/torque functions return the action
on dipole j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MU0, SwarmConfig
from .errors import NotConverged, SaturationExceeded, SeparationTooSmall
from .kinematics import mrp_to_dcm, skew


@dataclass(frozen=True, eq=False)
class DipolePair:
    """Sine and cosine AC amplitudes of one satellite's dipole [A m^2]."""

    mu_sin: np.ndarray
    mu_cos: np.ndarray

    def __post_init__(self):
        for name in ("mu_sin", "mu_cos"):
            val = np.asarray(getattr(self, name), dtype=float)
            if val.shape != (3,) or not np.all(np.isfinite(val)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, val)

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force [N] and torque [N m] acting on one satellite."""

    force: np.ndarray
    torque: np.ndarray


def _check_separation(r, r_min):
    d = np.linalg.norm(r)
    if d <= r_min:
        raise SeparationTooSmall(f"separation {d:.4g} m is within r_min={r_min} m")
    return d


def dipole_force(mu_i, mu_j, r_ij, mu0=MU0, r_min=0.1):
    """Force on dipole j from dipole i."""
    d = _check_separation(r_ij, r_min)
    a = mu_i @ r_ij
    b = mu_j @ r_ij
    return 3 * mu0 / (4 * np.pi) * (
        (mu_i @ mu_j) / d ** 5 * r_ij + a / d ** 5 * mu_j + b / d ** 5 * mu_i
        - 5 * a * b / d ** 7 * r_ij)


def dipole_torque(mu_i, mu_j, r_ij, mu0=MU0, r_min=0.1):
    """Torque on dipole j from the field of dipole i."""
    d = _check_separation(r_ij, r_min)
    field = 3 * r_ij * (mu_i @ r_ij) / d ** 5 - mu_i / d ** 3
    return mu0 / (4 * np.pi) * np.cross(mu_j, field)


def instantaneous_dipole(pair: DipolePair, t, omega_f):
    return pair.mu_sin * np.sin(omega_f * t) + pair.mu_cos * np.cos(omega_f * t)


def dc_wrench(dipoles, positions, mu0=MU0, r_min=0.1):
    """Forces and torques, shape (n, 3) each, for constant dipoles."""
    dipoles = np.asarray(dipoles, dtype=float)
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    forces = np.zeros((n, 3))
    torques = np.zeros((n, 3))
    for j in range(n):
        for i in range(n):
            if i == j:
                continue
            r = positions[j] - positions[i]
            forces[j] += dipole_force(dipoles[i], dipoles[j], r, mu0, r_min)
            torques[j] += dipole_torque(dipoles[i], dipoles[j], r, mu0, r_min)
    return forces, torques


def averaged_wrench(pairs, positions, mu0=MU0, r_min=0.1):
    """Period-averaged wrench on every satellite under sin/cos modulation.

    The sin-sin and cos-cos products each average to one half; sin-cos
    cross terms average to zero.
    """
    fs, ts = dc_wrench([p.mu_sin for p in pairs], positions, mu0, r_min)
    fc, tc = dc_wrench([p.mu_cos for p in pairs], positions, mu0, r_min)
    return [Wrench(0.5 * (fs[j] + fc[j]), 0.5 * (ts[j] + tc[j])) for j in range(len(pairs))]


def stack_wrenches(wrenches, sigmas):
    """u_c = [f_2, ..., f_n (inertial), tau_1, ..., tau_n (body)]."""
    forces = [w.force for w in wrenches[1:]]
    torques = [mrp_to_dcm(s).T @ w.torque for w, s in zip(wrenches, sigmas)]
    return np.concatenate(forces + torques)


def _force_jacobians(mu_i, mu_j, r):
    """d f / d mu_i and d f / d mu_j for the force on j."""
    d = np.linalg.norm(r)
    c = 3 * MU0 / (4 * np.pi) / d ** 5
    rr = np.outer(r, r) / d ** 2

    def jac(other):
        b = other @ r
        return c * (np.outer(r, other) + np.outer(other, r) + b * np.eye(3) - 5 * b * rr)

    return jac(mu_j), jac(mu_i)


def _torque_jacobians(mu_i, mu_j, r):
    d = np.linalg.norm(r)
    g = MU0 / (4 * np.pi) * (3 * np.outer(r, r) / d ** 5 - np.eye(3) / d ** 3)
    return skew(mu_j) @ g, -skew(g @ mu_i)


class _ForwardModel:
    """Stacked averaged wrench as a function of x = [sin_1, cos_1, ..., sin_n, cos_n]."""

    def __init__(self, positions, sigmas, mu0, r_min):
        self.positions = np.asarray(positions, dtype=float)
        self.n = len(self.positions)
        self.cts = [mrp_to_dcm(s).T for s in sigmas]
        self.scale = mu0 / MU0
        for i in range(self.n):
            for j in range(i + 1, self.n):
                _check_separation(self.positions[j] - self.positions[i], r_min)

    def _blocks(self, x):
        return x.reshape(self.n, 2, 3)

    def value_and_jac(self, x):
        n = self.n
        mu = self._blocks(x)
        forces = np.zeros((n, 3))
        torques = np.zeros((n, 3))
        jf = np.zeros((n, 3, 6 * n))
        jt = np.zeros((n, 3, 6 * n))
        for j in range(n):
            for i in range(n):
                if i == j:
                    continue
                r = self.positions[j] - self.positions[i]
                for ch in range(2):
                    mi, mj = mu[i, ch], mu[j, ch]
                    forces[j] += 0.5 * dipole_force(mi, mj, r, r_min=0.0)
                    torques[j] += 0.5 * dipole_torque(mi, mj, r, r_min=0.0)
                    dfi, dfj = _force_jacobians(mi, mj, r)
                    dti, dtj = _torque_jacobians(mi, mj, r)
                    ci = 6 * i + 3 * ch
                    cj = 6 * j + 3 * ch
                    jf[j, :, ci:ci + 3] += 0.5 * dfi
                    jf[j, :, cj:cj + 3] += 0.5 * dfj
                    jt[j, :, ci:ci + 3] += 0.5 * dti
                    jt[j, :, cj:cj + 3] += 0.5 * dtj
        val = np.concatenate([forces[1:].ravel()]
                             + [self.cts[j] @ torques[j] for j in range(n)])
        jac = np.vstack([jf[1:].reshape(3 * (n - 1), 6 * n)]
                        + [self.cts[j] @ jt[j] for j in range(n)])
        return self.scale * val, self.scale * jac


@dataclass(frozen=True, eq=False)
class AllocationResult:
    pairs: list
    residual: float
    iterations: int


def pairs_to_vector(pairs):
    return np.concatenate([np.concatenate([p.mu_sin, p.mu_cos]) for p in pairs])


def vector_to_pairs(x):
    blocks = np.asarray(x).reshape(-1, 2, 3)
    return [DipolePair(b[0], b[1]) for b in blocks]


def allocate_dipoles(target, positions, sigmas, guess, config: SwarmConfig | None = None,
                     tol=1e-6, max_iter=100, atol=1e-14):
    """Find sin/cos dipole amplitudes whose averaged wrench equals ``target``.

    Damped Gauss-Newton (Levenberg-Marquardt) on the bilinear forward model
    with its analytic Jacobian.  The system is underdetermined (6n unknowns,
    6n - 6 independent equations), so steps use the minimum-norm form
    J^T (J J^T + lam I)^-1 r.

    Args:
        target: stacked u_c, length 6n - 3 (forces inertial, torques body).
        positions: (n, 3) inertial positions of all satellites.
        sigmas: (n, 3) MRPs, used to express torques in body frames.
        guess: list of DipolePair to start from (warm start).
        config: supplies mu0, r_min and coil limits; defaults apply if None.
        tol: relative residual ||F(x) - target|| / ||target||.

    Returns:
        AllocationResult with the pairs, relative residual and iteration count.

    Raises:
        NotConverged: residual above tol after max_iter; carries the best iterate.
        SaturationExceeded: a dipole component beyond the coil limit.
    """
    mu0 = config.mu0 if config else MU0
    r_min = config.r_min if config else 0.1
    target = np.asarray(target, dtype=float)
    model = _ForwardModel(positions, sigmas, mu0, r_min)
    if target.shape != (6 * model.n - 3,):
        raise ValueError(f"target must have length {6 * model.n - 3}")
    tnorm = np.linalg.norm(target)
    thresh = max(tol * tnorm, atol)
    x = pairs_to_vector(guess)
    f, jac = model.value_and_jac(x)
    res = f - target
    cost = res @ res
    lam = 1e-3
    it = 0
    while np.sqrt(cost) > thresh and it < max_iter:
        it += 1
        jjt = jac @ jac.T
        damp = lam * np.trace(jjt) / len(jjt) + 1e-300
        step = -jac.T @ np.linalg.solve(jjt + damp * np.eye(len(jjt)), res)
        x_new = x + step
        f_new, jac_new = model.value_and_jac(x_new)
        res_new = f_new - target
        cost_new = res_new @ res_new
        if cost_new < cost:
            x, jac, res, cost = x_new, jac_new, res_new, cost_new
            lam = max(lam / 5, 1e-12)
        else:
            lam *= 4
            if lam > 1e12:
                break
    rel = np.sqrt(cost) / tnorm if tnorm > 0 else np.sqrt(cost)
    pairs = vector_to_pairs(x)
    if np.sqrt(cost) > thresh:
        raise NotConverged(f"allocation residual {rel:.3e} above tol {tol:g} "
                           f"after {it} iterations", pairs, rel)
    if config is not None:
        limits = np.repeat(config.max_dipoles, 6)
        if np.any(np.abs(x) > limits):
            raise SaturationExceeded("allocated dipole beyond coil limit", pairs, rel)
    return AllocationResult(pairs, float(rel), it)
