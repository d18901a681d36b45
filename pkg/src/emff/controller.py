"""Time-varying feedback that steers the swarm using Lie-bracket motions.

The kinematic layer is the driftless system q_dot = sum_j X_j(q) v_j with
X = Zhat S.  It has 6n - 6 inputs for 6n - 3 coordinates; the missing three
directions come from the brackets of the first three input fields (the
translation of satellite 2).  The law

    u_tilde = -[X, [X_a0, X_b0], [X_a1, X_b1], [X_a2, X_b2]]^-1 (q - q_target)

asks for a direct velocity on every X_j plus a bracket velocity on each of the
three bracket columns.  A bracket velocity is produced by driving X_a with
rho * eps^-1/2 cos(w t / eps) and X_b with (u_tilde / rho) * 2 w eps^-1/2
sin(w t / eps), whose period average is rho * (u_tilde / rho) * [X_a, X_b].
The h2 terms cancel the drift that appears because rho and u_tilde / rho
change along the oscillation.  The dynamic layer then tracks the resulting
velocity reference w with u = -K (v - w), u_c = [M] S u.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm

import numpy as np

from .config import SwarmConfig
from .constraint import basis_dir, momentum_matrix, nullspace_basis
from .dynamics import mass_matrix
from .errors import SingularBracketMatrix
from .kinematics import split_q, zhat, zhat_dir

log = logging.getLogger(__name__)

DEFAULT_PAIRING = ((1, 2), (2, 0), (0, 1))

_CSTEP = 1e-30


@dataclass(frozen=True, eq=False)
class ControllerConfig:
    """Gains and targets of the time-varying law.

    Attributes:
        K: scalar tracking gain (K * identity on the quasi-velocity).
        epsilon: dither time scale; amplitudes are eps^-1/2, frequencies w/eps.
        omega: the three dither base frequencies [rad/s], pairwise distinct.
        target_q: target coordinates, length 6n - 3 (None means the origin).
        pairing: for each dither channel k, the quasi-velocity indices
            (a_k, b_k) driven by the cosine and sine signals.  The bracket
            column for channel k is [X_a_k, X_b_k].
        rho_power: rho is (sum r^4 + sum sigma^2) ** rho_power.  The
            default 1/4 makes rho homogeneous of degree one under the
            dilation that weights positions 1 and MRPs 2.
        correction: "derived" (default), "printed" or "none"; see h2_terms.
        rho_min: below this rho the dither channels are switched off.
    """

    K: float = 30.0
    epsilon: float = 0.1
    omega: tuple = (0.2, 0.4, 0.6)
    target_q: np.ndarray | None = None
    pairing: tuple = DEFAULT_PAIRING
    rho_power: float = 0.25
    correction: str = "derived"
    rho_min: float = 1e-9

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        om = tuple(float(w) for w in self.omega)
        if len(om) != 3 or len(set(om)) != 3 or 0.0 in om:
            raise ValueError("omega must hold three distinct nonzero frequencies")
        object.__setattr__(self, "omega", om)
        pairing = tuple(tuple(int(i) for i in p) for p in self.pairing)
        if len(pairing) != 3 or any(len(p) != 2 or p[0] == p[1] for p in pairing):
            raise ValueError("pairing needs three (a, b) pairs with a != b")
        object.__setattr__(self, "pairing", pairing)
        if self.correction not in ("derived", "printed", "none"):
            raise ValueError(f"unknown correction mode {self.correction!r}")
        if self.target_q is not None:
            object.__setattr__(self, "target_q", np.asarray(self.target_q, dtype=float))


@dataclass(frozen=True, eq=False)
class ControlDecomposition:
    """Every intermediate of one control evaluation."""

    u_tilde: np.ndarray
    rho: float
    h2: np.ndarray
    w: np.ndarray
    u: np.ndarray
    u_c: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    guard: bool = False


def kinematic_fields(q, config: SwarmConfig):
    """X(q) = Zhat(q) S(q); column j is the q-space field of quasi-velocity j."""
    return zhat(q, config.n) @ nullspace_basis(q, config)


def kinematic_fields_dir(q, d, config: SwarmConfig, a=None, S=None):
    """Directional derivative of X(q) along d."""
    n = config.n
    if a is None:
        a = momentum_matrix(q, config)
    if S is None:
        S = nullspace_basis(q, config, a)
    return zhat_dir(q, d, n) @ S + zhat(q, n) @ basis_dir(q, d, config, a)


def field_bracket(q, i, j, config: SwarmConfig, X=None):
    """Lie bracket [X_i, X_j](q) = DX_j X_i - DX_i X_j of two kinematic fields."""
    if X is None:
        X = kinematic_fields(q, config)
    a = momentum_matrix(q, config)
    S = nullspace_basis(q, config, a)
    dj = kinematic_fields_dir(q, X[:, i], config, a, S)[:, j]
    di = kinematic_fields_dir(q, X[:, j], config, a, S)[:, i]
    return dj - di


def bracket_matrix(q, config: SwarmConfig, pairing=DEFAULT_PAIRING, check=True):
    """[X, [X_a0, X_b0], [X_a1, X_b1], [X_a2, X_b2]], square of size 6n - 3.

    Raises:
        SingularBracketMatrix: the columns are (numerically) dependent.
    """
    a = momentum_matrix(q, config)
    S = nullspace_basis(q, config, a)
    zh = zhat(q, config.n)
    X = zh @ S
    used = sorted({i for p in pairing for i in p})
    dX = {i: zhat_dir(q, X[:, i], config.n) @ S + zh @ basis_dir(q, X[:, i], config, a)
          for i in used}
    cols = [dX[ia][:, ib] - dX[ib][:, ia] for ia, ib in pairing]
    out = np.column_stack([X] + cols)
    if check:
        _check_rank(out)
    return out


def _check_rank(mat):
    sv = np.linalg.svd(mat.real, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularBracketMatrix(
            f"bracket matrix is rank deficient (cond={cond:.3e})", cond)


def rho(err, n: int, power: float = 1.0):
    """Sum of the fourth powers of the position errors plus squared MRP errors."""
    r, s = split_q(np.asarray(err), n)
    base = float(np.sum(r ** 4) + np.sum(s ** 2))
    return base ** power if base > 0 else 0.0


def rho_grad(err, n: int, power: float = 1.0):
    r, s = split_q(np.asarray(err), n)
    base = float(np.sum(r ** 4) + np.sum(s ** 2))
    g = np.concatenate([(4 * r ** 3).ravel(), (2 * s).ravel()])
    if power == 1.0:
        return g
    if base <= 0:
        return np.zeros_like(g)
    return power * base ** (power - 1.0) * g


def dither_inputs(t: float, cfg: ControllerConfig):
    """The six oscillatory scalars (u1, u2) of the three dither channels."""
    om = np.asarray(cfg.omega)
    phase = om * t / cfg.epsilon
    amp = cfg.epsilon ** -0.5
    return amp * np.cos(phase), 2.0 * om * amp * np.sin(phase)


def common_period(cfg: ControllerConfig):
    """Smallest T with every dither channel T-periodic, assuming rational ratios."""
    fr = [Fraction(w).limit_denominator(10 ** 6) for w in cfg.omega]
    # gcd of rationals: gcd of numerators over lcm of denominators
    num = 0
    den = 1
    for f in fr:
        num = gcd(num, f.numerator)
        den = lcm(den, f.denominator)
    base = num / den
    return 2 * np.pi * cfg.epsilon / base


class TimeVaryingController:
    """The bracket-based stabilizer for one swarm.

    Calling the object with ``(t, q, v)`` returns u_c; ``decompose`` returns
    every intermediate term.
    """

    def __init__(self, swarm: SwarmConfig, cfg: ControllerConfig | None = None):
        self.swarm = swarm
        self.cfg = cfg or ControllerConfig()
        n = swarm.n
        if self.cfg.target_q is None:
            self.target = np.zeros(swarm.dim_q)
        else:
            self.target = self.cfg.target_q
            if self.target.shape != (swarm.dim_q,):
                raise ValueError(f"target_q must have length {swarm.dim_q}")
        self._mass = mass_matrix(swarm)
        self.guard_events = 0
        m = swarm.dim_v
        for p in self.cfg.pairing:
            if max(p) >= m:
                raise ValueError("pairing index beyond the quasi-velocity size")
        self._n = n

    def __call__(self, t, q, v):
        return self.decompose(q, v, t).u_c

    def error(self, q):
        return np.asarray(q, dtype=float) - self.target

    def u_tilde(self, q):
        """Bracket-extended inverse applied to the coordinate error."""
        Q = bracket_matrix(q, self.swarm, self.cfg.pairing)
        return -np.linalg.solve(Q, self.error(q))

    def _u_tilde_with_derivs(self, q, dirs):
        """u_tilde and its directional derivatives along each column of dirs.

        D u_tilde[d] = -Q^-1 (d + DQ[d] u_tilde); DQ[d] by complex step.
        """
        Q = bracket_matrix(q, self.swarm, self.cfg.pairing)
        lu = np.linalg.inv(Q)
        ut = -lu @ self.error(q)
        derivs = []
        for d in dirs.T:
            qc = q + 1j * _CSTEP * d
            dQ = bracket_matrix(qc, self.swarm, self.cfg.pairing, check=False).imag / _CSTEP
            derivs.append(-lu @ (d + dQ @ ut))
        return ut, np.array(derivs).T

    def h2_terms(self, q, X, ut, rho_val, grad_rho, dut):
        """Averaging corrections added to the direct velocity channels.

        For channel k driving (a, b) with amplitudes alpha = rho and
        beta = u_tilde_k / rho, the averaged field is
        [alpha X_a, beta X_b] = alpha beta [X_a, X_b]
        + alpha (L_Xa beta) X_b - beta (L_Xb alpha) X_a;
        the "derived" mode removes the last two terms.  ``dut[:, i]`` holds
        D u_tilde along X_i for i = 0, 1, 2 ...
        """
        m = self.swarm.dim_v
        h = np.zeros(m)
        mode = self.cfg.correction
        if mode == "none":
            return h
        for k, (a, b) in enumerate(self.cfg.pairing):
            uk = ut[m + k]
            beta = uk / rho_val
            l_b_alpha = grad_rho @ X[:, b]
            l_a_alpha = grad_rho @ X[:, a]
            l_a_beta = dut[m + k, a] / rho_val - uk * l_a_alpha / rho_val ** 2
            if mode == "derived":
                h[a] += beta * l_b_alpha
                h[b] -= rho_val * l_a_beta
            else:
                # literal reading: v1 in both Lie derivatives
                h[a] += beta * l_b_alpha
                h[b] -= rho_val * l_a_alpha
        return h

    def decompose(self, q, v, t) -> ControlDecomposition:
        cfg = self.cfg
        sw = self.swarm
        n = self._n
        m = sw.dim_v
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        a = momentum_matrix(q, sw)
        S = nullspace_basis(q, sw, a)
        X = zhat(q, n) @ S
        err = self.error(q)
        rho_val = rho(err, n, cfg.rho_power)
        used = sorted({i for p in cfg.pairing for i in p})
        dirs = np.zeros((sw.dim_q, m))
        dirs[:, used] = X[:, used]
        guard = rho_val < cfg.rho_min
        if guard:
            ut = self.u_tilde(q)
            dut = np.zeros((sw.dim_q, m))
            self.guard_events += 1
            log.debug("rho=%.3e below rho_min, dither channels off", rho_val)
        else:
            ut, dut_used = self._u_tilde_with_derivs(q, dirs[:, used])
            dut = np.zeros((sw.dim_q, m))
            dut[:, used] = dut_used
        u1, u2 = dither_inputs(t, cfg)
        v1 = np.empty(sw.dim_q)
        v1[:m] = ut[:m]
        v2 = np.zeros(3)
        h = np.zeros(m)
        w = np.zeros(m)
        if guard:
            v1[m:] = 0.0
        else:
            grad = rho_grad(err, n, cfg.rho_power)
            h = self.h2_terms(q, X, ut, rho_val, grad, dut)
            v1[:m] += h
            v1[m:] = rho_val
            v2 = ut[m:] / rho_val
        w += v1[:m]
        for k, (ia, ib) in enumerate(cfg.pairing):
            w[ia] += u1[k] * v1[m + k]
            w[ib] += u2[k] * v2[k]
        u = -cfg.K * (v - w)
        u_c = self._mass @ (S @ u)
        return ControlDecomposition(ut, rho_val, h, w, u, u_c, v1, v2, guard)
