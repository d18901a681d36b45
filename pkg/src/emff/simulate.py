"""Closed-loop simulation of a scenario.

The default engine runs the compiled kernels; the numpy engine runs the
reference modules and accepts any pairing table.  Both integrate the reduced
system with RK4 and apply shadow switching after every step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .constraint import angular_momentum, full_positions, nullspace_basis
from .controller import TimeVaryingController, bracket_matrix, rho
from .dynamics import integrate_step, mass_matrix
from .errors import (NonFiniteState, NotConverged, SaturationExceeded,
                     SingularBracketMatrix)
from .kinematics import SwarmState, split_q, switch_attitudes
from .magnetics import (DipolePair, allocate_dipoles, averaged_wrench,
                        pairs_to_vector, stack_wrenches)
from .scenario import Scenario, initial_state

log = logging.getLogger(__name__)

_CORR = {"none": K.CORR_NONE, "derived": K.CORR_DERIVED, "printed": K.CORR_PRINTED}


class ClosedLoop:
    """Controller plus reduced dynamics for one scenario."""

    def __init__(self, scn: Scenario, engine: str = "auto"):
        self.scn = scn
        sw = scn.swarm
        cfg = scn.controller
        self.swarm = sw
        self.m = sw.dim_v
        self.target = scn.target
        fits_kernel = max(max(p) for p in cfg.pairing) < 3
        if engine == "auto":
            engine = "numba" if fits_kernel else "numpy"
        if engine == "numba" and not fits_kernel:
            raise ValueError("the compiled engine needs pairing indices below 3")
        if engine not in ("numba", "numpy"):
            raise ValueError(f"unknown engine {engine!r}")
        self.engine = engine
        self.ctrl = TimeVaryingController(sw, cfg)
        self._geo = (sw.masses, sw.inertias, np.ascontiguousarray(sw.inertia_inv[-1]),
                     mass_matrix(sw))
        self._law = (np.ascontiguousarray(self.target), np.array(cfg.pairing, dtype=np.int64),
                     np.array(cfg.omega), float(cfg.K), float(cfg.epsilon),
                     float(cfg.rho_power), float(cfg.rho_min), _CORR[cfg.correction])

    def _singular(self, q):
        try:
            bracket_matrix(q, self.swarm, self.scn.controller.pairing)
        except SingularBracketMatrix:
            raise
        raise SingularBracketMatrix("bracket solve failed", float("inf"))

    def control(self, t, q, v):
        """(u_c, rho used by the law)."""
        if self.engine == "numpy":
            d = self.ctrl.decompose(q, v, t)
            return d.u_c, d.rho
        try:
            out = K.control(q, v, t, *self._geo, *self._law)
        except np.linalg.LinAlgError:
            self._singular(q)
        return out[0], out[2]

    def step(self, q, v, t, dt):
        """RK4 step with the controller evaluated at every stage."""
        if self.engine == "numpy":
            state = SwarmState(q, nullspace_basis(q, self.swarm) @ v)
            new, _ = integrate_step(self.swarm, state, self.ctrl, dt, t, switch=False)
            return new.q, new.zeta[:self.m]
        try:
            return K.rk4_step(q, v, t, dt, *self._geo, *self._law)
        except np.linalg.LinAlgError:
            self._singular(q)

    def step_held(self, q, v, dt, u_c):
        """RK4 step with u_c held over the step."""
        if self.engine == "numpy":
            state = SwarmState(q, nullspace_basis(q, self.swarm) @ v)
            new, _ = integrate_step(self.swarm, state, u_c, dt, 0.0, switch=False)
            return new.q, new.zeta[:self.m]
        return K.rk4_step_held(q, v, dt, np.ascontiguousarray(u_c), *self._geo)


@dataclass(eq=False)
class AllocationLog:
    t: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    status: list = field(default_factory=list)
    dipoles: list = field(default_factory=list)
    commanded: list = field(default_factory=list)
    realized: list = field(default_factory=list)


@dataclass(eq=False)
class RunResult:
    """Recorded trajectory and summary of one run."""

    scenario: str
    seed: int
    n: int
    t: np.ndarray
    q: np.ndarray
    zeta: np.ndarray
    err_norm: np.ndarray
    rho: np.ndarray
    momentum: np.ndarray
    uc_norm: np.ndarray
    phase: np.ndarray
    switches: int
    status: str
    message: str
    wall_time: float
    allocation: AllocationLog | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def ratio(self) -> float:
        return float(self.err_norm[-1] / self.err_norm[0]) if self.err_norm[0] > 0 else 0.0

    def summary(self) -> dict:
        out = {
            "scenario": self.scenario,
            "seed": self.seed,
            "status": self.status,
            "message": self.message,
            "final_time": float(self.t[-1]),
            "initial_error_norm": float(self.err_norm[0]),
            "final_error_norm": float(self.err_norm[-1]),
            "error_ratio": self.ratio,
            "peak_uc_norm": float(np.max(self.uc_norm)),
            "max_momentum_drift": float(np.max(self.momentum)),
            "shadow_switches": self.switches,
            "wall_time_s": round(self.wall_time, 3),
        }
        if self.allocation is not None and self.allocation.residual:
            res = np.asarray(self.allocation.residual)
            out["max_allocation_residual"] = float(res.max())
            out["allocation_failures"] = sum(s != "ok" for s in self.allocation.status)
        return out


class _Recorder:
    def __init__(self, scn: Scenario, loop: ClosedLoop):
        self.scn = scn
        self.loop = loop
        self.rows = []

    def add(self, t, q, v, u_c, rho_val):
        sw = self.scn.swarm
        zeta = nullspace_basis(q, sw) @ v
        cfg = self.scn.controller
        phase = float(np.mod(cfg.omega[0] * t / cfg.epsilon, 2 * np.pi))
        self.rows.append((t, q.copy(), zeta, float(np.linalg.norm(q - self.loop.target)),
                          float(rho_val), float(np.linalg.norm(angular_momentum(q, zeta, sw))),
                          float(np.linalg.norm(u_c)), phase))

    def result(self, seed, switches, status, message, wall, alloc):
        cols = list(zip(*self.rows))
        return RunResult(self.scn.name, seed, self.scn.swarm.n, np.array(cols[0]),
                         np.array(cols[1]), np.array(cols[2]), np.array(cols[3]),
                         np.array(cols[4]), np.array(cols[5]), np.array(cols[6]),
                         np.array(cols[7]), switches, status, message, wall, alloc)


def _initial_guess(scn: Scenario, q, u_c, rng):
    """Random dipoles sized so their wrench matches |u_c| in magnitude."""
    sw = scn.swarm
    pos = full_positions(q, sw)
    d = np.linalg.norm(pos[:, None] - pos[None, :], axis=-1)
    dmin = d[np.triu_indices(sw.n, 1)].min()
    k = 3 * sw.mu0 / (4 * np.pi)
    scale = np.sqrt(max(np.linalg.norm(u_c), 1e-12) * dmin ** 4 / k)
    x = rng.normal(size=6 * sw.n) * scale
    return [DipolePair(b[0], b[1]) for b in x.reshape(-1, 2, 3)]


class _DipoleActuator:
    """Turns a commanded u_c into the averaged wrench of allocated dipoles."""

    def __init__(self, scn: Scenario, seed: int):
        self.scn = scn
        self.rng = np.random.default_rng(seed + 7919)
        self.guess = None
        self.log = AllocationLog()

    def __call__(self, t, q, u_c):
        sw = self.scn.swarm
        pos = full_positions(q, sw)
        _, sig = split_q(q, sw.n)
        if self.guess is None:
            self.guess = _initial_guess(self.scn, q, u_c, self.rng)
        status = "ok"
        try:
            res = allocate_dipoles(u_c, pos, sig, self.guess, sw, tol=self.scn.run.allocation_tol)
            pairs, resid, iters = res.pairs, res.residual, res.iterations
        except (NotConverged, SaturationExceeded) as exc:
            pairs, resid, iters = exc.pairs, exc.residual, -1
            status = type(exc).__name__
            log.info("allocation at t=%.4f: %s", t, exc)
        self.guess = pairs
        realized = stack_wrenches(averaged_wrench(pairs, pos, sw.mu0, sw.r_min), sig)
        lg = self.log
        lg.t.append(t)
        lg.residual.append(float(resid))
        lg.iterations.append(int(iters))
        lg.status.append(status)
        lg.dipoles.append(pairs_to_vector(pairs))
        lg.commanded.append(np.array(u_c))
        lg.realized.append(realized)
        return realized


def simulate(scn: Scenario, engine: str = "auto") -> RunResult:
    """Integrate the closed loop over the scenario horizon.

    Numerical failures (non-finite state, divergence past the scenario's
    limit, singular bracket matrix) end the run early; the result then has
    status "aborted" and ends with the last valid state.
    """
    run = scn.run
    sw = scn.swarm
    loop = ClosedLoop(scn, engine)
    rec = _Recorder(scn, loop)
    q, zeta = initial_state(scn)
    q, switches = switch_attitudes(q, sw.n)
    v = zeta[:sw.dim_v].copy()
    dt = run.dt
    steps = run.steps
    hold = None
    if run.control == "dipole" or run.control_period is not None:
        period = run.control_period if run.control_period is not None else dt
        hold = max(1, int(round(period / dt)))
    actuator = _DipoleActuator(scn, scn.initial.seed) if run.control == "dipole" else None
    limit = run.divergence_limit * max(1.0, float(np.linalg.norm(q - loop.target)))
    status, message = "ok", ""
    start = time.perf_counter()
    t_valid = 0.0
    u_held = None
    try:
        u_c, rho_val = loop.control(0.0, q, v)
        if actuator is not None:
            u_held = actuator(0.0, q, u_c)
        rec.add(0.0, q, v, u_c if u_held is None else u_held, rho_val)
        for k in range(steps):
            t = k * dt
            if hold is None:
                q_new, v_new = loop.step(q, v, t, dt)
            else:
                if k % hold == 0:
                    u_c, _ = loop.control(t, q, v)
                    u_held = actuator(t, q, u_c) if actuator is not None else u_c
                q_new, v_new = loop.step_held(q, v, dt, u_held)
            if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(v_new))):
                raise NonFiniteState(f"non-finite state at t={(k + 1) * dt:.6g}")
            if np.linalg.norm(q_new - loop.target) > limit:
                raise NonFiniteState(f"state diverged past {limit:.3g} at t={(k + 1) * dt:.6g}")
            q, n_sw = switch_attitudes(q_new, sw.n)
            v = v_new
            t_valid = (k + 1) * dt
            switches += n_sw
            if (k + 1) % run.output_stride == 0 or k == steps - 1:
                tk = (k + 1) * dt
                u_c, rho_val = loop.control(tk, q, v)
                if hold is not None and u_held is not None:
                    u_c = u_held
                rec.add(tk, q, v, u_c, rho_val)
    except (NonFiniteState, SingularBracketMatrix) as exc:
        status = "aborted"
        message = f"{type(exc).__name__}: {exc}"
        log.warning("run aborted: %s", message)
        if rec.rows[-1][0] != t_valid:
            rec.add(t_valid, q, v, np.zeros(sw.dim_q), rho(q - loop.target, sw.n,
                                                     scn.controller.rho_power))
    wall = time.perf_counter() - start
    return rec.result(scn.initial.seed, switches, status, message, wall,
                      actuator.log if actuator else None)
