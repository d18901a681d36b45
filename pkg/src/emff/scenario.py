"""Scenario files: YAML documents describing a swarm, a controller and a run.

Schema (every section is a mapping)::

    name: paper_fig123
    swarm:
      r_min: 0.1                  # optional, m
      mu0: 1.2566370614e-06       # optional
      satellites:                 # one entry per satellite, n >= 2
        - id: 1                   # unique
          mass: 3.0               # kg
          inertia: [1, 2, 3]      # diagonal, or a 3x3 nested list
          coil: {turns: 100, area: 0.5, current_max: 50, ac_frequency: 100}
    controller:
      K: 30
      epsilon: 0.1
      omega: [0.2, 0.4, 0.6]
      rho_power: 0.25             # optional
      correction: derived         # derived | printed | none
      pairing: [[1, 2], [2, 0], [0, 1]]
      target:                     # optional, default all zero
        positions: [[x, y, z], ...]   # satellites 2..n
        mrps: [[s1, s2, s3], ...]     # satellites 1..n
    initial:
      mode: random                # random | explicit
      seed: 42
      position_radius: 1.0        # offsets uniform in a ball about the target
      mrp_radius: 0.5
      # explicit mode: q: [...], zeta: [...]
    run:
      dt: 0.001
      duration: 60
      control: direct             # direct | dipole
      output_stride: 100          # steps between CSV rows
      control_period: null        # zero-order hold period [s]; null = per stage
      allocation_tol: 1.0e-6
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .config import MU0, CoilParams, SwarmConfig
from .constraint import angular_momentum
from .controller import DEFAULT_PAIRING, ControllerConfig
from .errors import ParseError, ValidationError

SCENARIO_DIR = Path(__file__).parent / "scenarios"


@dataclass(frozen=True, eq=False)
class InitialSpec:
    mode: str = "random"
    seed: int = 0
    position_radius: float = 1.0
    mrp_radius: float = 0.5
    q: np.ndarray | None = None
    zeta: np.ndarray | None = None


@dataclass(frozen=True)
class RunSpec:
    dt: float = 1e-3
    duration: float = 60.0
    control: str = "direct"
    output_stride: int = 100
    control_period: float | None = None
    allocation_tol: float = 1e-6
    divergence_limit: float = 1e3

    @property
    def steps(self) -> int:
        return max(1, int(round(self.duration / self.dt)))


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    swarm: SwarmConfig
    controller: ControllerConfig
    initial: InitialSpec
    run: RunSpec
    satellite_ids: tuple = field(default=())

    def with_overrides(self, seed=None, dt=None, duration=None, mode=None) -> "Scenario":
        init = self.initial if seed is None else replace(self.initial, seed=int(seed))
        kw = {}
        if dt is not None:
            kw["dt"] = float(dt)
        if duration is not None:
            kw["duration"] = float(duration)
        if mode is not None:
            kw["control"] = mode
        run = replace(self.run, **kw)
        _validate_run(run)
        return replace(self, initial=init, run=run)

    @property
    def target(self) -> np.ndarray:
        t = self.controller.target_q
        return np.zeros(self.swarm.dim_q) if t is None else t


def _num(value, where, positive=False, allow_zero=True):
    if isinstance(value, str):
        # YAML 1.1 reads 1e6 (no exponent sign) as a string
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{where}: must be finite")
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        raise ValidationError(f"{where}: must be positive")
    return value


def _vec(value, size, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a list of numbers") from None
    if arr.shape != (size,) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where}: expected {size} finite numbers")
    return arr


def _section(doc, key, required=True):
    val = doc.get(key)
    if val is None:
        if required:
            raise ValidationError(f"missing section '{key}'")
        return {}
    if not isinstance(val, dict):
        raise ValidationError(f"section '{key}' must be a mapping")
    return val


def _inertia(value, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected numbers") from None
    if arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where}: expected 3 diagonal entries or a 3x3 matrix")
    if not np.allclose(arr, arr.T):
        raise ValidationError(f"{where}: inertia must be symmetric")
    if np.linalg.eigvalsh(arr).min() <= 0:
        raise ValidationError(f"{where}: inertia must be positive definite")
    return arr


def _coil(value, where):
    if value is None:
        return CoilParams()
    if not isinstance(value, dict):
        raise ValidationError(f"{where}: must be a mapping")
    known = {"turns", "area", "axis", "current_max", "ac_frequency"}
    extra = set(value) - known
    if extra:
        raise ValidationError(f"{where}: unknown keys {sorted(extra)}")
    kw = dict(value)
    if "axis" in kw:
        kw["axis"] = tuple(_vec(kw["axis"], 3, f"{where}.axis"))
    try:
        return CoilParams(**kw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _swarm(sec):
    sats = sec.get("satellites")
    if not isinstance(sats, list) or len(sats) < 2:
        raise ValidationError("swarm.satellites: need a list of at least 2 satellites")
    masses, inertias, coils, ids = [], [], [], []
    for k, sat in enumerate(sats, start=1):
        where = f"swarm.satellites[{k}]"
        if not isinstance(sat, dict):
            raise ValidationError(f"{where}: must be a mapping")
        sid = sat.get("id", k)
        if sid in ids:
            raise ValidationError(f"{where}: duplicate satellite id {sid!r}")
        ids.append(sid)
        if "mass" not in sat:
            raise ValidationError(f"{where}: satellite {k} is missing 'mass'")
        masses.append(_num(sat["mass"], f"{where}.mass", positive=True, allow_zero=False))
        if "inertia" not in sat:
            raise ValidationError(f"{where}: satellite {k} is missing 'inertia'")
        inertias.append(_inertia(sat["inertia"], f"{where}.inertia"))
        coils.append(_coil(sat.get("coil"), f"{where}.coil"))
    r_min = _num(sec.get("r_min", 0.1), "swarm.r_min", positive=True)
    mu0 = _num(sec.get("mu0", MU0), "swarm.mu0", positive=True, allow_zero=False)
    return SwarmConfig(np.array(masses), np.stack(inertias), tuple(coils), mu0, r_min), tuple(ids)


def _target(value, n):
    if value is None or value == "zero":
        return None
    if not isinstance(value, dict):
        raise ValidationError("controller.target: must be a mapping or 'zero'")
    pos = value.get("positions", [[0.0] * 3] * (n - 1))
    mrp = value.get("mrps", [[0.0] * 3] * n)
    if not isinstance(pos, list) or len(pos) != n - 1:
        raise ValidationError(f"controller.target.positions: need {n - 1} entries (satellites 2..n)")
    if not isinstance(mrp, list) or len(mrp) != n:
        raise ValidationError(f"controller.target.mrps: need {n} entries")
    parts = [_vec(p, 3, f"controller.target.positions[{j + 2}]") for j, p in enumerate(pos)]
    parts += [_vec(s, 3, f"controller.target.mrps[{j + 1}]") for j, s in enumerate(mrp)]
    q = np.concatenate(parts)
    if np.any(np.linalg.norm(q[3 * (n - 1):].reshape(n, 3), axis=1) > 1.0):
        raise ValidationError("controller.target.mrps: each |sigma| must be <= 1")
    return q


def _controller(sec, n):
    try:
        omega = tuple(_vec(sec.get("omega", (0.2, 0.4, 0.6)), 3, "controller.omega"))
        pairing = sec.get("pairing", DEFAULT_PAIRING)
        cfg = ControllerConfig(
            K=_num(sec.get("K", 30.0), "controller.K"),
            epsilon=_num(sec.get("epsilon", 0.1), "controller.epsilon"),
            omega=omega,
            target_q=_target(sec.get("target"), n),
            pairing=tuple(tuple(p) for p in pairing),
            rho_power=_num(sec.get("rho_power", 0.25), "controller.rho_power"),
            correction=str(sec.get("correction", "derived")),
            rho_min=_num(sec.get("rho_min", 1e-9), "controller.rho_min", positive=True),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"controller: {exc}") from None
    if max(max(p) for p in cfg.pairing) >= 6 * n - 6:
        raise ValidationError("controller.pairing: index beyond the quasi-velocity size")
    return cfg


def _initial(sec, swarm):
    mode = sec.get("mode", "random")
    if mode == "random":
        seed = sec.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ValidationError("initial.seed: must be a non-negative integer")
        if "zeta" in sec and np.any(np.asarray(sec["zeta"], dtype=float) != 0):
            raise ValidationError("initial.zeta: random initial states start at rest")
        return InitialSpec(
            "random", seed,
            _num(sec.get("position_radius", 1.0), "initial.position_radius", positive=True),
            _num(sec.get("mrp_radius", 0.5), "initial.mrp_radius", positive=True))
    if mode == "explicit":
        if "q" not in sec:
            raise ValidationError("initial.q: required in explicit mode")
        q = _vec(sec["q"], swarm.dim_q, "initial.q")
        zeta = _vec(sec.get("zeta", np.zeros(swarm.dim_q)), swarm.dim_q, "initial.zeta")
        h = angular_momentum(q, zeta, swarm)
        if np.linalg.norm(h) > 1e-9:
            raise ValidationError(
                f"initial.zeta: total angular momentum {np.linalg.norm(h):.3e} must be zero")
        return InitialSpec("explicit", 0, q=q, zeta=zeta)
    raise ValidationError(f"initial.mode: expected 'random' or 'explicit', got {mode!r}")


def _validate_run(run: RunSpec):
    if not run.dt > 0:
        raise ValidationError("run.dt: must be positive")
    if not run.duration > 0:
        raise ValidationError("run.duration: must be positive")
    if run.control not in ("direct", "dipole"):
        raise ValidationError(f"run.control: expected 'direct' or 'dipole', got {run.control!r}")
    if run.output_stride < 1:
        raise ValidationError("run.output_stride: must be at least 1")
    if run.control_period is not None and run.control_period < run.dt:
        raise ValidationError("run.control_period: must be at least dt")


def _run(sec):
    stride = sec.get("output_stride", 100)
    if isinstance(stride, bool) or not isinstance(stride, int):
        raise ValidationError("run.output_stride: must be an integer")
    period = sec.get("control_period")
    run = RunSpec(
        dt=_num(sec.get("dt", 1e-3), "run.dt"),
        duration=_num(sec.get("duration", 60.0), "run.duration"),
        control=str(sec.get("control", "direct")),
        output_stride=stride,
        control_period=None if period is None else _num(period, "run.control_period"),
        allocation_tol=_num(sec.get("allocation_tol", 1e-6), "run.allocation_tol",
                            positive=True, allow_zero=False),
        divergence_limit=_num(sec.get("divergence_limit", 1e3), "run.divergence_limit",
                              positive=True, allow_zero=False),
    )
    _validate_run(run)
    return run


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate a scenario document.

    Raises:
        ParseError: malformed YAML (with line and column) or a non-mapping root.
        ValidationError: a field violates an invariant; the message names it.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ParseError(f"{source}: {loc}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ParseError(f"{source}: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be a mapping")
    swarm, ids = _swarm(_section(doc, "swarm"))
    controller = _controller(_section(doc, "controller", required=False), swarm.n)
    initial = _initial(_section(doc, "initial", required=False), swarm)
    run = _run(_section(doc, "run", required=False))
    name = str(doc.get("name", Path(source).stem))
    return Scenario(name, swarm, controller, initial, run, ids)


def load_scenario(path) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    p = Path(path)
    if not p.exists():
        bundled = SCENARIO_DIR / f"{path}.yaml"
        if bundled.exists():
            p = bundled
        else:
            raise ValidationError(f"scenario {str(path)!r} not found")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{p}: {exc}") from None
    return parse_scenario(text, str(p))


def _ball(rng, radius):
    d = rng.normal(size=3)
    return d / np.linalg.norm(d) * radius * rng.uniform() ** (1.0 / 3.0)


def sample_initial_q(swarm: SwarmConfig, target, rng, position_radius=1.0, mrp_radius=0.5):
    """Target plus offsets uniform in balls: |dr_j| <= position_radius, |dsigma_j| <= mrp_radius."""
    n = swarm.n
    offs = [_ball(rng, position_radius) for _ in range(n - 1)]
    offs += [_ball(rng, mrp_radius) for _ in range(n)]
    return np.asarray(target, dtype=float) + np.concatenate(offs)


def initial_state(scn: Scenario):
    """(q0, zeta0) for the scenario."""
    if scn.initial.mode == "explicit":
        return scn.initial.q.copy(), scn.initial.zeta.copy()
    rng = np.random.default_rng(scn.initial.seed)
    q = sample_initial_q(scn.swarm, scn.target, rng, scn.initial.position_radius,
                         scn.initial.mrp_radius)
    return q, np.zeros(scn.swarm.dim_q)
