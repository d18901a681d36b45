"""Physical parameters of an EMFF swarm."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MU0 = 4.0e-7 * np.pi


@dataclass(frozen=True)
class CoilParams:
    """One satellite's coil set.

    Attributes:
        turns: number of coil turns N_t.
        area: area enclosed by a coil [m^2].
        axis: unit normal of the coil plane. Three-axis coils can point the
            dipole anywhere, so this is informational for the allocator.
        current_max: peak coil current [A].
        ac_frequency: AC drive frequency omega_f [rad/s].
    """

    turns: int = 100
    area: float = 0.5
    axis: tuple = (0.0, 0.0, 1.0)
    current_max: float = 50.0
    ac_frequency: float = 100.0

    def __post_init__(self):
        if self.turns < 1:
            raise ValueError("coil needs at least one turn")
        if self.area <= 0:
            raise ValueError("coil area must be positive")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("coil axis must be a unit vector")
        if self.ac_frequency <= 0:
            raise ValueError("AC frequency must be positive")
        if self.current_max <= 0:
            raise ValueError("current limit must be positive")

    @property
    def max_dipole(self) -> float:
        """Largest dipole component the coil can produce [A m^2]."""
        return self.turns * self.area * self.current_max


@dataclass(frozen=True, eq=False)
class SwarmConfig:
    """Masses, inertias and coils of n satellites plus global constants.

    Attributes:
        masses: shape (n,), kg.
        inertias: shape (n, 3, 3), body-frame inertia tensors, kg m^2.
        coils: one CoilParams per satellite.
        mu0: vacuum permeability.
        r_min: smallest separation the far-field dipole model accepts [m].
    """

    masses: np.ndarray
    inertias: np.ndarray
    coils: tuple = field(default=())
    mu0: float = MU0
    r_min: float = 0.1

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        inertias = np.asarray(self.inertias, dtype=float)
        if masses.ndim != 1 or masses.size < 2:
            raise ValueError("need at least two satellites")
        if inertias.shape != (masses.size, 3, 3):
            raise ValueError(f"inertias must have shape ({masses.size}, 3, 3)")
        if np.any(masses <= 0):
            raise ValueError("masses must be positive")
        coils = tuple(self.coils) or tuple(CoilParams() for _ in masses)
        if len(coils) != masses.size:
            raise ValueError("one coil set per satellite")
        masses.setflags(write=False)
        inertias.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "inertias", inertias)
        object.__setattr__(self, "coils", coils)
        inv = np.linalg.inv(inertias)
        inv.setflags(write=False)
        object.__setattr__(self, "_inertia_inv", inv)

    @property
    def n(self) -> int:
        return self.masses.size

    @property
    def dim_q(self) -> int:
        """Size of q and zeta: 6n - 3."""
        return 6 * self.n - 3

    @property
    def dim_v(self) -> int:
        """Size of the quasi-velocity: 6n - 6."""
        return 6 * self.n - 6

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv

    @property
    def max_dipoles(self) -> np.ndarray:
        return np.array([c.max_dipole for c in self.coils])

    def scaled(self, factor: float) -> "SwarmConfig":
        """Same swarm with every mass and inertia multiplied by ``factor``."""
        return SwarmConfig(self.masses * factor, self.inertias * factor,
                           self.coils, self.mu0, self.r_min)

    @classmethod
    def paper_fig123(cls) -> "SwarmConfig":
        """Three 3 kg satellites with inertias k * diag(1, 2, 3), k = 1, 2, 3."""
        base = np.diag([1.0, 2.0, 3.0])
        return cls(np.full(3, 3.0), np.stack([base, 2 * base, 3 * base]))
