"""
Physical constants and derived mirror quantities
Shared value objects for every other module: constants table, modulation settings,
mirror model and the experiment parameters of one bounce
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import scipy.constants as const

from errors import DomainError

logger = logging.getLogger(__name__)

RB87_MASS = 1.44316e-25  # kg
STANDARD_GRAVITY = 9.81  # m/s^2, fixed for the whole run
D2_WAVELENGTH = 780.24e-9  # m
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ConstantsTable:
    """Physical constants used by one run; the single source of truth for M, hbar and g."""

    atom_mass: float = RB87_MASS
    hbar: float = const.hbar
    g: float = STANDARD_GRAVITY
    d2_wavelength: float = D2_WAVELENGTH

    def __post_init__(self):
        errors = [
            f"{name} must be strictly positive (got {value!r})"
            for name, value in (
                ("atom_mass", self.atom_mass),
                ("hbar", self.hbar),
                ("g", self.g),
                ("d2_wavelength", self.d2_wavelength),
            )
            if not value > 0
        ]
        if errors:
            raise DomainError("Invalid constants:\n" + "\n".join(f"- {e}" for e in errors))

        if abs(self.atom_mass / RB87_MASS - 1.0) > 1e-3:
            logger.warning(f"⚠️ atom_mass {self.atom_mass:.5e} kg is not 87Rb; species override in use")


DEFAULT_CONSTANTS = ConstantsTable()


def angular(frequency_hz: float) -> float:
    """Ordinary frequency (Hz) to angular frequency (rad/s)"""
    return TWO_PI * frequency_hz


@dataclass(frozen=True)
class ModulationSettings:
    """Laser settings that drive the mirror vibration.

    Frequencies are ordinary frequencies in Hz, powers in W. The power swing is
    optional because only detuning swings were recorded for the experiments.
    """

    base_power: float
    base_detuning_hz: float
    detuning_swing_hz: float
    mod_frequency_hz: float
    power_swing: float = 0.0

    @property
    def power_depth(self) -> float:
        """epsilon_P = dP / P0"""
        if self.base_power == 0:
            raise DomainError("base power P0 is zero: power modulation depth undefined")
        return self.power_swing / self.base_power

    @property
    def detuning_depth(self) -> float:
        """epsilon_delta = -d_delta / delta0"""
        if self.base_detuning_hz == 0:
            raise DomainError("base detuning delta0 is zero: detuning modulation depth undefined")
        return -self.detuning_swing_hz / self.base_detuning_hz

    @property
    def omega(self) -> float:
        return angular(self.mod_frequency_hz)


def modulation_depth(settings: ModulationSettings) -> float:
    """Modulation depth of the a.c. Stark shift U ∝ P/delta: |eps_P + eps_delta|"""
    eps = abs(settings.power_depth + settings.detuning_depth)
    if not eps < 1.0:
        raise DomainError(f"modulation depth {eps:.4g} outside the weak-modulation regime [0, 1)")
    return eps


def mirror_amplitude(eps: float, kappa: float) -> float:
    """Vibration amplitude z_M = eps / (2 kappa) of the equivalent translated mirror"""
    if not kappa > 0:
        raise DomainError(f"kappa must be positive (got {kappa!r})")
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"modulation depth must lie in [0, 1) (got {eps!r})")
    return eps / (2.0 * kappa)


def recoil_velocity(constants: ConstantsTable = DEFAULT_CONSTANTS) -> float:
    """Photon recoil velocity hbar k_L / M on the D2 line"""
    return constants.hbar * (TWO_PI / constants.d2_wavelength) / constants.atom_mass


def free_fall_time(drop_height: float, constants: ConstantsTable = DEFAULT_CONSTANTS) -> float:
    if not drop_height > 0:
        raise DomainError(f"drop height must be positive (got {drop_height!r})")
    return math.sqrt(2.0 * drop_height / constants.g)


@dataclass(frozen=True)
class MirrorModel:
    """Exponential evanescent mirror U0 exp(-2 kappa z) vibrating at omega.

    The vibration amplitude is derived from the modulation depth, never stored.
    """

    kappa: float
    barrier_height: float
    omega: float
    mod_depth: float

    def __post_init__(self):
        errors = []
        if not self.kappa > 0:
            errors.append(f"kappa must be positive (got {self.kappa!r})")
        if not self.barrier_height > 0:
            errors.append(f"barrier height U0 must be positive (got {self.barrier_height!r})")
        if not self.omega >= 0:
            errors.append(f"omega must be non-negative (got {self.omega!r})")
        if not 0.0 <= self.mod_depth < 1.0:
            errors.append(f"modulation depth must lie in [0, 1) (got {self.mod_depth!r})")
        if errors:
            raise DomainError("Invalid mirror model:\n" + "\n".join(f"- {e}" for e in errors))

    @property
    def vib_amplitude(self) -> float:
        return mirror_amplitude(self.mod_depth, self.kappa)

    @property
    def decay_length(self) -> float:
        return 1.0 / self.kappa

    def with_depth(self, eps: float) -> "MirrorModel":
        return MirrorModel(self.kappa, self.barrier_height, self.omega, eps)


@dataclass(frozen=True)
class ExperimentParams:
    """One bounce experiment: drop, flight times, drift and mirror settings (one preset row)."""

    drop_height: float
    fall_time: float
    bounce_time: float
    horizontal_velocity: float
    mirror: MirrorModel
    modulation: ModulationSettings
    constants: ConstantsTable = DEFAULT_CONSTANTS
    name: str = "custom"
    table_depth: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        errors = []
        if not self.drop_height > 0:
            errors.append(f"drop height must be positive (got {self.drop_height!r})")
        if not self.fall_time > 0:
            errors.append(f"fall time must be positive (got {self.fall_time!r})")
        if not self.bounce_time > 0:
            errors.append(f"bounce time must be positive (got {self.bounce_time!r})")
        if errors:
            raise DomainError("Invalid experiment parameters:\n" + "\n".join(f"- {e}" for e in errors))

        expected = free_fall_time(self.drop_height, self.constants)
        mismatch = abs(self.fall_time / expected - 1.0)
        if mismatch > 0.02:
            logger.warning(
                f"⚠️ [{self.name}] fall time {self.fall_time * 1e3:.2f} ms differs from free fall "
                f"{expected * 1e3:.2f} ms by {mismatch:.1%}"
            )

    @property
    def omega(self) -> float:
        return self.mirror.omega

    @property
    def mod_depth(self) -> float:
        return self.mirror.mod_depth

    def with_depth(self, eps: float) -> "ExperimentParams":
        """Same experiment with another modulation depth (used by the weight sweep)"""
        return ExperimentParams(
            drop_height=self.drop_height,
            fall_time=self.fall_time,
            bounce_time=self.bounce_time,
            horizontal_velocity=self.horizontal_velocity,
            mirror=self.mirror.with_depth(eps),
            modulation=self.modulation,
            constants=self.constants,
            name=self.name,
            table_depth=self.table_depth,
        )
