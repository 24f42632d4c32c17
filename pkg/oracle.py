"""
Split-operator Schrödinger oracle for the vibrating mirror
Propagates a Gaussian packet through U0 [1 + eps sin(Omega t)] exp(-2 kappa z) in units
hbar = M = kappa = 1 and compares the reflected sideband populations with the closed form
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core import ExperimentParams
from diffraction import DiffractionInput, SidebandSpectrum, diffraction_input, q_parameter, sideband_weights
from errors import ConfigurationError, ContractError, PropagationError
from Utils.helpers import format_duration, run_batches

logger = logging.getLogger(__name__)

MIN_K_OVER_KAPPA = 10.0
PHASE_LIMIT = 0.5  # rad per step, kinetic and potential terms separately
PHASE_SAFETY = 0.8
FIELD_EDGE = 1e-6  # U/E where the incident packet may start
SEPARATION_LEVEL = 1e-3  # U/E beyond which the reflected packet counts as separated
SEPARATION_LEAK = 1e-6
POPULATED_WEIGHT = 1e-6
RESOLUTION_FACTOR = 4.0
SPREAD_LIMIT = 0.2  # momentum spread over sideband spacing
CONVERGENCE_TOLERANCE = 0.02
CONVERGENCE_FLOOR = 1e-3
AGREEMENT_TOLERANCE = 0.10
AGREEMENT_WEIGHT = 0.05
REPORTED_WEIGHT = 1e-4
ABSORBER_BUDGET = 1e-3
VELOCITY_RATIO_LIMIT = 0.2
MAX_POINTS = 2**22
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

APPROXIMATIONS = (
    "gravity omitted inside the mirror region",
    "plane wave replaced by a Gaussian packet",
    "barrier capped far below the turning point",
)


@dataclass(frozen=True)
class Grid:
    """Periodic spatial grid and its FFT wavenumber axis"""

    z_min: float
    z_max: float
    n_points: int

    def __post_init__(self):
        errors = []
        if not self.z_max > self.z_min:
            errors.append(f"z_max {self.z_max!r} must exceed z_min {self.z_min!r}")
        if self.n_points < 2 or self.n_points & (self.n_points - 1):
            errors.append(f"n_points must be a power of two (got {self.n_points})")
        if errors:
            raise ConfigurationError("Invalid grid:\n" + "\n".join(f"- {e}" for e in errors))

    @property
    def length(self) -> float:
        return self.z_max - self.z_min

    @property
    def dz(self) -> float:
        return self.length / self.n_points

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)

    @property
    def nyquist(self) -> float:
        return np.pi / self.dz

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.z_min, self.z_max, self.n_points * factor)

    def check_resolution(self, k_incident: float, k_populated: float) -> None:
        """Nyquist >= 3x the populated band and dz <= lambda/8 at the incident wavenumber"""
        errors = []
        if self.nyquist < 3.0 * k_populated:
            errors.append(f"Nyquist wavenumber {self.nyquist:.4g} below 3 x populated band {k_populated:.4g}")
        if self.dz > 2.0 * np.pi / k_incident / 8.0:
            errors.append(f"dz {self.dz:.4g} coarser than lambda/8 at k={k_incident:.4g}")
        if errors:
            raise ConfigurationError("Grid cannot resolve the packet:\n" + "\n".join(f"- {e}" for e in errors))


@dataclass(frozen=True, eq=False)
class Wavepacket:
    grid: Grid
    amplitudes: np.ndarray = field(repr=False)
    time: float = 0.0
    absorbed: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dz)

    def fraction_where(self, mask: np.ndarray) -> float:
        density = np.abs(self.amplitudes) ** 2
        return float(density[mask].sum() / density.sum())


@dataclass(frozen=True)
class ModulatedBarrier:
    """U(z, t) = [1 + eps sin(Omega t)] min(U0 exp(-2 z), cap)"""

    barrier_height: float
    mod_depth: float = 0.0
    omega: float = 0.0
    cap: float = math.inf

    def profile(self, z: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.minimum(self.barrier_height * np.exp(-2.0 * np.asarray(z)), self.cap)

    def modulation(self, t: float) -> float:
        return 1.0 + self.mod_depth * math.sin(self.omega * t)

    def __call__(self, z: np.ndarray, t: float) -> np.ndarray:
        return self.modulation(t) * self.profile(z)

    def peak(self, z: np.ndarray) -> float:
        return float(self.profile(z).max()) * (1.0 + self.mod_depth)


@dataclass(frozen=True)
class CosineAbsorber:
    """Cosine-squared imaginary ramp over the last `width` of the grid"""

    width: float
    strength: float

    def mask(self, grid: Grid, dt: float) -> np.ndarray:
        start = grid.z_max - self.width
        s = np.clip((grid.z - start) / self.width, 0.0, 1.0)
        return np.exp(-self.strength * abs(dt) * np.sin(0.5 * np.pi * s) ** 2)


def build_incident_packet(
    grid: Grid,
    k: float,
    sigma_z: float,
    z_center: float,
    *,
    potential: Optional[ModulatedBarrier] = None,
    energy: Optional[float] = None,
    sideband_spacing: Optional[float] = None,
) -> Wavepacket:
    """Normalised Gaussian exp(-(z - z_c)^2 / (4 sigma_z^2) - i k z) moving toward the mirror.

    |psi|^2 has standard deviation sigma_z, so the wavenumber spread is 1 / (2 sigma_z).
    """
    errors = []
    if not sigma_z > 0:
        errors.append(f"sigma_z must be positive (got {sigma_z!r})")
    elif not (grid.z_min <= z_center - 3.0 * sigma_z and z_center + 3.0 * sigma_z <= grid.z_max):
        errors.append(f"packet z_c ± 3 sigma = {z_center:.4g} ± {3 * sigma_z:.4g} leaves the grid")
    if potential is not None and energy is not None:
        level = float(potential.profile(np.array([z_center]))[0]) * (1.0 + potential.mod_depth) / energy
        if not level < FIELD_EDGE:
            errors.append(f"packet starts inside the mirror field (U/E = {level:.3g})")
    if sideband_spacing is not None and sigma_z > 0:
        spread = 1.0 / (2.0 * sigma_z)
        if spread > SPREAD_LIMIT * sideband_spacing:
            errors.append(
                f"unresolvable sidebands: spread {spread:.4g} exceeds {SPREAD_LIMIT} x spacing {sideband_spacing:.4g}"
            )
    if errors:
        raise ConfigurationError("Invalid incident packet:\n" + "\n".join(f"- {e}" for e in errors))

    z = grid.z
    psi = np.exp(-((z - z_center) ** 2) / (4.0 * sigma_z**2) - 1j * k * z)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dz)
    return Wavepacket(grid=grid, amplitudes=psi, time=0.0)


def _band_edge(packet: Wavepacket) -> float:
    """|<k>| + 6 std of the packet's wavenumber distribution"""
    kk = packet.grid.wavenumbers
    density = np.abs(np.fft.fft(packet.amplitudes)) ** 2
    density /= density.sum()
    mean = float(np.sum(kk * density))
    std = math.sqrt(max(float(np.sum((kk - mean) ** 2 * density)), 0.0))
    return abs(mean) + 6.0 * std


class SplitOperatorPropagator:
    """Symmetric split-operator stepping: half kinetic, potential at mid-time, half kinetic"""

    def __init__(
        self,
        grid: Grid,
        potential: ModulatedBarrier,
        dt: float,
        *,
        k_band: float,
        absorber: Optional[CosineAbsorber] = None,
    ):
        self.grid = grid
        self.potential = potential
        self.dt = dt
        self._profile = potential.profile(grid.z)

        potential_phase = potential.peak(grid.z) * abs(dt)
        kinetic_phase = 0.5 * k_band**2 * abs(dt)
        if potential_phase >= PHASE_LIMIT or kinetic_phase >= PHASE_LIMIT:
            raise ConfigurationError(
                f"time step {dt:.4g} too large: potential phase {potential_phase:.3f} rad, "
                f"kinetic phase {kinetic_phase:.3f} rad per step (limit {PHASE_LIMIT})"
            )

        kinetic = 0.5 * grid.wavenumbers**2
        self._half_kinetic = np.exp(-0.5j * dt * kinetic)
        self._full_kinetic = self._half_kinetic**2
        self._mask = absorber.mask(grid, dt) if absorber is not None and absorber.width > 0 else None

    def run(self, packet: Wavepacket, n_steps: int) -> Wavepacket:
        if n_steps <= 0:
            return packet

        dz = self.grid.dz
        t0 = packet.time
        absorbed = packet.absorbed
        psi_k = np.fft.fft(packet.amplitudes) * self._half_kinetic

        for i in range(n_steps):
            psi = np.fft.ifft(psi_k)
            t_mid = t0 + (i + 0.5) * self.dt
            psi *= np.exp(-1j * self.dt * self.potential.modulation(t_mid) * self._profile)

            if self._mask is not None:
                before = np.sum(np.abs(psi) ** 2)
                psi *= self._mask
                absorbed += float(before - np.sum(np.abs(psi) ** 2)) * dz

            psi_k = np.fft.fft(psi) * (self._full_kinetic if i < n_steps - 1 else self._half_kinetic)
            if not np.isfinite(psi_k).all():
                raise PropagationError(f"non-finite amplitudes at step {i} (t = {t_mid:.6g})", step=i)

        return Wavepacket(
            grid=self.grid,
            amplitudes=np.fft.ifft(psi_k),
            time=t0 + n_steps * self.dt,
            absorbed=absorbed,
        )


def step(
    packet: Wavepacket,
    potential: ModulatedBarrier,
    dt: float,
    *,
    absorber: Optional[CosineAbsorber] = None,
    k_band: Optional[float] = None,
) -> Wavepacket:
    """One symmetric split-operator step of length dt (negative dt runs backward)"""
    band = _band_edge(packet) if k_band is None else k_band
    return SplitOperatorPropagator(packet.grid, potential, dt, k_band=band, absorber=absorber).run(packet, 1)


def propagate(
    packet: Wavepacket,
    potential: ModulatedBarrier,
    dt: float,
    n_steps: int,
    *,
    absorber: Optional[CosineAbsorber] = None,
    k_band: Optional[float] = None,
) -> Wavepacket:
    """n_steps symmetric steps with adjacent half-kinetic factors fused"""
    band = _band_edge(packet) if k_band is None else k_band
    return SplitOperatorPropagator(packet.grid, potential, dt, k_band=band, absorber=absorber).run(packet, n_steps)


@dataclass(frozen=True, eq=False)
class MomentumSpectrum:
    """Wavenumber density normalised to unit integral; amplitudes keep the phase"""

    wavenumbers: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    dk: float

    def integral(self, lo: float = -math.inf, hi: float = math.inf) -> float:
        window = (self.wavenumbers >= lo) & (self.wavenumbers < hi)
        return float(self.density[window].sum() * self.dk)

    def mean(self, lo: float = -math.inf, hi: float = math.inf) -> float:
        window = (self.wavenumbers >= lo) & (self.wavenumbers < hi)
        weights = self.density[window]
        return float(np.sum(self.wavenumbers[window] * weights) / weights.sum())

    def std(self, lo: float = -math.inf, hi: float = math.inf) -> float:
        window = (self.wavenumbers >= lo) & (self.wavenumbers < hi)
        weights = self.density[window]
        mean = np.sum(self.wavenumbers[window] * weights) / weights.sum()
        return float(math.sqrt(np.sum((self.wavenumbers[window] - mean) ** 2 * weights) / weights.sum()))

    def amplitude_at(self, k: float) -> complex:
        return complex(self.amplitudes[int(np.argmin(np.abs(self.wavenumbers - k)))])


def momentum_spectrum(
    packet: Wavepacket,
    *,
    potential: Optional[ModulatedBarrier] = None,
    energy: Optional[float] = None,
) -> MomentumSpectrum:
    """|psi(k)|^2 on the FFT axis, sorted by wavenumber.

    With a potential and energy given, the packet must have left the mirror region.
    """
    grid = packet.grid
    if potential is not None and energy is not None:
        inside = potential.profile(grid.z) * (1.0 + potential.mod_depth) > SEPARATION_LEVEL * energy
        leak = packet.fraction_where(inside)
        if leak >= SEPARATION_LEAK:
            raise ContractError(f"packet not separated from the mirror: {leak:.3g} of the norm remains inside")

    kk = grid.wavenumbers
    phi = np.fft.fft(packet.amplitudes) * grid.dz / math.sqrt(2.0 * np.pi) * np.exp(-1j * kk * grid.z_min)
    order = np.argsort(kk)
    dk = 2.0 * np.pi / grid.length
    density = np.abs(phi[order]) ** 2
    scale = density.sum() * dk
    return MomentumSpectrum(
        wavenumbers=kk[order],
        density=density / scale,
        amplitudes=phi[order] / math.sqrt(scale),
        dk=dk,
    )


def _order_wavenumber(k: float, n: int, omega: float, mass: float, hbar: float) -> Optional[float]:
    radicand = k * k + 2.0 * n * omega * mass / hbar
    return math.sqrt(radicand) if radicand > 0 else None


def extract_populations(
    spectrum: MomentumSpectrum,
    k: float,
    omega: float,
    mass: float,
    n_max: int,
    hbar: float = 1.0,
) -> SidebandSpectrum:
    """Integrate the reflected density over one bin per order.

    Bins are centred on the exact k_n with edges halfway to the neighbouring orders;
    weights are relative to the whole reflected (k > 0) norm.
    """
    centres: Dict[int, float] = {}
    for n in range(-n_max, n_max + 1):
        k_n = _order_wavenumber(k, n, omega, mass, hbar)
        if k_n is not None:
            centres[n] = k_n
    orders = sorted(centres)
    if len(orders) < 2:
        raise ContractError("need at least two allowed orders to place sideband bins")

    edges: Dict[int, Tuple[float, float]] = {}
    for i, n in enumerate(orders):
        lo = 0.5 * (centres[orders[i - 1]] + centres[n]) if i > 0 else max(0.0, 1.5 * centres[n] - 0.5 * centres[orders[1]])
        hi = (
            0.5 * (centres[n] + centres[orders[i + 1]])
            if i < len(orders) - 1
            else 1.5 * centres[n] - 0.5 * centres[orders[-2]]
        )
        edges[n] = (lo, hi)

    neighbours = [abs(centres[m] - centres[0]) for m in (-1, 1) if m in centres]
    spacing = min(neighbours) if neighbours else 0.0
    width = FWHM_PER_SIGMA * spectrum.std(*edges[0])
    if not spacing > RESOLUTION_FACTOR * width:
        raise ContractError(
            f"sidebands not resolved: spacing {spacing:.4g} <= {RESOLUTION_FACTOR:g} x peak FWHM {width:.4g}"
        )

    reflected = spectrum.integral(0.0)
    if not reflected > 0:
        raise ContractError("no reflected norm in the spectrum")

    weights = tuple((n, spectrum.integral(*edges[n]) / reflected) for n in orders)
    return SidebandSpectrum(orders=weights, cutoff=n_max, modulation_index=None, source="oracle")


@dataclass(frozen=True)
class OracleConfig:
    """Oracle run in units hbar = M = kappa = 1; k_over_kappa and q are the physical dials."""

    dimensionless: bool = True
    k_over_kappa: float = 20.0
    q: float = 1.0
    mod_depth: float = 0.062
    barrier_ratio: float = 4.0
    sigma_z: Optional[float] = None
    time_step: Optional[float] = None
    total_steps: Optional[int] = None
    points_per_wavelength: float = 8.0
    cap_ratio: float = 10.0
    absorber_width: float = 0.0
    absorber_strength: float = 0.0
    check_convergence: bool = True
    n_max: Optional[int] = None
    z_offset: float = 0.0

    def __post_init__(self):
        errors = []
        if not self.k_over_kappa >= MIN_K_OVER_KAPPA:
            errors.append(f"k/kappa must be at least {MIN_K_OVER_KAPPA:g} (got {self.k_over_kappa!r})")
        if not self.barrier_ratio > 1.0:
            errors.append(f"U0/E must exceed 1 (got {self.barrier_ratio!r})")
        if not 0.0 <= self.mod_depth < 1.0:
            errors.append(f"modulation depth must lie in [0, 1) (got {self.mod_depth!r})")
        if not self.q > 0:
            errors.append(f"Q must be positive (got {self.q!r})")
        if self.sigma_z is not None and not self.sigma_z > 0:
            errors.append(f"sigma_z must be positive (got {self.sigma_z!r})")
        if self.time_step is not None and not self.time_step > 0:
            errors.append(f"time_step must be positive (got {self.time_step!r})")
        if self.total_steps is not None and self.total_steps < 1:
            errors.append(f"total_steps must be at least 1 (got {self.total_steps!r})")
        if not self.points_per_wavelength >= 8:
            errors.append(f"points_per_wavelength must be at least 8 (got {self.points_per_wavelength!r})")
        if not self.cap_ratio >= 2.0:
            errors.append(f"cap_ratio must be at least 2 (got {self.cap_ratio!r})")
        if self.absorber_width < 0 or self.absorber_strength < 0:
            errors.append("absorber width and strength must be non-negative")
        if self.n_max is not None and self.n_max < 1:
            errors.append(f"n_max must be at least 1 (got {self.n_max!r})")
        if errors:
            raise ConfigurationError("Invalid oracle configuration:\n" + "\n".join(f"- {e}" for e in errors))

    @classmethod
    def from_experiment(cls, params: ExperimentParams, **overrides: Any) -> "OracleConfig":
        """Rescale an SI experiment to the dimensionless dials k/kappa and Q"""
        inp = diffraction_input(params)
        values: Dict[str, Any] = {
            "dimensionless": False,
            "k_over_kappa": inp.k / inp.kappa,
            "q": q_parameter(inp),
            "mod_depth": params.mod_depth,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    @property
    def k(self) -> float:
        return self.k_over_kappa

    @property
    def energy(self) -> float:
        return 0.5 * self.k**2

    @property
    def omega(self) -> float:
        return self.q * self.k

    @property
    def sideband_spacing(self) -> float:
        return self.omega / self.k

    @property
    def envelope_width(self) -> float:
        return self.sigma_z if self.sigma_z is not None else 6.0 / self.q

    @property
    def mirror_velocity_ratio(self) -> float:
        """z_M Omega / v = eps Q / 2"""
        return 0.5 * self.mod_depth * self.q

    def potential(self) -> ModulatedBarrier:
        return ModulatedBarrier(
            barrier_height=self.barrier_ratio * self.energy,
            mod_depth=self.mod_depth,
            omega=self.omega,
            cap=self.cap_ratio * self.energy,
        )

    def absorber(self) -> Optional[CosineAbsorber]:
        if self.absorber_width > 0 and self.absorber_strength > 0:
            return CosineAbsorber(self.absorber_width, self.absorber_strength)
        return None

    def model_input(self) -> DiffractionInput:
        return DiffractionInput(
            k=self.k, z_m=0.5 * self.mod_depth, kappa=1.0, omega=self.omega, atom_mass=1.0, hbar=1.0
        )

    def model_spectrum(self) -> SidebandSpectrum:
        return sideband_weights(self.model_input(), self.n_max)


@dataclass(frozen=True)
class OracleLayout:
    """Box, packet placement and stepping chosen for one config"""

    grid: Grid
    k: float
    sigma_z: float
    z_center: float
    z_turn: float
    time_step: float
    n_steps: int
    populated_order: int
    k_populated: float

    @property
    def total_time(self) -> float:
        return self.time_step * self.n_steps

    def refined(self, factor: int = 2) -> "OracleLayout":
        """Same box and duration with dz and dt divided by factor"""
        return replace(
            self,
            grid=self.grid.refined(factor),
            time_step=self.time_step / factor,
            n_steps=self.n_steps * factor,
        )

    def as_dict(self) -> Dict[str, Any]:
        return {
            "z_min": self.grid.z_min,
            "z_max": self.grid.z_max,
            "n_points": self.grid.n_points,
            "dz": self.grid.dz,
            "sigma_z": self.sigma_z,
            "z_center": self.z_center,
            "z_turn": self.z_turn,
            "time_step": self.time_step,
            "n_steps": self.n_steps,
            "total_time": self.total_time,
            "populated_order": self.populated_order,
            "k_populated": self.k_populated,
        }


def _populated_order(model: SidebandSpectrum, k: float, omega: float) -> int:
    allowed = [
        abs(n) for n, w in model.orders if w > POPULATED_WEIGHT and _order_wavenumber(k, n, omega, 1.0, 1.0)
    ]
    return max(allowed) if allowed else 0


def plan_layout(config: OracleConfig) -> OracleLayout:
    """Size the box and the time step so the reflected orders separate from the mirror"""
    k = config.k
    energy = config.energy
    omega = config.omega
    sigma = config.envelope_width
    ratio = config.barrier_ratio

    z_turn = 0.5 * math.log(ratio)
    z_field = 0.5 * math.log(ratio / FIELD_EDGE)
    z_sep = 0.5 * math.log(ratio / SEPARATION_LEVEL)
    z_center = z_field + 6.0 * sigma + config.z_offset

    n_pop = _populated_order(config.model_spectrum(), k, omega)
    slowest = min(n for n in range(-n_pop, 1) if _order_wavenumber(k, n, omega, 1.0, 1.0))
    k_slow = _order_wavenumber(k, slowest, omega, 1.0, 1.0)
    k_fast = _order_wavenumber(k, n_pop, omega, 1.0, 1.0)
    k_populated = k_fast + 5.0 / (2.0 * sigma)

    t_in = (z_center - z_turn) / k
    t_guess = t_in + (z_sep + 6.0 * sigma - z_turn) / k_slow
    sigma_out = sigma * (k_fast / k) * math.sqrt(1.0 + (t_guess * (k / k_slow) / (2.0 * sigma**2)) ** 2)
    t_out = (z_sep + 6.0 * sigma_out - z_turn) / k_slow
    total_time = t_in + t_out

    z_min = min(0.0, -0.5 * math.log(config.cap_ratio / ratio)) - 2.0
    z_max = max(z_turn + k_fast * t_out + 8.0 * sigma_out, z_center + 8.0 * sigma)
    if config.absorber() is not None:
        z_max += config.absorber_width

    target_dz = 2.0 * np.pi / k_populated / config.points_per_wavelength
    n_points = 1 << max(1, math.ceil(math.log2((z_max - z_min) / target_dz)))
    if n_points > MAX_POINTS:
        raise ConfigurationError(f"oracle grid would need {n_points} points (limit {MAX_POINTS})")
    grid = Grid(z_min, z_max, n_points)
    grid.check_resolution(k, k_populated)

    peak = config.potential().peak(grid.z)
    if config.total_steps is not None:
        n_steps = config.total_steps
    else:
        dt_target = config.time_step or PHASE_SAFETY * PHASE_LIMIT / max(peak, 0.5 * k_populated**2)
        n_steps = math.ceil(total_time / dt_target)
    dt = total_time / n_steps

    return OracleLayout(
        grid=grid,
        k=k,
        sigma_z=sigma,
        z_center=z_center,
        z_turn=z_turn,
        time_step=dt,
        n_steps=n_steps,
        populated_order=n_pop,
        k_populated=k_populated,
    )


@dataclass(frozen=True)
class OracleRun:
    measured: SidebandSpectrum
    absorbed_norm: float
    reflected_norm: float
    final_norm: float
    spectrum: Optional[MomentumSpectrum] = field(default=None, repr=False, compare=False)


def simulate(config: OracleConfig, layout: OracleLayout, n_max: int) -> OracleRun:
    """Propagate one incident packet through the bounce and extract the sideband populations"""
    potential = config.potential()
    packet = build_incident_packet(
        layout.grid,
        layout.k,
        layout.sigma_z,
        layout.z_center,
        potential=potential,
        energy=config.energy,
        sideband_spacing=config.sideband_spacing,
    )
    final = propagate(
        packet,
        potential,
        layout.time_step,
        layout.n_steps,
        absorber=config.absorber(),
        k_band=layout.k_populated,
    )
    spectrum = momentum_spectrum(final, potential=potential, energy=config.energy)
    measured = extract_populations(spectrum, layout.k, config.omega, 1.0, n_max)
    return OracleRun(
        measured=measured,
        absorbed_norm=final.absorbed,
        reflected_norm=spectrum.integral(0.0),
        final_norm=final.norm,
        spectrum=spectrum,
    )


@dataclass(frozen=True)
class ComparisonRow:
    order: int
    model: float
    oracle: float
    relative_error: Optional[float]


@dataclass(frozen=True, eq=False)
class OracleReport:
    config: OracleConfig
    layout: OracleLayout
    model: SidebandSpectrum
    measured: SidebandSpectrum
    rows: Tuple[ComparisonRow, ...]
    agreement: bool
    converged: Optional[bool]
    convergence_deltas: Dict[int, float]
    absorbed_norm: float
    reflected_norm: float
    norm_deficit: float
    mirror_velocity_ratio: float
    flags: Tuple[str, ...]
    spectrum: Optional[MomentumSpectrum] = field(default=None, repr=False, compare=False)

    def row(self, n: int) -> ComparisonRow:
        for row in self.rows:
            if row.order == n:
                return row
        raise KeyError(n)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "parameters": {
                **asdict(self.config),
                "k": self.config.k,
                "omega": self.config.omega,
                "energy": self.config.energy,
                "barrier_height": self.config.barrier_ratio * self.config.energy,
                "z_m": 0.5 * self.config.mod_depth,
                "modulation_index": self.model.modulation_index,
            },
            "layout": self.layout.as_dict(),
            "orders": [
                {
                    "n": row.order,
                    "model": row.model,
                    "oracle": row.oracle,
                    "relative_error": row.relative_error,
                }
                for row in self.rows
            ],
            "agreement": self.agreement,
            "converged": self.converged,
            "convergence_deltas": {str(n): d for n, d in sorted(self.convergence_deltas.items())},
            "absorbed_norm": self.absorbed_norm,
            "reflected_norm": self.reflected_norm,
            "norm_deficit": self.norm_deficit,
            "mirror_velocity_ratio": self.mirror_velocity_ratio,
            "flags": list(self.flags),
            "approximations": list(APPROXIMATIONS),
        }


def _comparison_rows(model: SidebandSpectrum, measured: SidebandSpectrum) -> List[ComparisonRow]:
    rows = []
    for n, oracle_weight in measured.orders:
        model_weight = model.weight(n)
        if max(model_weight, oracle_weight) < REPORTED_WEIGHT:
            continue
        rel = abs(oracle_weight - model_weight) / model_weight if model_weight >= REPORTED_WEIGHT else None
        rows.append(ComparisonRow(order=n, model=model_weight, oracle=oracle_weight, relative_error=rel))
    return rows


def run_oracle(config: OracleConfig, workers: int = 2) -> OracleReport:
    """Propagate, extract and compare with the closed form; optionally repeat at dz/2, dt/2"""
    started = time.perf_counter()
    layout = plan_layout(config)
    model = config.model_spectrum()
    logger.info(
        f"🔬 Oracle k/κ={config.k_over_kappa:.4g} Q={config.q:.4g} ε={config.mod_depth:.4g}: "
        f"N={layout.grid.n_points}, {layout.n_steps} steps, T={layout.total_time:.4g}"
    )

    flags = []
    velocity_ratio = config.mirror_velocity_ratio
    if velocity_ratio > VELOCITY_RATIO_LIMIT:
        flags.append("mirror_velocity_out_of_contract")
        logger.warning(
            f"⚠️ mirror velocity ratio z_M Ω / v = {velocity_ratio:.3g} exceeds {VELOCITY_RATIO_LIMIT}; "
            f"boundary-condition assumptions no longer hold"
        )

    levels = [layout, layout.refined()] if config.check_convergence else [layout]
    runs = run_batches(levels, lambda lay: simulate(config, lay, model.cutoff), workers=len(levels))
    base = runs[0]

    converged: Optional[bool] = None
    deltas: Dict[int, float] = {}
    if len(runs) > 1:
        fine = runs[1].measured
        converged = True
        for n, w in base.measured.orders:
            delta = abs(fine.weight(n) - w)
            deltas[n] = delta
            if delta > CONVERGENCE_TOLERANCE * max(w, CONVERGENCE_FLOOR):
                converged = False
        if not converged:
            flags.append("non_converged")
            worst = max(deltas, key=lambda n: deltas[n] / max(base.measured.weight(n), CONVERGENCE_FLOOR))
            logger.warning(f"⚠️ Oracle not converged under dz/2, dt/2 (worst order {worst}: Δ={deltas[worst]:.3g})")

    if base.absorbed_norm >= ABSORBER_BUDGET:
        flags.append("absorber_loss_exceeded")
        logger.warning(f"⚠️ absorber removed {base.absorbed_norm:.3g} of the norm")

    norm_deficit = abs(1.0 - base.measured.total())
    if norm_deficit > 1e-3:
        flags.append("norm_deficit")
        logger.warning(f"⚠️ extracted weights sum to {base.measured.total():.6f}")

    rows = _comparison_rows(model, base.measured)
    agreement = all(
        row.relative_error is not None and row.relative_error <= AGREEMENT_TOLERANCE
        for row in rows
        if row.model > AGREEMENT_WEIGHT
    )

    elapsed = time.perf_counter() - started
    status = "✅" if agreement and converged is not False else "⚠️"
    logger.info(
        f"{status} Oracle finished in {format_duration(elapsed)}: "
        + ", ".join(f"P({r.order})={r.oracle:.4f}/{r.model:.4f}" for r in rows if r.model > AGREEMENT_WEIGHT)
    )

    return OracleReport(
        config=config,
        layout=layout,
        model=model,
        measured=base.measured,
        rows=tuple(rows),
        agreement=agreement,
        converged=converged,
        convergence_deltas=deltas,
        absorbed_norm=base.absorbed_norm,
        reflected_norm=base.reflected_norm,
        norm_deficit=norm_deficit,
        mirror_velocity_ratio=velocity_ratio,
        flags=tuple(flags),
        spectrum=base.spectrum,
    )


@dataclass(frozen=True)
class RefinementLadder:
    """Reflected-carrier phase at successive dz, dt halvings"""

    n_points: Tuple[int, ...]
    phases: Tuple[float, ...]
    differences: Tuple[float, ...]

    @property
    def ratio(self) -> float:
        return self.differences[0] / self.differences[1]


def refinement_ratio(config: OracleConfig, levels: int = 3, workers: int = 1) -> RefinementLadder:
    """Error ratio of the static-mirror reflection phase under (dz, dt) -> (dz/2, dt/2); ~4 for second order"""
    if levels < 3:
        raise ConfigurationError(f"refinement ladder needs at least 3 levels (got {levels})")

    static = replace(config, mod_depth=0.0, check_convergence=False)
    base = plan_layout(static)
    ladder = [base.refined(2**i) if i else base for i in range(levels)]

    def carrier_amplitude(layout: OracleLayout) -> complex:
        run = simulate(static, layout, 1)
        return run.spectrum.amplitude_at(layout.k)

    amplitudes = run_batches(ladder, carrier_amplitude, workers=workers)
    phases = tuple(float(np.angle(a)) for a in amplitudes)
    differences = tuple(
        float(np.angle(amplitudes[i + 1] / amplitudes[i])) for i in range(levels - 1)
    )
    logger.info(f"📐 Refinement phase differences: {', '.join(f'{d:.3g}' for d in differences)}")
    return RefinementLadder(
        n_points=tuple(layout.grid.n_points for layout in ladder),
        phases=phases,
        differences=differences,
    )
