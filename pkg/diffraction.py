"""
Closed-form sideband weights of the vibrating evanescent mirror
Hard-mirror Bessel expansion, the soft-mirror reduction factor beta(Q) and the
modulation-depth sweep
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.constants as const
from scipy import special

from core import ExperimentParams, mirror_amplitude
from errors import ContractError, DomainError
from kinematics import impact_state

logger = logging.getLogger(__name__)

BESSEL_MAX_ORDER = 60
BESSEL_MAX_ARGUMENT = 50.0
CUTOFF_MARGIN = 10
DEFAULT_CUTOFF_MARGIN = 15
NORMALIZATION_TOLERANCE = 1e-6
SWEEP_MAX_DEPTH = 0.2
BETA_SERIES_LIMIT = 1e-4

J0_FIRST_ZERO = float(special.jn_zeros(0, 1)[0])


@dataclass(frozen=True)
class DiffractionInput:
    """Symbols entering the weight formula; hbar is a field so scaled units can be used."""

    k: float
    z_m: float
    kappa: float
    omega: float
    atom_mass: float
    hbar: float = const.hbar

    def __post_init__(self):
        errors = [
            f"{name} must be positive (got {value!r})"
            for name, value in (
                ("k", self.k),
                ("kappa", self.kappa),
                ("atom_mass", self.atom_mass),
                ("hbar", self.hbar),
            )
            if not value > 0
        ]
        if not self.z_m >= 0:
            errors.append(f"z_M must be non-negative (got {self.z_m!r})")
        if not self.omega >= 0:
            errors.append(f"omega must be non-negative (got {self.omega!r})")
        if errors:
            raise DomainError("Invalid diffraction input:\n" + "\n".join(f"- {e}" for e in errors))


@dataclass(frozen=True)
class SidebandSpectrum:
    """Ordered map n -> weight.

    Model spectra carry their modulation index; measured spectra (oracle, images)
    leave it unset and make no parity promise.
    """

    orders: Tuple[Tuple[int, float], ...]
    cutoff: int
    modulation_index: Optional[float] = None
    source: str = "model"

    def weight(self, n: int) -> float:
        return self.as_dict().get(n, 0.0)

    def as_dict(self) -> Dict[int, float]:
        return dict(self.orders)

    @property
    def order_numbers(self) -> List[int]:
        return [n for n, _ in self.orders]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.orders])

    def total(self) -> float:
        return math.fsum(w for _, w in self.orders)

    def significant(self, min_weight: float) -> "SidebandSpectrum":
        """Contiguous order range around the carrier whose outer orders still reach min_weight"""
        kept = [n for n, w in self.orders if w >= min_weight]
        if not kept:
            raise ContractError(f"no order reaches weight {min_weight}")
        lo, hi = min(kept), max(kept)
        return SidebandSpectrum(
            orders=tuple((n, w) for n, w in self.orders if lo <= n <= hi),
            cutoff=self.cutoff,
            modulation_index=self.modulation_index,
            source=self.source,
        )


def bessel_j(n: int, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Bessel function of the first kind J_n(x) on 0 <= x <= 50, |n| <= 60.

    Negative orders use the parity J_{-n} = (-1)^n J_n.
    """
    order = abs(int(n))
    if order > BESSEL_MAX_ORDER:
        raise DomainError(f"Bessel order {n} outside the supported envelope |n| <= {BESSEL_MAX_ORDER}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > BESSEL_MAX_ARGUMENT) or not np.all(np.isfinite(arr)):
        raise DomainError(f"Bessel argument outside the supported envelope [0, {BESSEL_MAX_ARGUMENT}]")

    value = special.jv(order, arr)
    if n < 0 and order % 2:
        value = -value
    return float(value) if np.ndim(value) == 0 else value


def beta(q: float) -> float:
    """Soft-mirror reduction factor (pi q / 2) / sinh(pi q / 2)"""
    if q < 0:
        raise DomainError(f"Q must be non-negative (got {q!r})")
    x = 0.5 * math.pi * q
    if q < BETA_SERIES_LIMIT:
        x2 = x * x
        return 1.0 - x2 / 6.0 + 7.0 * x2 * x2 / 360.0
    if x > 700.0:
        return 0.0
    return x / math.sinh(x)


def q_parameter(inp: DiffractionInput) -> float:
    """Sideband wavenumber spacing Omega M / (hbar k) over the decay constant kappa"""
    return inp.omega * inp.atom_mass / (inp.hbar * inp.k) / inp.kappa


def modulation_index(inp: DiffractionInput) -> float:
    """A = 2 k z_M beta(Q)"""
    return 2.0 * inp.k * inp.z_m * beta(q_parameter(inp))


def minimum_cutoff(index: float) -> int:
    return math.ceil(index) + CUTOFF_MARGIN


def default_cutoff(index: float) -> int:
    return math.ceil(index) + DEFAULT_CUTOFF_MARGIN


def _spectrum_from_index(index: float, n_max: Optional[int]) -> SidebandSpectrum:
    required = minimum_cutoff(index)
    if n_max is None:
        n_max = default_cutoff(index)
    if n_max < required:
        raise ContractError(f"cutoff N_max={n_max} too small for A={index:.4g}: need at least {required}")

    positive = [float(bessel_j(n, index)) ** 2 for n in range(n_max + 1)]
    orders = [(-n, positive[n]) for n in range(n_max, 0, -1)] + [(n, positive[n]) for n in range(n_max + 1)]
    spectrum = SidebandSpectrum(orders=tuple(orders), cutoff=n_max, modulation_index=index)

    total = spectrum.total()
    if not 1.0 - NORMALIZATION_TOLERANCE <= total <= 1.0 + 1e-12:
        raise ContractError(f"sideband weights sum to {total:.12f}, outside [1 - 1e-6, 1]")
    return spectrum


def sideband_weights(inp: DiffractionInput, n_max: Optional[int] = None) -> SidebandSpectrum:
    """Semiclassical weights P(n) = |J_n(2 k z_M beta(Q))|^2"""
    return _spectrum_from_index(modulation_index(inp), n_max)


def hard_mirror_weights(k: float, z_m: float, n_max: Optional[int] = None) -> SidebandSpectrum:
    """Weights |J_n(2 k z_M)|^2 of an infinitely steep vibrating wall"""
    if not k > 0:
        raise DomainError(f"k must be positive (got {k!r})")
    if not z_m >= 0:
        raise DomainError(f"z_M must be non-negative (got {z_m!r})")
    return _spectrum_from_index(2.0 * k * z_m, n_max)


def diffraction_input(params: ExperimentParams, eps: Optional[float] = None) -> DiffractionInput:
    """Weight-formula inputs for an experiment, optionally at another modulation depth"""
    c = params.constants
    impact = impact_state(params.drop_height, c)
    depth = params.mod_depth if eps is None else eps
    return DiffractionInput(
        k=impact.wavenumber,
        z_m=mirror_amplitude(depth, params.mirror.kappa),
        kappa=params.mirror.kappa,
        omega=params.omega,
        atom_mass=c.atom_mass,
        hbar=c.hbar,
    )


def experiment_weights(params: ExperimentParams, n_max: Optional[int] = None) -> SidebandSpectrum:
    spectrum = sideband_weights(diffraction_input(params), n_max)
    logger.info(
        f"📊 [{params.name}] A={spectrum.modulation_index:.4f} "
        f"P(0)={spectrum.weight(0):.4f} P(±1)={spectrum.weight(1):.4f} P(±2)={spectrum.weight(2):.4f}"
    )
    return spectrum


@dataclass(frozen=True)
class WeightSweep:
    """Weights of orders 0..max_order versus modulation depth, one row per depth"""

    depths: Tuple[float, ...]
    max_order: int
    rows: Tuple[Tuple[float, ...], ...] = field(repr=False)

    def column(self, n: int) -> np.ndarray:
        return np.array([row[n] for row in self.rows])


def weight_sweep(params: ExperimentParams, eps_grid: Iterable[float], max_order: int = 6) -> WeightSweep:
    """Weights P(0..max_order) for each modulation depth in eps_grid"""
    depths = tuple(float(e) for e in eps_grid)
    bad = [e for e in depths if not 0.0 <= e <= SWEEP_MAX_DEPTH]
    if bad:
        raise DomainError(f"sweep depths must lie in [0, {SWEEP_MAX_DEPTH}]: {bad[:3]}")

    rows = []
    for eps in depths:
        spectrum = sideband_weights(diffraction_input(params, eps))
        rows.append(tuple(spectrum.weight(n) for n in range(max_order + 1)))
    logger.info(f"📈 [{params.name}] sweep over {len(depths)} depths, orders 0..{max_order}")
    return WeightSweep(depths=depths, max_order=max_order, rows=tuple(rows))


def carrier_suppression_depth(params: ExperimentParams) -> float:
    """Modulation depth at which A reaches the first zero of J0 and the carrier vanishes"""
    per_unit_depth = modulation_index(diffraction_input(params, 1e-3)) / 1e-3
    eps = J0_FIRST_ZERO / per_unit_depth
    if not eps < 1.0:
        raise DomainError(f"carrier suppression needs eps={eps:.3g}, outside the weak-modulation regime")
    return eps


def default_sweep_grid(
    points: int = 201, upper: float = SWEEP_MAX_DEPTH, anchors: Iterable[float] = ()
) -> Sequence[float]:
    """Evenly spaced depths in [0, upper] plus the anchor depths that fall inside"""
    extra = [a for a in anchors if 0.0 <= a <= upper]
    return [float(e) for e in np.union1d(np.linspace(0.0, upper, points), extra)]


def sweep_anchors(params: ExperimentParams, candidates: Iterable[ExperimentParams]) -> Dict[float, str]:
    """Depth -> name of every candidate whose spectrum is a row of the sweep over params"""
    anchors: Dict[float, str] = {}
    for other in candidates:
        if diffraction_input(params, other.mod_depth) == diffraction_input(other):
            shared = anchors.get(other.mod_depth)
            anchors[other.mod_depth] = other.name if shared is None else f"{shared}+{other.name}"
    return anchors
