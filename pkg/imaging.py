"""
Synthetic time-of-flight absorption images and annular weight extraction
Monte-Carlo sampling on the elastic scattering sphere, ballistic flight to the camera,
integration along circles of growing radii around the scattering origin
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from core import ExperimentParams, recoil_velocity
from diffraction import SidebandSpectrum
from errors import ContractError, DomainError
from kinematics import impact_state, sideband_velocity
from Utils.helpers import derive_seeds, run_batches

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_V_REC = 6.6
MAX_REDRAW_FRACTION = 0.10
ELASTIC_TOLERANCE = 1e-12
WEIGHT_TOLERANCE = 1e-6

Point = Tuple[float, float]


@dataclass(frozen=True)
class ImagingSettings:
    """Knobs of one synthetic imaging run; lengths in m, sigma_v in recoil velocities"""

    atoms: int = 100_000
    sigma_v_rec: float = DEFAULT_SIGMA_V_REC
    pixel_pitch: float = 10e-6
    field_width: float = 5.5e-3
    field_height: float = 4.4e-3
    seed: int = 1234
    partitions: int = 8
    workers: int = 1
    shot_noise: bool = False
    pgm_format: str = "P5"
    min_weight: float = 1e-4
    refine_centers: bool = False
    unfold: bool = True

    def __post_init__(self):
        errors = []
        if self.atoms < 1:
            errors.append(f"atom count must be at least 1 (got {self.atoms})")
        if self.sigma_v_rec < 0:
            errors.append(f"sigma_v must be non-negative (got {self.sigma_v_rec})")
        if not self.pixel_pitch > 0:
            errors.append(f"pixel pitch must be positive (got {self.pixel_pitch})")
        if self.partitions < 1:
            errors.append(f"partitions must be at least 1 (got {self.partitions})")
        if self.pgm_format not in ("P2", "P5"):
            errors.append(f"pgm_format must be P2 or P5 (got {self.pgm_format!r})")
        if not 0.0 <= self.min_weight < 1.0:
            errors.append(f"min_weight must lie in [0, 1) (got {self.min_weight})")
        if errors:
            raise DomainError("Invalid imaging settings:\n" + "\n".join(f"- {e}" for e in errors))

    def sigma_v(self, params: ExperimentParams) -> float:
        return self.sigma_v_rec * recoil_velocity(params.constants)


@dataclass(frozen=True)
class AtomSample:
    """One atom leaving the mirror: order, velocity (vx, vy, vz) and bounce position"""

    order: int
    velocity: Tuple[float, float, float]
    position: Tuple[float, float, float]

    @property
    def speed(self) -> float:
        return math.sqrt(sum(v * v for v in self.velocity))


@dataclass(frozen=True, eq=False)
class AtomEnsemble:
    """Column-wise storage of sampled atoms, in partition order"""

    orders: np.ndarray = field(repr=False)
    velocities: np.ndarray = field(repr=False)
    bounce_point: Point
    seed: int
    partition_sizes: Tuple[int, ...]
    redraws: int = 0

    def __len__(self) -> int:
        return int(self.orders.size)

    def __getitem__(self, i: int) -> AtomSample:
        vx, vy, vz = (float(v) for v in self.velocities[i])
        return AtomSample(
            order=int(self.orders[i]),
            velocity=(vx, vy, vz),
            position=(self.bounce_point[0], 0.0, self.bounce_point[1]),
        )

    def __iter__(self) -> Iterator[AtomSample]:
        return (self[i] for i in range(len(self)))

    @property
    def redraw_fraction(self) -> float:
        return self.redraws / max(len(self), 1)

    def partitions(self) -> List[slice]:
        bounds = np.cumsum((0,) + self.partition_sizes)
        return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class CameraGeometry:
    """Camera field in the x-z plane, line of sight along y, z = 0 at the mirror surface"""

    width: float
    height: float
    pitch: float
    x_left: float
    z_bottom: float = 0.0

    def __post_init__(self):
        errors = []
        for name, extent in (("width", self.width), ("height", self.height)):
            count = extent / self.pitch
            if not extent > 0 or abs(count - round(count)) > 1e-6:
                errors.append(f"field {name} {extent!r} is not a whole number of {self.pitch!r} pixels")
        if errors:
            raise DomainError("Invalid camera geometry:\n" + "\n".join(f"- {e}" for e in errors))

    @classmethod
    def for_experiment(cls, params: ExperimentParams, settings: ImagingSettings) -> "CameraGeometry":
        """Field centred horizontally on the drifting carrier, bottom edge on the mirror"""
        x_center = params.horizontal_velocity * (params.fall_time + params.bounce_time)
        return cls(
            width=settings.field_width,
            height=settings.field_height,
            pitch=settings.pixel_pitch,
            x_left=x_center - 0.5 * settings.field_width,
        )

    @property
    def nx(self) -> int:
        return int(round(self.width / self.pitch))

    @property
    def nz(self) -> int:
        return int(round(self.height / self.pitch))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.nz, self.nx

    @property
    def x_edges(self) -> np.ndarray:
        return self.x_left + self.pitch * np.arange(self.nx + 1)

    @property
    def z_edges(self) -> np.ndarray:
        return self.z_bottom + self.pitch * np.arange(self.nz + 1)

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x, z) of every pixel centre in raster order, row 0 at the top"""
        xs = self.x_left + self.pitch * (np.arange(self.nx) + 0.5)
        zs = self.z_bottom + self.pitch * (np.arange(self.nz)[::-1] + 0.5)
        return np.meshgrid(xs, zs)

    def contains(self, point: Point) -> bool:
        x, z = point
        return (
            self.x_left <= x <= self.x_left + self.width
            and self.z_bottom <= z <= self.z_bottom + self.height
        )

    def as_dict(self) -> Dict[str, float]:
        return {
            "width": self.width,
            "height": self.height,
            "pitch": self.pitch,
            "x_left": self.x_left,
            "z_bottom": self.z_bottom,
            "nx": self.nx,
            "nz": self.nz,
        }


@dataclass(frozen=True, eq=False)
class SyntheticImage:
    """Atoms per pixel (column density up to a constant), rows top-down"""

    raster: np.ndarray = field(repr=False)
    camera: CameraGeometry
    atoms: int
    out_of_field: int
    seed: int
    origin: Point
    bounce_time: float
    sigma_v: float
    shot_noise: bool = False

    @property
    def total(self) -> float:
        return float(self.raster.sum())

    def sidecar(self) -> Dict[str, object]:
        return {
            "geometry": self.camera.as_dict(),
            "atoms": self.atoms,
            "out_of_field": self.out_of_field,
            "seed": self.seed,
            "origin": list(self.origin),
            "bounce_time": self.bounce_time,
            "sigma_v": self.sigma_v,
            "shot_noise": self.shot_noise,
        }


def scattering_origin(params: ExperimentParams) -> Point:
    """Common centre of all rings: the bounce point displaced by free fall over the bounce time"""
    x_b = params.horizontal_velocity * params.fall_time
    return x_b, -0.5 * params.constants.g * params.bounce_time**2


def ring_centers(params: ExperimentParams, orders: Sequence[int]) -> Dict[int, Point]:
    """Predicted cloud apex per order; its distance to the origin is the ring radius v_n t"""
    impact = impact_state(params.drop_height, params.constants)
    x_o, z_o = scattering_origin(params)
    t = params.bounce_time
    drift = params.horizontal_velocity
    centers = {}
    for n in orders:
        v_n = sideband_velocity(impact, n, params.omega)
        centers[n] = (x_o + drift * t, z_o + t * math.sqrt(max(v_n**2 - drift**2, 0.0)))
    return centers


def _allowed_orders(spectrum: SidebandSpectrum, params: ExperimentParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    impact = impact_state(params.drop_height, params.constants)
    orders, weights, speeds = [], [], []
    for n, w in spectrum.orders:
        if w <= 0.0:
            continue
        try:
            v_n = sideband_velocity(impact, n, params.omega)
        except DomainError:
            if w > 1e-12:
                raise
            continue
        orders.append(n)
        weights.append(w)
        speeds.append(v_n)
    weights = np.asarray(weights)
    return np.asarray(orders, dtype=np.int64), weights / weights.sum(), np.asarray(speeds)


def _split_count(count: int, partitions: int) -> Tuple[int, ...]:
    base, extra = divmod(count, partitions)
    return tuple(base + (1 if i < extra else 0) for i in range(partitions))


def sample_ensemble(
    spectrum: SidebandSpectrum,
    params: ExperimentParams,
    sigma_v: float,
    count: int,
    seed: int,
    *,
    partitions: int = 1,
    workers: int = 1,
) -> AtomEnsemble:
    """Draw orders by weight and transverse velocities on the elastic sphere of each order.

    vx carries the horizontal drift; vz is fixed by |v| = v_n. Partitions use child seeds of
    `seed`, so the result depends on the partition count but never on the worker count.
    """
    if count < 1:
        raise DomainError(f"atom count must be at least 1 (got {count})")
    if sigma_v < 0:
        raise DomainError(f"sigma_v must be non-negative (got {sigma_v!r})")
    total = spectrum.total()
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise ContractError(f"sampling needs normalised weights (sum = {total:.9f})")

    orders, probabilities, speeds = _allowed_orders(spectrum, params)
    drift = params.horizontal_velocity
    sizes = _split_count(count, partitions)
    seeds = derive_seeds(seed, partitions)

    def draw(job: Tuple[int, np.random.SeedSequence]):
        size, child = job
        rng = np.random.default_rng(child)
        idx = rng.choice(orders.size, size=size, p=probabilities)
        v_n = speeds[idx]
        vx = drift + sigma_v * rng.standard_normal(size)
        vy = sigma_v * rng.standard_normal(size)
        radicand = v_n**2 - vx**2 - vy**2

        redraws = 0
        bad = radicand <= 0
        while bad.any():
            redraws += int(bad.sum())
            if redraws > MAX_REDRAW_FRACTION * size:
                raise DomainError(
                    f"sigma_v = {sigma_v:.4g} m/s puts more than {MAX_REDRAW_FRACTION:.0%} of atoms "
                    f"off the elastic sphere"
                )
            nbad = int(bad.sum())
            vx[bad] = drift + sigma_v * rng.standard_normal(nbad)
            vy[bad] = sigma_v * rng.standard_normal(nbad)
            radicand[bad] = v_n[bad] ** 2 - vx[bad] ** 2 - vy[bad] ** 2
            bad = radicand <= 0

        velocities = np.column_stack((vx, vy, np.sqrt(radicand)))
        return orders[idx], velocities, redraws

    parts = run_batches(list(zip(sizes, seeds)), draw, workers=workers)
    redraws = sum(p[2] for p in parts)
    if redraws:
        logger.warning(f"⚠️ {redraws} velocity redraws ({redraws / count:.2%}) to stay on the elastic sphere")

    return AtomEnsemble(
        orders=np.concatenate([p[0] for p in parts]),
        velocities=np.concatenate([p[1] for p in parts]),
        bounce_point=(drift * params.fall_time, 0.0),
        seed=seed,
        partition_sizes=sizes,
        redraws=redraws,
    )


def synthesize_image(
    ensemble: AtomEnsemble,
    params: ExperimentParams,
    camera: CameraGeometry,
    *,
    sigma_v: float = 0.0,
    shot_noise: bool = False,
    workers: int = 1,
) -> SyntheticImage:
    """Fly every atom ballistically for the bounce time and bin the y-projection into pixels"""
    t = params.bounce_time
    if not t > 0:
        raise DomainError(f"bounce time must be positive (got {t!r})")
    g = params.constants.g
    x_b, z_b = ensemble.bounce_point
    x_edges, z_edges = camera.x_edges, camera.z_edges

    def accumulate(part: slice) -> np.ndarray:
        v = ensemble.velocities[part]
        x = x_b + v[:, 0] * t
        z = z_b + v[:, 2] * t - 0.5 * g * t * t
        counts, _, _ = np.histogram2d(z, x, bins=(z_edges, x_edges))
        return counts.astype(np.int64)

    partials = run_batches(ensemble.partitions(), accumulate, workers=workers)
    raster = np.flipud(np.sum(partials, axis=0))
    in_field = int(raster.sum())
    out_of_field = len(ensemble) - in_field
    if out_of_field:
        logger.info(f"📷 {out_of_field} of {len(ensemble)} atoms left the camera field")

    if shot_noise:
        rng = np.random.default_rng(derive_seeds(ensemble.seed, len(ensemble.partition_sizes) + 1)[-1])
        raster = rng.poisson(raster).astype(np.int64)

    return SyntheticImage(
        raster=raster,
        camera=camera,
        atoms=len(ensemble),
        out_of_field=out_of_field,
        seed=ensemble.seed,
        origin=scattering_origin(params),
        bounce_time=t,
        sigma_v=sigma_v,
        shot_noise=shot_noise,
    )


@dataclass(frozen=True, eq=False)
class AnnularProfiles:
    """Per-order radial profiles around the scattering origin.

    Each order owns the radial band between the midpoints to its neighbours' ring radii;
    the innermost band starts at 0 and the outermost is open, so the bands tile the field.
    """

    origin: Point
    bin_width: float
    radii: Dict[int, float]
    bands: Dict[int, Tuple[float, float]]
    offsets: Dict[int, np.ndarray] = field(repr=False)
    density: Dict[int, np.ndarray] = field(repr=False)
    totals: Dict[int, float]

    @property
    def orders(self) -> List[int]:
        return sorted(self.radii)

    @property
    def total(self) -> float:
        return math.fsum(self.totals.values())


def annular_profile(
    image: SyntheticImage,
    centers: Mapping[int, Point],
    origin: Optional[Point] = None,
    bin_width: Optional[float] = None,
) -> AnnularProfiles:
    """Integrate the image along circles of growing radii around the scattering origin"""
    origin = image.origin if origin is None else origin
    width = image.camera.pitch if bin_width is None else bin_width
    if not centers:
        raise DomainError("no order centres given")
    outside = [n for n, c in centers.items() if not image.camera.contains(c)]
    if outside:
        raise DomainError(f"order centres outside the camera field: {sorted(outside)}")

    orders = sorted(centers)
    radii = {n: math.hypot(centers[n][0] - origin[0], centers[n][1] - origin[1]) for n in orders}
    steps = [radii[b] - radii[a] for a, b in zip(orders[:-1], orders[1:])]
    if any(s <= 0 for s in steps):
        raise DomainError("degenerate order centres: ring radii must increase strictly with the order")

    bands = {}
    for i, n in enumerate(orders):
        lo = 0.5 * (radii[orders[i - 1]] + radii[n]) if i > 0 else 0.0
        hi = 0.5 * (radii[n] + radii[orders[i + 1]]) if i < len(orders) - 1 else math.inf
        bands[n] = (lo, hi)

    xs, zs = image.camera.pixel_centers()
    r = np.hypot(xs - origin[0], zs - origin[1]).ravel()
    values = image.raster.ravel().astype(float)

    offsets, density, totals = {}, {}, {}
    for n in orders:
        lo, hi = bands[n]
        inside = (r >= lo) & (r < hi)
        totals[n] = float(values[inside].sum())
        if not inside.any():
            offsets[n] = np.zeros(0)
            density[n] = np.zeros(0)
            continue
        rel = r[inside] - radii[n]
        first = math.floor(rel.min() / width)
        last = math.floor(rel.max() / width) + 1
        edges = width * np.arange(first, last + 1)
        hist, _ = np.histogram(rel, bins=edges, weights=values[inside])
        offsets[n] = 0.5 * (edges[:-1] + edges[1:])
        density[n] = hist

    return AnnularProfiles(
        origin=origin,
        bin_width=width,
        radii=radii,
        bands=bands,
        offsets=offsets,
        density=density,
        totals=totals,
    )


def refine_centers(image: SyntheticImage, centers: Mapping[int, Point], origin: Optional[Point] = None) -> Dict[int, Point]:
    """Move each centre along its ray from the origin onto the peak of the radial density.

    The search window is half the distance to the neighbouring rings.
    """
    origin = image.origin if origin is None else origin
    profiles = annular_profile(image, centers, origin)
    refined = {}
    for n in profiles.orders:
        lo, hi = profiles.bands[n]
        radius = profiles.radii[n]
        window = (profiles.offsets[n] >= lo - radius) & (profiles.offsets[n] < hi - radius)
        if not window.any() or profiles.density[n][window].sum() == 0:
            refined[n] = tuple(centers[n])
            continue
        peak = profiles.offsets[n][window][int(np.argmax(profiles.density[n][window]))]
        scale = (radius + peak) / radius
        cx, cz = centers[n]
        refined[n] = (origin[0] + (cx - origin[0]) * scale, origin[1] + (cz - origin[1]) * scale)
    return refined


def ring_response(profiles: AnnularProfiles, sigma_v: float, bounce_time: float) -> np.ndarray:
    """K[m, n]: probability that an atom of order n lands in the band of order m.

    With |v| = v_n, the y-projection puts the atom at r = t sqrt(v_n^2 - vy^2) from the origin,
    so only the Gaussian vy decides the band.
    """
    orders = profiles.orders
    size = len(orders)
    if sigma_v == 0:
        return np.eye(size)

    response = np.zeros((size, size))
    for j, n in enumerate(orders):
        v_n = profiles.radii[n] / bounce_time
        for i, m in enumerate(orders):
            lo, hi = profiles.bands[m]
            # r in [lo, hi)  <=>  |vy| in (v_n sqrt(1 - (hi/R)^2), v_n sqrt(1 - (lo/R)^2)]
            ratio_hi = min(hi / profiles.radii[n], 1.0)
            ratio_lo = min(lo / profiles.radii[n], 1.0)
            vy_lo = v_n * math.sqrt(1.0 - ratio_hi**2)
            vy_hi = v_n * math.sqrt(1.0 - ratio_lo**2)
            response[i, j] = 2.0 * (stats.norm.cdf(vy_hi / sigma_v) - stats.norm.cdf(vy_lo / sigma_v))
    return response


def extract_weights(profiles: AnnularProfiles, response: Optional[np.ndarray] = None) -> SidebandSpectrum:
    """Relative weights from the band totals, optionally unfolding the ring response"""
    orders = profiles.orders
    totals = np.array([profiles.totals[n] for n in orders])
    grand = totals.sum()
    if not grand > 0:
        raise ContractError("annular profiles hold no density")

    if response is None:
        weights = totals / grand
    else:
        if response.shape != (len(orders), len(orders)):
            raise ContractError(f"response shape {response.shape} does not match {len(orders)} orders")
        solution, _ = optimize.nnls(response, totals / grand)
        if not solution.sum() > 0:
            raise ContractError("response unfolding returned no weight")
        weights = solution / solution.sum()

    return SidebandSpectrum(
        orders=tuple((n, float(w)) for n, w in zip(orders, weights)),
        cutoff=max(abs(n) for n in orders),
        modulation_index=None,
        source="image",
    )


def ring_apex_heights(profiles: AnnularProfiles) -> Dict[int, float]:
    """Height of each ring's top: origin plus the radius of the radial density peak.

    The peak is refined by the centroid of the three bins around it.
    """
    heights = {}
    for n in profiles.orders:
        offsets, density = profiles.offsets[n], profiles.density[n]
        if density.size == 0 or density.sum() == 0:
            continue
        k = int(np.argmax(density))
        window = slice(max(k - 1, 0), k + 2)
        peak = float(np.sum(offsets[window] * density[window]) / density[window].sum())
        heights[n] = profiles.origin[1] + profiles.radii[n] + peak
    return heights


def order_centroids(image: SyntheticImage, profiles: AnnularProfiles) -> Dict[int, Point]:
    """Density-weighted (x, z) centroid of each order's radial band"""
    xs, zs = image.camera.pixel_centers()
    r = np.hypot(xs - profiles.origin[0], zs - profiles.origin[1])
    values = image.raster.astype(float)
    centroids = {}
    for n in profiles.orders:
        lo, hi = profiles.bands[n]
        inside = (r >= lo) & (r < hi)
        mass = values[inside].sum()
        if mass > 0:
            centroids[n] = (
                float(np.sum(xs[inside] * values[inside]) / mass),
                float(np.sum(zs[inside] * values[inside]) / mass),
            )
    return centroids


@dataclass(frozen=True)
class RoundTrip:
    """Input weights against the weights recovered from a synthetic image"""

    input: SidebandSpectrum
    recovered: SidebandSpectrum
    image: SyntheticImage = field(repr=False, compare=False)
    profiles: AnnularProfiles = field(repr=False, compare=False)

    @property
    def errors(self) -> Dict[int, float]:
        return {n: abs(w - self.input.weight(n)) for n, w in self.recovered.orders}

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def round_trip(spectrum: SidebandSpectrum, params: ExperimentParams, settings: ImagingSettings) -> RoundTrip:
    """Weights -> synthetic image -> annular extraction, as the experiment analyses its images"""
    sigma_v = settings.sigma_v(params)
    ensemble = sample_ensemble(
        spectrum,
        params,
        sigma_v,
        settings.atoms,
        settings.seed,
        partitions=settings.partitions,
        workers=settings.workers,
    )
    camera = CameraGeometry.for_experiment(params, settings)
    image = synthesize_image(
        ensemble, params, camera, sigma_v=sigma_v, shot_noise=settings.shot_noise, workers=settings.workers
    )
    profiles, recovered = analyse_image(image, params, spectrum.significant(settings.min_weight).order_numbers, settings)
    worst = max(abs(w - spectrum.weight(n)) for n, w in recovered.orders)
    logger.info(f"✅ [{params.name}] round trip over {len(ensemble)} atoms: worst weight error {worst:.4f}")
    return RoundTrip(input=spectrum, recovered=recovered, image=image, profiles=profiles)


def analyse_image(
    image: SyntheticImage,
    params: ExperimentParams,
    orders: Sequence[int],
    settings: ImagingSettings,
) -> Tuple[AnnularProfiles, SidebandSpectrum]:
    """Centres (optionally refined), annular profiles and extracted weights for one image"""
    centers = ring_centers(params, orders)
    dropped = [n for n, c in centers.items() if not image.camera.contains(c)]
    if dropped:
        logger.warning(f"⚠️ [{params.name}] orders {dropped} peak outside the camera field; folded into neighbours")
        centers = {n: c for n, c in centers.items() if n not in dropped}
    if settings.refine_centers:
        centers = refine_centers(image, centers)
    profiles = annular_profile(image, centers)
    response = ring_response(profiles, image.sigma_v, image.bounce_time) if settings.unfold else None
    return profiles, extract_weights(profiles, response)
