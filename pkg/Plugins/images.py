"""
Imaging subcommands
image: synthetic absorption image of one experiment (PGM plus JSON sidecar)
extract: sideband weights read back from a PGM and its sidecar
"""

import logging
import os
from typing import Dict

from diffraction import experiment_weights
from errors import ContractError
from imaging import (
    CameraGeometry,
    SyntheticImage,
    annular_profile,
    extract_weights,
    order_centroids,
    refine_centers,
    ring_apex_heights,
    ring_centers,
    ring_response,
    sample_ensemble,
    synthesize_image,
)
from Plugins.commands import CommandContext
from storage import ArtifactStore

logger = logging.getLogger(__name__)


def _file_store(ctx: CommandContext) -> ArtifactStore:
    # binary artifacts never go to stdout
    return ArtifactStore(".") if ctx.store.to_stdout else ctx.store


def image_command(ctx: CommandContext):
    """Sample atoms from the model weights, fly them and write the camera image"""
    params = ctx.config.experiment()
    settings = ctx.config.imaging_settings()
    spectrum = experiment_weights(params)
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

    significant = spectrum.significant(settings.min_weight)
    centers = ring_centers(params, significant.order_numbers)
    in_field = {n: c for n, c in centers.items() if camera.contains(c)}
    if len(in_field) < len(centers):
        logger.warning(f"⚠️ orders {sorted(set(centers) - set(in_field))} peak outside the camera field")

    name = ctx.option("name") or "image"
    store = _file_store(ctx)
    store.write_pgm(f"{name}.pgm", image.raster, settings.pgm_format)
    store.write_json(
        f"{name}.json",
        {
            **image.sidecar(),
            "preset": ctx.config.PRESET,
            "mod_depth": params.mod_depth,
            "pgm_format": settings.pgm_format,
            "redraws": ensemble.redraws,
            "partitions": len(ensemble.partition_sizes),
            "weights": {str(n): w for n, w in significant.orders},
            "centers": {str(n): list(c) for n, c in sorted(in_field.items())},
        },
    )
    logger.info(f"📷 [{params.name}] {image.atoms} atoms imaged, {image.out_of_field} outside the field")


def load_image(pgm_path: str, sidecar_path: str = None):
    """Rebuild a SyntheticImage and its order centres from disk"""
    sidecar_path = sidecar_path or os.path.splitext(pgm_path)[0] + ".json"
    raster = ArtifactStore.read_pgm(pgm_path)
    meta = ArtifactStore.read_json(sidecar_path)

    try:
        geometry = meta["geometry"]
        camera = CameraGeometry(
            width=geometry["width"],
            height=geometry["height"],
            pitch=geometry["pitch"],
            x_left=geometry["x_left"],
            z_bottom=geometry.get("z_bottom", 0.0),
        )
        centers: Dict[int, tuple] = {int(n): tuple(c) for n, c in meta["centers"].items()}
        image = SyntheticImage(
            raster=raster,
            camera=camera,
            atoms=int(meta["atoms"]),
            out_of_field=int(meta.get("out_of_field", 0)),
            seed=int(meta.get("seed", 0)),
            origin=tuple(meta["origin"]),
            bounce_time=float(meta["bounce_time"]),
            sigma_v=float(meta.get("sigma_v") or 0.0),
            shot_noise=bool(meta.get("shot_noise", False)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ContractError(f"sidecar {sidecar_path} is incomplete: {e}") from e

    if raster.shape != camera.shape:
        raise ContractError(f"PGM is {raster.shape[1]}x{raster.shape[0]} but the sidecar says {camera.nx}x{camera.nz}")
    return image, centers, meta


def extract_command(ctx: CommandContext):
    """Annular weights of a stored image, next to the weights it was drawn from"""
    image, centers, meta = load_image(ctx.args.image, ctx.option("sidecar"))
    settings = ctx.config.imaging_settings()

    if ctx.option("refine") or settings.refine_centers:
        centers = refine_centers(image, centers)
    profiles = annular_profile(image, centers)
    unfold = settings.unfold and not ctx.option("no_unfold")
    response = ring_response(profiles, image.sigma_v, image.bounce_time) if unfold else None
    recovered = extract_weights(profiles, response)
    apex = ring_apex_heights(profiles)
    centroids = order_centroids(image, profiles)
    truth = meta.get("weights", {})

    rows = []
    for n, w in recovered.orders:
        cx, cz = centroids.get(n, (None, None))
        rows.append((
            n,
            w,
            truth.get(str(n)),
            profiles.radii[n] * 1e6,
            apex[n] * 1e6 if n in apex else None,
            None if cx is None else cx * 1e6,
            None if cz is None else cz * 1e6,
        ))
    header = ("n", "weight", "input_weight", "radius_um", "apex_z_um", "centroid_x_um", "centroid_z_um")
    ctx.store.write_csv("extracted.csv", header, rows)
    logger.info(
        f"🔎 Extracted {len(rows)} orders from {ctx.args.image}"
        + (" with response unfolding" if unfold else "")
    )


def register(subparsers, common, handlers: dict):
    p = subparsers.add_parser("image", parents=[common], help="synthetic absorption image")
    p.add_argument("--atoms", type=int, default=None, help="atom count")
    p.add_argument("--name", default="image", help="artifact stem (default image)")
    p.add_argument("--pgm-format", dest="pgm_format", choices=("P2", "P5"), default=None)
    p.add_argument("--shot-noise", dest="shot_noise", action="store_true", default=None)
    handlers["image"] = image_command

    p = subparsers.add_parser("extract", parents=[common], help="weights from a stored image")
    p.add_argument("image", help="PGM file written by the image command")
    p.add_argument("--sidecar", default=None, help="JSON sidecar (default: next to the PGM)")
    p.add_argument("--refine", action="store_true", help="move centres onto the radial density peaks")
    p.add_argument("--no-unfold", dest="no_unfold", action="store_true", help="raw band totals")
    handlers["extract"] = extract_command
