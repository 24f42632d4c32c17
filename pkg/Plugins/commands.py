"""
Closed-form subcommands: constants, weights, positions, sweep
Each command reads the resolved Config and writes CSV/JSON through the ArtifactStore
"""

import argparse
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from config import PRESET_NAMES, Config
from core import ExperimentParams, recoil_velocity
from diffraction import (
    beta,
    carrier_suppression_depth,
    default_sweep_grid,
    diffraction_input,
    experiment_weights,
    q_parameter,
    sweep_anchors,
    weight_sweep,
)
from errors import DomainError
from kinematics import (
    REFERENCE_EXPECTED_POSITIONS,
    detection_positions,
    impact_state,
    sideband_velocity,
    validity_checks,
)
from storage import ArtifactStore

logger = logging.getLogger(__name__)

VALIDITY_UNITS = {
    "de_broglie_nm": "nm",
    "two_pi_decay_length_nm": "nm",
    "impact_speed_m_s": "m/s",
    "recoil_velocity_mm_s": "mm/s",
    "first_sideband_splitting_v_rec": "v_rec",
    "energy_transfer_ratio": "",
    "mirror_velocity_ratio": "",
    "vib_amplitude_nm": "nm",
}

# experiment keys that move the detection-plane positions
POSITION_KEYS = {"drop_height_mm", "fall_time_ms", "bounce_time_ms", "mod_frequency_khz"}

@dataclass
class CommandContext:
    config: Config
    store: ArtifactStore
    args: argparse.Namespace

    def option(self, name: str, default=None):
        return getattr(self.args, name, default)


def _default_orders(preset: str) -> List[int]:
    return sorted(REFERENCE_EXPECTED_POSITIONS.get(preset, {-2: 0, -1: 0, 0: 0, 1: 0, 2: 0}))


def constants_command(ctx: CommandContext):
    """Compiled-in constants plus the validity numbers of the selected experiment"""
    constants = ctx.config.constants()
    params = ctx.config.experiment()
    rows = [
        ("atom_mass", constants.atom_mass, "kg"),
        ("hbar", constants.hbar, "J s"),
        ("g", constants.g, "m/s^2"),
        ("d2_wavelength", constants.d2_wavelength, "m"),
        ("recoil_velocity", recoil_velocity(constants), "m/s"),
        ("mod_depth", params.mod_depth, ""),
        ("kappa", params.mirror.kappa, "1/m"),
    ]
    rows += [(key, value, VALIDITY_UNITS[key]) for key, value in validity_checks(params).items()]
    ctx.store.write_csv("constants.csv", ("quantity", "value", "unit"), rows)


def weights_command(ctx: CommandContext):
    """Sideband spectrum of the selected experiment with velocities and detection offsets"""
    params = ctx.config.experiment()
    inp = diffraction_input(params)
    spectrum = experiment_weights(params, ctx.option("n_max"))
    impact = impact_state(params.drop_height, params.constants)
    q = q_parameter(inp)

    rows = []
    for n, w in spectrum.orders:
        try:
            v_n = sideband_velocity(impact, n, params.omega)
            position = (v_n - impact.speed) * params.bounce_time * 1e6
        except DomainError:
            v_n = position = None
        rows.append((n, w, v_n, position))

    if ctx.option("format") == "json":
        ctx.store.write_json(
            "weights.json",
            {
                "preset": ctx.config.PRESET,
                "q": q,
                "beta": beta(q),
                "modulation_index": spectrum.modulation_index,
                "cutoff": spectrum.cutoff,
                "total": spectrum.total(),
                "orders": [
                    {"n": n, "weight": w, "velocity_m_s": v, "position_um": p} for n, w, v, p in rows
                ],
            },
        )
    else:
        ctx.store.write_csv("weights.csv", ("n", "weight", "velocity_m_s", "position_um"), rows)
    logger.info(f"✅ Weights sum to {spectrum.total():.9f} over |n| <= {spectrum.cutoff} (Q={q:.4f}, β={beta(q):.4f})")


def positions_command(ctx: CommandContext):
    """Detection-plane offsets from the carrier, next to the tabulated expectations"""
    params = ctx.config.experiment()
    orders = ctx.option("orders") or _default_orders(ctx.config.PRESET)
    expected = REFERENCE_EXPECTED_POSITIONS.get(ctx.config.PRESET, {})
    geometry_changed = bool(POSITION_KEYS & ctx.config.explicit["experiment"])

    rows = []
    for row in detection_positions(params, orders):
        rows.append(
            (
                row.order,
                row.velocity,
                row.wavenumber,
                row.rel_position * 1e6,
                expected.get(row.order) if not geometry_changed else None,
            )
        )
    ctx.store.write_csv(
        "positions.csv",
        ("n", "velocity_m_s", "wavenumber_1_m", "position_um", "expected_um"),
        rows,
    )
    checks = validity_checks(params)
    logger.info(
        f"📐 λ_dB={checks['de_broglie_nm']:.2f} nm, Δv₁={checks['first_sideband_splitting_v_rec']:.3f} v_rec"
    )


def sweep_table(
    config: Config, params: ExperimentParams, points: int = 201, upper: float = 0.2, max_order: int = 6
) -> Tuple[Sequence[str], List[tuple]]:
    """Sweep rows (eps, P0.., preset); rows at a preset's own depth carry its name"""
    anchors = sweep_anchors(params, (config.for_preset(p).experiment() for p in PRESET_NAMES))
    sweep = weight_sweep(params, default_sweep_grid(points, upper, anchors), max_order)
    header = ("eps",) + tuple(f"P{n}" for n in range(max_order + 1)) + ("preset",)
    rows = [(eps,) + row + (anchors.get(eps, ""),) for eps, row in zip(sweep.depths, sweep.rows)]
    return header, rows


def sweep_command(ctx: CommandContext):
    """P(0..6) against modulation depth, plot-ready"""
    params = ctx.config.experiment()
    header, rows = sweep_table(
        ctx.config, params, ctx.option("points") or 201, ctx.option("eps_max") or 0.2, ctx.option("max_order") or 6
    )
    ctx.store.write_csv("sweep.csv", header, rows)

    try:
        eps_star = carrier_suppression_depth(params)
        logger.info(f"📉 Carrier vanishes at ε = {eps_star:.5f}")
    except DomainError as e:
        logger.warning(f"⚠️ {e}")


def register(subparsers, common: argparse.ArgumentParser, handlers: dict):
    """Attach the closed-form subcommands"""
    p = subparsers.add_parser("constants", parents=[common], help="print constants and validity numbers")
    handlers["constants"] = constants_command

    p = subparsers.add_parser("weights", parents=[common], help="sideband weights of one experiment")
    p.add_argument("--n-max", dest="n_max", type=int, default=None, help="Bessel cutoff (default ceil(A)+15)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    handlers["weights"] = weights_command

    p = subparsers.add_parser("positions", parents=[common], help="detection-plane offsets per order")
    p.add_argument("--orders", type=int, nargs="+", default=None, help="orders to list")
    handlers["positions"] = positions_command

    p = subparsers.add_parser("sweep", parents=[common], help="weights P(0..6) versus modulation depth")
    p.add_argument("--points", type=int, default=201, help="number of depths in [0, eps-max]")
    p.add_argument("--eps-max", dest="eps_max", type=float, default=0.2)
    p.add_argument("--max-order", dest="max_order", type=int, default=6)
    handlers["sweep"] = sweep_command
