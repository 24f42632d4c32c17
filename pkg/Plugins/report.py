"""
Report subcommand
Markdown summary of all bounce experiments plus the CSV/JSON behind every table
"""

import logging
from typing import Any, Dict, List, Sequence

from config import PRESET_NAMES
from diffraction import (
    beta,
    carrier_suppression_depth,
    diffraction_input,
    experiment_weights,
    hard_mirror_weights,
    q_parameter,
)
from errors import DomainError
from imaging import round_trip
from kinematics import (
    REFERENCE_EXPECTED_POSITIONS,
    REFERENCE_MEASURED_POSITIONS,
    detection_positions,
    validity_checks,
)
from oracle import run_oracle
from Plugins.commands import CommandContext, sweep_table
from storage import ArtifactStore
from Utils.helpers import format_number

logger = logging.getLogger(__name__)

REPORT_ORDERS = range(-3, 4)


def _md_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> List[str]:
    def cell(value):
        if value is None:
            return ""
        return value if isinstance(value, str) else format_number(value)

    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(cell(v) for v in row) + " |" for row in rows]
    return lines


def experiment_section(ctx: CommandContext) -> Dict[str, Any]:
    """Per-preset parameters, weights, positions and validity numbers"""
    data = {}
    for preset in PRESET_NAMES:
        params = ctx.config.for_preset(preset).experiment()
        inp = diffraction_input(params)
        q = q_parameter(inp)
        spectrum = experiment_weights(params)
        hard = hard_mirror_weights(inp.k, inp.z_m)
        positions = {row.order: row.rel_position * 1e6 for row in detection_positions(
            params, sorted(REFERENCE_EXPECTED_POSITIONS[preset]))}
        data[preset] = {
            "drop_height_mm": params.drop_height * 1e3,
            "fall_time_ms": params.fall_time * 1e3,
            "bounce_time_ms": params.bounce_time * 1e3,
            "base_detuning_ghz": params.modulation.base_detuning_hz * 1e-9,
            "detuning_swing_mhz": params.modulation.detuning_swing_hz * 1e-6,
            "mod_depth": params.mod_depth,
            "table_depth": params.table_depth,
            "z_m_nm": inp.z_m * 1e9,
            "q": q,
            "beta": beta(q),
            "modulation_index": spectrum.modulation_index,
            "weights": {n: spectrum.weight(n) for n in REPORT_ORDERS},
            "hard_mirror_weights": {n: hard.weight(n) for n in REPORT_ORDERS},
            "positions_um": positions,
            "expected_um": REFERENCE_EXPECTED_POSITIONS[preset],
            "measured_um": REFERENCE_MEASURED_POSITIONS[preset],
            "validity": validity_checks(params),
        }
    return data


def render_markdown(experiments: Dict[str, Any], sweep_info: Dict[str, Any], oracle: Dict[str, Any],
                    images: Dict[str, Any]) -> str:
    lines = ["# Temporal diffraction report", "", "## Experiments", ""]
    lines += _md_table(
        ("preset", "z0 [mm]", "t_fall [ms]", "t_bounce [ms]", "δ0/2π [GHz]", "Δδ/2π [MHz]",
         "ε", "ε table", "z_M [nm]", "Q", "A"),
        [
            (p, e["drop_height_mm"], e["fall_time_ms"], e["bounce_time_ms"], e["base_detuning_ghz"],
             e["detuning_swing_mhz"], e["mod_depth"], e["table_depth"], e["z_m_nm"], e["q"],
             e["modulation_index"])
            for p, e in experiments.items()
        ],
    )

    lines += ["", "## Sideband weights", ""]
    header = ("preset", "mirror") + tuple(f"P({n})" for n in REPORT_ORDERS)
    rows = []
    for p, e in experiments.items():
        rows.append((p, "evanescent") + tuple(e["weights"][n] for n in REPORT_ORDERS))
        rows.append((p, "hard wall") + tuple(e["hard_mirror_weights"][n] for n in REPORT_ORDERS))
    lines += _md_table(header, rows)

    lines += ["", "## Detection-plane positions relative to the carrier [um]", ""]
    rows = []
    for p, e in experiments.items():
        for n, computed in sorted(e["positions_um"].items()):
            expected, measured = e["expected_um"].get(n), e["measured_um"].get(n)
            ratio = measured / expected if expected and measured is not None else None
            rows.append((p, n, computed, expected, measured, ratio))
    lines += _md_table(("preset", "n", "computed", "expected", "measured", "measured/expected"), rows)

    lines += ["", "## Validity", ""]
    keys = list(next(iter(experiments.values()))["validity"])
    lines += _md_table(("quantity",) + tuple(experiments), [
        (key,) + tuple(e["validity"][key] for e in experiments.values()) for key in keys
    ])

    lines += ["", "## Depth sweep", "", f"Preset {sweep_info['preset']}, written to `sweep.csv`."]
    anchors = sweep_info.get("anchors") or {}
    if anchors:
        orders = list(next(iter(anchors.values())))
        lines += ["", "Rows at the experiments' own depths:", ""]
        lines += _md_table(("preset",) + tuple(orders), [(p, *w.values()) for p, w in anchors.items()])
        lines.append("")
    if sweep_info.get("carrier_suppression_depth") is not None:
        lines.append(f"The carrier vanishes at ε = {format_number(sweep_info['carrier_suppression_depth'])}.")

    lines += ["", "## Oracle", ""]
    if oracle:
        lines += _md_table(
            ("n", "model", "oracle", "relative error"),
            [(r["n"], r["model"], r["oracle"], r["relative_error"]) for r in oracle["orders"]],
        )
        lines += [
            "",
            f"Agreement within tolerance: {format_number(oracle['agreement'])}; "
            f"converged: {format_number(oracle['converged']) if oracle['converged'] is not None else 'not checked'}.",
        ]
        if oracle["flags"]:
            lines.append(f"Flags: {', '.join(oracle['flags'])}.")
    else:
        lines.append("Skipped.")

    if images:
        lines += ["", "## Imaging round trip", ""]
        rows = [(p, n, w_in, w_out) for p, r in images.items() for n, w_in, w_out in r["orders"]]
        lines += _md_table(("preset", "n", "input", "recovered"), rows)
    return "\n".join(lines) + "\n"


def report_command(ctx: CommandContext):
    """Write report.md with its sweep, oracle and experiment data"""
    store = ArtifactStore(ctx.store.out_dir or "report")
    experiments = experiment_section(ctx)

    params = ctx.config.experiment()
    header, rows = sweep_table(ctx.config, params, ctx.option("points") or 201)
    store.write_csv("sweep.csv", header, rows)
    sweep_info: Dict[str, Any] = {
        "preset": ctx.config.PRESET,
        "points": len(rows),
        "anchors": {row[-1]: dict(zip(header[1:-1], row[1:-1])) for row in rows if row[-1]},
    }
    try:
        sweep_info["carrier_suppression_depth"] = carrier_suppression_depth(params)
    except DomainError as e:
        logger.warning(f"⚠️ {e}")

    oracle = {}
    if not ctx.option("no_oracle"):
        oracle = run_oracle(ctx.config.oracle_config(), workers=2).to_dict()
        store.write_json("oracle.json", oracle)

    images = {}
    if ctx.option("images"):
        for preset in PRESET_NAMES:
            config = ctx.config.for_preset(preset)
            spectrum = experiment_weights(config.experiment())
            trip = round_trip(spectrum, config.experiment(), config.imaging_settings())
            images[preset] = {
                "max_error": trip.max_error,
                "orders": [(n, trip.input.weight(n), w) for n, w in trip.recovered.orders],
            }

    store.write_json(
        "report.json",
        {"experiments": experiments, "sweep": sweep_info, "oracle": oracle, "images": images},
    )
    store.write_text("report.md", render_markdown(experiments, sweep_info, oracle, images))
    logger.info(f"📝 Report written to {store.out_dir}")


def register(subparsers, common, handlers: dict):
    p = subparsers.add_parser("report", parents=[common], help="markdown report with CSV/JSON data")
    p.add_argument("--points", type=int, default=201, help="sweep depths")
    p.add_argument("--no-oracle", dest="no_oracle", action="store_true", help="skip the oracle run")
    p.add_argument("--images", action="store_true", help="add the imaging round trip per preset")
    handlers["report"] = report_command
