"""
Oracle subcommand
Runs the split-operator validation and writes the comparison report
"""

import logging

from errors import ContractError
from oracle import refinement_ratio, run_oracle
from Plugins.commands import CommandContext

logger = logging.getLogger(__name__)


def oracle_command(ctx: CommandContext):
    """Numerical check of the closed-form weights; flags never change the exit code"""
    if ctx.option("spectrum") and ctx.store.to_stdout:
        raise ContractError("--spectrum needs an output directory (--out)")
    config = ctx.config.oracle_config()
    workers = ctx.config.section("imaging")["workers"]
    report = run_oracle(config, workers=max(workers, 2) if config.check_convergence else 1)

    data = report.to_dict()
    if ctx.option("ladder"):
        ladder = refinement_ratio(config, workers=workers)
        data["refinement"] = {
            "n_points": list(ladder.n_points),
            "phase_differences": list(ladder.differences),
            "ratio": ladder.ratio,
        }
    ctx.store.write_json("oracle.json", data)

    if ctx.option("spectrum"):
        if report.spectrum is None:
            logger.warning("⚠️ no momentum spectrum kept for this run")
            return
        spectrum = report.spectrum
        reflected = spectrum.wavenumbers > 0
        ctx.store.write_csv(
            "oracle_spectrum.csv",
            ("k", "density"),
            zip(spectrum.wavenumbers[reflected], spectrum.density[reflected]),
        )

    if report.flags:
        logger.warning(f"⚠️ Oracle flags: {', '.join(report.flags)}")


def register(subparsers, common, handlers: dict):
    p = subparsers.add_parser("oracle", parents=[common], help="split-operator check of the weights")
    p.add_argument("--k-over-kappa", dest="k_over_kappa", type=float, default=None)
    p.add_argument("--q", type=float, default=None, help="sideband spacing over kappa")
    p.add_argument("--mod-depth", dest="oracle_depth", type=float, default=None, help="oracle modulation depth")
    p.add_argument("--from-experiment", dest="from_experiment", action="store_true",
                   help="rescale the selected experiment instead of the dimensionless dials")
    p.add_argument("--no-convergence", dest="no_convergence", action="store_true",
                   help="skip the dz/2, dt/2 repeat")
    p.add_argument("--ladder", action="store_true", help="also run the static-mirror refinement ladder")
    p.add_argument("--spectrum", action="store_true", help="write the reflected momentum density")
    handlers["oracle"] = oracle_command
