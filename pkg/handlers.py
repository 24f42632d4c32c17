"""
Command handlers for the time-diffraction toolkit
Builds the argument parser, resolves configuration and maps failures to exit codes
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, TextIO

from config import Config, schema_help
from errors import ConfigError, TimeDiffractionError
from Plugins import commands, images, report, validation
from Plugins.commands import CommandContext
from storage import ArtifactStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2

# argparse dest -> (config key, transform)
OVERRIDE_FLAGS: Dict[str, tuple] = {
    "z0": ("experiment.drop_height_mm", None),
    "eps": ("experiment.mod_depth", None),
    "fmod": ("experiment.mod_frequency_khz", None),
    "kappa_inv": ("experiment.kappa_inv_nm", None),
    "seed": ("imaging.seed", None),
    "workers": ("imaging.workers", None),
    "atoms": ("imaging.atoms", None),
    "pgm_format": ("imaging.pgm_format", None),
    "shot_noise": ("imaging.shot_noise", None),
    "k_over_kappa": ("oracle.k_over_kappa", None),
    "q": ("oracle.q", None),
    "oracle_depth": ("oracle.mod_depth", None),
    "from_experiment": ("oracle.dimensionless", lambda flag: False if flag else None),
    "no_convergence": ("oracle.check_convergence", lambda flag: False if flag else None),
}


class UsageError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting"""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", EXIT_USAGE)

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise UsageError(message or "", status)


class TimeDiffractionHandlers:
    def __init__(self, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None):
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr
        self.handlers: Dict[str, Callable[[CommandContext], None]] = {}

        # Register all subcommands
        self.parser = self._register_handlers()

    def _common_options(self) -> argparse.ArgumentParser:
        common = _Parser(add_help=False)
        group = common.add_argument_group("common options")
        group.add_argument("--config", default=None, help="INI config file (or TDIFF_CONFIG)")
        group.add_argument("--preset", choices=("a", "b", "c"), default=None, help="bounce experiment")
        group.add_argument("--seed", type=int, default=None, help="master random seed")
        group.add_argument("--out", default=None, help="output directory (or TDIFF_OUT_DIR); stdout if unset")
        group.add_argument("--workers", type=int, default=None, help="worker threads")
        group.add_argument("--z0", type=float, default=None, help="drop height [mm]")
        group.add_argument("--eps", type=float, default=None, help="modulation depth")
        group.add_argument("--fmod", type=float, default=None, help="modulation frequency [kHz]")
        group.add_argument("--kappa-inv", dest="kappa_inv", type=float, default=None, help="decay length [nm]")
        return common

    def _register_handlers(self) -> argparse.ArgumentParser:
        """Register all subcommands"""
        parser = _Parser(
            prog="tdiff",
            description="Temporal diffraction of atoms bouncing on a vibrating evanescent mirror",
            epilog=schema_help(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        subparsers = parser.add_subparsers(dest="command", metavar="command")
        subparsers.required = True
        common = self._common_options()

        for plugin in (commands, validation, images, report):
            plugin.register(subparsers, common, self.handlers)

        logger.debug(f"✅ Registered commands: {', '.join(self.handlers)}")
        return parser

    def overrides(self, args: argparse.Namespace) -> Dict[str, object]:
        values = {}
        for dest, (key, transform) in OVERRIDE_FLAGS.items():
            raw = getattr(args, dest, None)
            if transform is not None:
                raw = transform(raw)
            if raw is not None:
                values[key] = raw
        return values

    def dispatch(self, argv: List[str]) -> int:
        """Run one command line and return its exit code"""
        try:
            args = self.parser.parse_args(argv)
        except UsageError as e:
            if e.status and str(e):
                self.stderr.write(f"{e}\n")
            return e.status

        try:
            config = Config(args.config, preset=args.preset, overrides=self.overrides(args))
            store = ArtifactStore(args.out or config.OUT_DIR, stdout=self.stdout)
            self.handlers[args.command](CommandContext(config=config, store=store, args=args))
        except ConfigError as e:
            self.stderr.write(f"tdiff: configuration error: {e}\n")
            return e.exit_code
        except TimeDiffractionError as e:
            logger.error(f"❌ {args.command} failed: {e}")
            self.stderr.write(f"tdiff {args.command}: {e}\n")
            return e.exit_code
        except OSError as e:
            logger.error(f"❌ {args.command} I/O failure: {e}")
            self.stderr.write(f"tdiff {args.command}: {e}\n")
            return 1

        logger.debug(f"✅ {args.command} finished")
        return EXIT_OK
