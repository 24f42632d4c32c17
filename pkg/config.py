"""
Configuration management for the time-diffraction toolkit
Compiled-in defaults and the three bounce presets, environment variables, an INI file
and command-line overrides, in that order of precedence
"""

import configparser
import logging
import os
from dataclasses import fields
from typing import Any, Dict, Mapping, Optional, Tuple

from core import (
    D2_WAVELENGTH,
    RB87_MASS,
    STANDARD_GRAVITY,
    ConstantsTable,
    ExperimentParams,
    MirrorModel,
    ModulationSettings,
    angular,
    free_fall_time,
    modulation_depth,
)
from errors import ConfigError, TimeDiffractionError
from imaging import ImagingSettings
from kinematics import impact_state
from oracle import OracleConfig
from Utils.filters import (
    boolean,
    choice,
    fraction,
    integer,
    non_negative_float,
    optional,
    positive_float,
    real,
)

logger = logging.getLogger(__name__)

PRESET_NAMES = ("a", "b", "c")

# section -> key -> (filter, unit, description)
SCHEMA: Dict[str, Dict[str, Tuple[Any, str, str]]] = {
    "constants": {
        "atom_mass": (positive_float(), "kg", "atomic mass"),
        "hbar": (positive_float(), "J s", "reduced Planck constant"),
        "g": (positive_float(), "m/s^2", "gravitational acceleration"),
        "d2_wavelength": (positive_float(), "m", "D2 line wavelength for the recoil velocity"),
    },
    "experiment": {
        "preset": (choice(*PRESET_NAMES), "", "bounce experiment row to start from"),
        "drop_height_mm": (positive_float(), "mm", "fall height z0 above the mirror"),
        "fall_time_ms": (optional(positive_float()), "ms", "time of flight before the bounce"),
        "bounce_time_ms": (positive_float(), "ms", "time of flight from bounce to image"),
        "horizontal_velocity_mm_s": (real(), "mm/s", "horizontal drift of the cloud"),
        "mod_frequency_khz": (non_negative_float(), "kHz", "modulation frequency Omega/2pi"),
        "base_detuning_ghz": (real(), "GHz", "laser detuning delta0/2pi"),
        "detuning_swing_mhz": (real(), "MHz", "detuning modulation amplitude"),
        "base_power_mw": (positive_float(), "mW", "mean laser power P0"),
        "power_swing_mw": (real(), "mW", "power modulation amplitude"),
        "mod_depth": (optional(fraction()), "", "modulation depth eps, replaces the value composed from the swings"),
        "kappa_inv_nm": (positive_float(), "nm", "evanescent decay length 1/kappa"),
        "barrier_ratio": (positive_float(), "", "barrier height U0/E"),
        "table_depth_percent": (optional(non_negative_float()), "%", "tabulated modulation depth, echo only"),
    },
    "oracle": {
        "dimensionless": (boolean(), "", "use k_over_kappa and q directly instead of the experiment"),
        "k_over_kappa": (positive_float(), "", "incident wavenumber over kappa"),
        "q": (positive_float(), "", "sideband spacing over kappa"),
        "mod_depth": (fraction(), "", "modulation depth eps"),
        "barrier_ratio": (positive_float(), "", "barrier height U0/E"),
        "sigma_z": (optional(positive_float()), "1/kappa", "packet width, auto = 6/Q"),
        "time_step": (optional(positive_float()), "M/(hbar kappa^2)", "time step, auto from phase contract"),
        "total_steps": (optional(integer(1)), "", "step count, auto"),
        "points_per_wavelength": (positive_float(), "", "grid points per shortest populated wavelength"),
        "cap_ratio": (positive_float(), "", "barrier cap over E"),
        "absorber_width": (non_negative_float(), "1/kappa", "cosine absorber width, 0 disables"),
        "absorber_strength": (non_negative_float(), "", "absorber rate"),
        "check_convergence": (boolean(), "", "repeat at dz/2, dt/2"),
        "n_max": (optional(integer(1)), "", "model cutoff, auto = ceil(A) + 15"),
        "z_offset": (non_negative_float(), "1/kappa", "extra start distance from the mirror"),
    },
    "imaging": {
        "atoms": (integer(1), "", "number of sampled atoms"),
        "sigma_v_rec": (non_negative_float(), "v_rec", "elastic-scattering velocity spread"),
        "pixel_pitch_um": (positive_float(), "um", "camera pixel pitch"),
        "field_width_mm": (positive_float(), "mm", "camera field width"),
        "field_height_mm": (positive_float(), "mm", "camera field height"),
        "seed": (integer(0), "", "master random seed"),
        "partitions": (integer(1), "", "sampling partitions (fixes the random streams)"),
        "workers": (integer(1), "", "worker threads"),
        "shot_noise": (boolean(), "", "Poisson noise on pixels"),
        "pgm_format": (choice("P2", "P5"), "", "PGM flavour"),
        "min_weight": (fraction(), "", "smallest weight of an extracted order"),
        "refine_centers": (boolean(), "", "refine ring centres on the image"),
        "unfold": (boolean(), "", "unfold the elastic-scattering ring response"),
    },
}

_EXPERIMENT_COMMON = {
    "horizontal_velocity_mm_s": 30.0,
    "mod_frequency_khz": 500.0,
    "base_power_mw": 50.0,
    "power_swing_mw": 0.0,
    "mod_depth": None,
    "kappa_inv_nm": 93.0,
    "barrier_ratio": 4.0,
}

PRESETS: Dict[str, Dict[str, Any]] = {
    "a": {
        **_EXPERIMENT_COMMON,
        "drop_height_mm": 3.6,
        "fall_time_ms": 27.0,
        "bounce_time_ms": 27.0,
        "base_detuning_ghz": 2.1,
        "detuning_swing_mhz": 130.0,
        "table_depth_percent": 6.2,
    },
    "b": {
        **_EXPERIMENT_COMMON,
        "drop_height_mm": 3.6,
        "fall_time_ms": 27.0,
        "bounce_time_ms": 27.0,
        "base_detuning_ghz": 2.1,
        "detuning_swing_mhz": 163.0,
        "table_depth_percent": 7.8,
    },
    "c": {
        **_EXPERIMENT_COMMON,
        "drop_height_mm": 2.05,
        "fall_time_ms": 20.5,
        "bounce_time_ms": 19.5,
        "base_detuning_ghz": 1.9,
        "detuning_swing_mhz": 163.0,
        "table_depth_percent": 8.6,
    },
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "constants": {
        "atom_mass": RB87_MASS,
        "hbar": ConstantsTable().hbar,
        "g": STANDARD_GRAVITY,
        "d2_wavelength": D2_WAVELENGTH,
    },
    "oracle": {f.name: f.default for f in fields(OracleConfig)},
    "imaging": {
        "atoms": 100_000,
        "sigma_v_rec": 6.6,
        "pixel_pitch_um": 10.0,
        "field_width_mm": 5.5,
        "field_height_mm": 4.4,
        "seed": 1234,
        "partitions": 8,
        "workers": 1,
        "shot_noise": False,
        "pgm_format": "P5",
        "min_weight": 1e-4,
        "refine_centers": False,
        "unfold": True,
    },
}


class Config:
    """Resolved run configuration.

    overrides maps "section.key" to a raw or typed value (command-line flags).
    """

    def __init__(
        self,
        path: Optional[str] = None,
        preset: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ):
        self.CONFIG_PATH = path or os.getenv("TDIFF_CONFIG") or None
        self.OUT_DIR = os.getenv("TDIFF_OUT_DIR") or None
        env_seed = os.getenv("TDIFF_SEED")

        self.overrides: Dict[str, Any] = {key: raw for key, raw in (overrides or {}).items() if raw is not None}
        self._errors = []
        self.explicit: Dict[str, set] = {section: set() for section in SCHEMA}
        file_values = self._read_file(self.CONFIG_PATH) if self.CONFIG_PATH else {}

        chosen = preset or file_values.get("experiment", {}).get("preset") or "a"
        if chosen not in PRESETS:
            self._errors.append(f"experiment.preset must be one of {', '.join(PRESET_NAMES)} (got {chosen!r})")
            chosen = "a"
        self.PRESET = chosen

        self.values: Dict[str, Dict[str, Any]] = {
            "constants": dict(DEFAULTS["constants"]),
            "experiment": {"preset": chosen, **PRESETS[chosen]},
            "oracle": dict(DEFAULTS["oracle"]),
            "imaging": dict(DEFAULTS["imaging"]),
        }
        for section, keys in file_values.items():
            for key, raw in keys.items():
                if section == "experiment" and key == "preset":
                    continue
                self._set(section, key, raw)

        if env_seed is not None:
            self._set("imaging", "seed", env_seed)

        for dotted, raw in self.overrides.items():
            section, _, key = dotted.partition(".")
            self._set(section, key, raw)

        self._validate_config()

    def _read_file(self, path: str) -> Dict[str, Dict[str, str]]:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except configparser.Error as e:
            raise ConfigError(f"cannot parse config file {path}: {e}") from e

        values = {}
        for section in parser.sections():
            if section not in SCHEMA:
                self._errors.append(f"unknown section [{section}]")
                continue
            values[section] = dict(parser.items(section))
        logger.info(f"📄 Loaded config file {path}")
        return values

    def _set(self, section: str, key: str, raw: Any):
        if section not in SCHEMA:
            self._errors.append(f"unknown section [{section}]")
            return
        if key not in SCHEMA[section]:
            self._errors.append(f"unknown key {section}.{key}")
            return
        parse = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parse(raw)
        except (TypeError, ValueError) as e:
            self._errors.append(f"{section}.{key}: {e}")
            return
        self.explicit[section].add(key)

    def _validate_config(self):
        """Validate the merged configuration"""
        errors = list(self._errors)

        exp = self.values["experiment"]
        if exp["base_detuning_ghz"] == 0:
            errors.append("experiment.base_detuning_ghz must be non-zero")
        if exp["barrier_ratio"] <= 1:
            errors.append("experiment.barrier_ratio must exceed 1")

        img = self.values["imaging"]
        for key in ("field_width_mm", "field_height_mm"):
            pixels = img[key] * 1e3 / img["pixel_pitch_um"]
            if abs(pixels - round(pixels)) > 1e-6:
                errors.append(f"imaging.{key} is not a whole number of pixels")

        if errors:
            error_msg = "Configuration errors:\n" + "\n".join(f"- {error}" for error in errors)
            logger.error(error_msg)
            raise ConfigError(error_msg)

        logger.debug("✅ Configuration validated successfully")

    def for_preset(self, preset: str) -> "Config":
        """Same file and overrides on another preset row"""
        if preset == self.PRESET:
            return self
        return Config(self.CONFIG_PATH, preset=preset, overrides=self.overrides)

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.values[name])

    def constants(self) -> ConstantsTable:
        try:
            return ConstantsTable(**self.values["constants"])
        except TimeDiffractionError as e:
            raise ConfigError(f"[constants]: {e}") from e

    def modulation(self) -> ModulationSettings:
        exp = self.values["experiment"]
        return ModulationSettings(
            base_power=exp["base_power_mw"] * 1e-3,
            base_detuning_hz=exp["base_detuning_ghz"] * 1e9,
            detuning_swing_hz=exp["detuning_swing_mhz"] * 1e6,
            mod_frequency_hz=exp["mod_frequency_khz"] * 1e3,
            power_swing=exp["power_swing_mw"] * 1e-3,
        )

    def experiment(self) -> ExperimentParams:
        """Experiment parameters; an overridden drop height without a fall time implies free fall"""
        exp = self.values["experiment"]
        constants = self.constants()
        drop_height = exp["drop_height_mm"] * 1e-3

        fall_time = exp["fall_time_ms"]
        if fall_time is None or ("drop_height_mm" in self.explicit["experiment"]
                                 and "fall_time_ms" not in self.explicit["experiment"]):
            fall_seconds = free_fall_time(drop_height, constants)
        else:
            fall_seconds = fall_time * 1e-3

        modulation = self.modulation()
        depth = exp["mod_depth"] if exp["mod_depth"] is not None else modulation_depth(modulation)
        energy = impact_state(drop_height, constants).kinetic_energy
        mirror = MirrorModel(
            kappa=1.0 / (exp["kappa_inv_nm"] * 1e-9),
            barrier_height=exp["barrier_ratio"] * energy,
            omega=angular(modulation.mod_frequency_hz),
            mod_depth=depth,
        )
        table = exp["table_depth_percent"]
        return ExperimentParams(
            drop_height=drop_height,
            fall_time=fall_seconds,
            bounce_time=exp["bounce_time_ms"] * 1e-3,
            horizontal_velocity=exp["horizontal_velocity_mm_s"] * 1e-3,
            mirror=mirror,
            modulation=modulation,
            constants=constants,
            name=self.PRESET,
            table_depth=None if table is None else table / 100.0,
        )

    def oracle_config(self) -> OracleConfig:
        """Oracle settings; with dimensionless off, k/kappa, Q and eps come from the experiment"""
        values = self.section("oracle")
        if values["dimensionless"]:
            return OracleConfig(**values)

        explicit = {key: values[key] for key in self.explicit["oracle"] if key != "dimensionless"}
        explicit.setdefault("barrier_ratio", self.values["experiment"]["barrier_ratio"])
        for key in ("check_convergence", "points_per_wavelength", "cap_ratio"):
            explicit.setdefault(key, values[key])
        return OracleConfig.from_experiment(self.experiment(), **explicit)

    def imaging_settings(self) -> ImagingSettings:
        img = self.values["imaging"]
        return ImagingSettings(
            atoms=img["atoms"],
            sigma_v_rec=img["sigma_v_rec"],
            pixel_pitch=img["pixel_pitch_um"] * 1e-6,
            field_width=img["field_width_mm"] * 1e-3,
            field_height=img["field_height_mm"] * 1e-3,
            seed=img["seed"],
            partitions=img["partitions"],
            workers=img["workers"],
            shot_noise=img["shot_noise"],
            pgm_format=img["pgm_format"],
            min_weight=img["min_weight"],
            refine_centers=img["refine_centers"],
            unfold=img["unfold"],
        )


def schema_help() -> str:
    """Every config key with its type and unit, for --help"""
    lines = ["configuration keys (INI sections):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (parse, unit, text) in keys.items():
            unit_text = f" [{unit}]" if unit else ""
            lines.append(f"    {key} = <{parse.describe}>{unit_text}  {text}")
    return "\n".join(lines)
