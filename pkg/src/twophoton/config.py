"""INI run configuration with unit-suffixed keys.

Every key has a default; a config file only overrides what it names.
Unknown sections or keys are rejected so typos cannot silently fall back
to defaults. Lists are comma separated.
"""
import configparser
import copy
import math

from .errors import ConfigError
from .fringes import PhotonPairSpec
from .instrument import DriftModel, InstrumentConfig
from .units import nm

DEFAULTS = {
    "pair": {
        "signal_wavelength_nm": 810.504,
        "idler_wavelength_nm": 1547.484,
        "bandwidth_fwhm_nm": 0.495,
    },
    "instrument": {
        "pair_rate_hz": 59000.0,
        "visibility": 0.889,
        "coincidence_window_ps": 100.0,
        "singles_rates_hz": [0.0, 0.0, 0.0, 0.0],
        "channel_efficiencies": [1.0, 1.0, 1.0, 1.0],
        "drift_linear_deg_per_min": 1.0,
        "drift_walk_rad_per_sqrt_s": 1.9e-3,
    },
    "fringe": {
        "mode": "entangled",
        "x_min_nm": -3000.0,
        "x_max_nm": 3000.0,
        "points": 601,
        "epsilon": 1.0,
    },
    "measure": {
        "displacements_nm": [-65.0, -55.0, -45.0, -35.0, -25.0, -15.0, -5.0,
                             5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0],
        "trials": 100,
        "integration_times_s": [1.0],
        "drift": False,
        "reference_points": 81,
        "reference_periods": 2.0,
        "reference_time_s": 1.0,
        "setpoint_tolerance": 0.01,
    },
    "sweep": {
        "kind": "loss",
        "points": 12,
        "max_loss_db": 33.0,
        "c_li_fraction": 2e-4,
        "max_background": 0.99,
        "a0_over_c0": 1e-3,
        "background_form": "derived",
        "simulate": True,
        "scan_points": 41,
        "integration_time_s": 1.0,
    },
    "scan": {
        "mode": "sample",
        "probe": "quantum",
        "thickness_nm": 7.0,
        "n_film": 3.3,
        "n_film_uncertainty": 0.3,
        "n_substrate": 1.75,
        "probe_diameter_mm": 1.21,
        "edge_mm": 4.0,
        "y_min_mm": 0.0,
        "y_max_mm": 8.0,
        "points": 41,
        "rate_uncoated_hz": 128000.0,
        "rate_coated_hz": 68000.0,
        "visibility_uncoated": 0.885,
        "visibility_coated": 0.882,
        "trials": 100,
        "integration_time_s": 1.0,
        "calibration_thickness_nm": 50.0,
        "calibration_transmission": 0.016,
        "calibration_visibility_uncoated": 0.881,
        "calibration_visibility_coated": 0.71,
        "classical_period_nm": 1550.0,
        "classical_n_film": 3.07,
        "classical_visibility_uncoated": 0.96,
        "classical_visibility_coated": 0.166,
    },
    "oracle": {
        "specs": 50,
        "tau_points": 201,
        "tolerance": 1e-6,
    },
    "state": {
        "matrix_file": "",
        "werner_p": 0.9,
        "restarts": 32,
    },
}


def _parse_value(raw, default, where):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        if isinstance(default, list):
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc


def load_config(path=None, text=None):
    """Merge a config file (or text) over the defaults; returns a nested dict."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None and text is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for section in parser.sections():
        if section not in cfg:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in cfg[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            cfg[section][key] = _parse_value(raw, DEFAULTS[section][key], f"[{section}] {key}")
    validate(cfg)
    return cfg


def validate(cfg):
    """Build the typed objects once so bad values surface as config errors."""
    try:
        pair_from_config(cfg)
        instrument_from_config(cfg, drift=True)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["fringe"]["mode"] not in ("entangled", "mixed", "sum", "classical-beat", "hom"):
        raise ConfigError(f"unknown fringe mode {cfg['fringe']['mode']!r}")
    if cfg["sweep"]["kind"] not in ("loss", "background"):
        raise ConfigError(f"unknown sweep kind {cfg['sweep']['kind']!r}")
    if cfg["sweep"]["background_form"] not in ("derived", "printed"):
        raise ConfigError("background_form must be 'derived' or 'printed'")
    if cfg["scan"]["mode"] not in ("sample", "calibration"):
        raise ConfigError(f"unknown scan mode {cfg['scan']['mode']!r}")
    if cfg["scan"]["probe"] not in ("quantum", "classical"):
        raise ConfigError(f"unknown probe {cfg['scan']['probe']!r}")
    for section, key in (("fringe", "points"), ("measure", "trials"), ("sweep", "points"),
                         ("scan", "points"), ("scan", "trials"), ("oracle", "specs")):
        if cfg[section][key] < 1:
            raise ConfigError(f"[{section}] {key} must be positive")


def pair_from_config(cfg):
    p = cfg["pair"]
    return PhotonPairSpec.from_wavelengths(
        nm(p["signal_wavelength_nm"]), nm(p["idler_wavelength_nm"]),
        nm(p["bandwidth_fwhm_nm"]), nm(p["signal_wavelength_nm"]))


def drift_from_config(cfg):
    ins = cfg["instrument"]
    return DriftModel(math.radians(ins["drift_linear_deg_per_min"]) / 60.0,
                      ins["drift_walk_rad_per_sqrt_s"])


def instrument_from_config(cfg, drift=False):
    ins = cfg["instrument"]
    if len(ins["singles_rates_hz"]) != 4 or len(ins["channel_efficiencies"]) != 4:
        raise ConfigError("singles_rates_hz and channel_efficiencies need four values")
    return InstrumentConfig(
        pair_rate=ins["pair_rate_hz"],
        visibility=ins["visibility"],
        channel_efficiencies=tuple(ins["channel_efficiencies"]),
        coincidence_window=ins["coincidence_window_ps"] * 1e-12,
        singles_rates=tuple(ins["singles_rates_hz"]),
        drift=drift_from_config(cfg) if drift else DriftModel.none(),
        pair=pair_from_config(cfg),
    )


def dump_config(cfg):
    """Render a nested config dict back to INI text."""
    lines = []
    for section, values in cfg.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
