"""INI run configuration with SI-suffixed quantities, and the manifests written beside outputs.

Dimensioned values need a unit suffix (``20 ns``, ``10 uW``, ``-30 dBm``,
``1 uH``); a bare number is rejected for them.  Dimensionless fields take
plain numbers.  Manifests are written in the same format with every field
resolved, so a manifest is itself a runnable config.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .circuit import CircuitParams
from .device import DeviceClass, DeviceParams
from .errors import ConfigError, ModelDomainError
from .presets import preset
from .stimulus import AttackParams

# decimal exponents; negative ones divide so that '100 uW' gives exactly 1e-4
_PREFIX = {"f": -15, "p": -12, "n": -9, "u": -6, "µ": -6, "m": -3, "": 0, "k": 3, "M": 6, "G": 9}
_BASE = {"s": "s", "A": "A", "H": "H", "ohm": "ohm", "Ω": "ohm", "W": "W", "J": "J", "Hz": "Hz", "V": "V"}
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµΩ]*)\s*$")

# unit of each config field; "1" dimensionless, "dB" decibels, "int", "str"
DEVICE_UNITS = {
    "i_c": "A", "l_k": "H", "r_max": "ohm", "r_spot": "ohm", "eta": "1", "eta_abs": "1", "e_sat": "J",
    "e_on": "J", "e_off": "J", "tau_th": "s", "i_retrap": "A", "beta_sens": "1", "device_class": "str",
    "r_spot_spread": "1", "avalanche_prob": "1", "avalanche_delay": "s", "tau_sub": "s", "ap_rate": "1",
    "dark_rate": "Hz",
}
CIRCUIT_UNITS = {
    "r_bias": "ohm", "v_bias": "V", "r_shunt": "ohm", "line_delay": "s", "gain_db": "dB", "f_hp": "Hz",
    "hp_order": "int", "f_lp": "Hz", "noise_rms": "V", "sample_dt": "s",
}
ATTACK_UNITS = {"p_blind": "W", "drop_db": "dB", "surge_db": "dB", "tau_off": "s", "tau_rearm": "s"}
RUN_UNITS = {"preset": "str", "seed": "int", "dt": "s", "command": "str"}

# experiment blocks; list-valued fields end in "s" and are comma separated
EXPERIMENT_UNITS = {
    "simulate": {"mode": "str", "t_photon": "s", "span": "s"},
    "scenario": {"clicks_det0": "s*", "clicks_det1": "s*", "blind_start": "s", "blind_end": "s",
                 "trials": "int"},
    "optimizer": {"p_blind_bounds": "W*", "tau_off_bounds": "s*", "tau_rearm_bounds": "s*",
                  "budget": "int", "trials": "int", "n_clicks": "int", "grid_points": "int"},
    "jitter": {"n_photons": "int", "spacing": "s", "n_fakes": "int", "trials": "int", "bin": "s"},
    "afterpulse": {"blind_durations": "s*", "rep_period": "s", "trials": "int"},
    "countermeasure": {"duty_grid": "1*", "n_pulses": "int", "alarm": "V", "quiescent": "V",
                       "resolution": "V", "evasion_duty": "1", "photon_rate": "Hz"},
}

SECTIONS = {"run": RUN_UNITS, "device": DEVICE_UNITS, "circuit": CIRCUIT_UNITS, "attack": ATTACK_UNITS,
            **EXPERIMENT_UNITS}

DEFAULTS = {
    "simulate": {"mode": "photon", "t_photon": 20e-9, "span": 200e-9},
    "scenario": {"clicks_det0": [0.0, 30e-9], "clicks_det1": [], "blind_start": -200e-9,
                 "blind_end": 100e-9, "trials": 0},
    "optimizer": {"p_blind_bounds": [0.1e-6, 100e-6], "tau_off_bounds": [1e-9, 50e-9],
                  "tau_rearm_bounds": [1e-9, 50e-9], "budget": 60, "trials": 100, "n_clicks": 100,
                  "grid_points": 3},
    "jitter": {"n_photons": 3000, "spacing": 100e-9, "n_fakes": 100, "trials": 30, "bin": 10e-12},
    "afterpulse": {"blind_durations": [1e-6, 2e-6, 5e-6, 10e-6], "rep_period": 100e-6, "trials": 1000},
    "countermeasure": {"duty_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], "n_pulses": 500, "alarm": 0.35e-3,
                       "quiescent": 0.2e-3, "resolution": 0.0, "evasion_duty": 0.05, "photon_rate": 1e9},
}


def parse_quantity(text: str, unit: str) -> float:
    """``'20 ns'`` -> 2e-08 for unit ``'s'``; ``'-30 dBm'`` -> 1e-06 for ``'W'``."""
    m = _QTY.match(str(text))
    if not m:
        raise ConfigError(f"cannot parse {text!r} as a number with unit")
    value, suffix = float(m.group(1)), m.group(2)
    if unit == "1":
        if suffix:
            raise ConfigError(f"{text!r}: dimensionless value takes no unit")
        return value
    if unit == "dB":
        if suffix != "dB":
            raise ConfigError(f"{text!r}: expected a value in dB")
        return value
    if unit == "W" and suffix == "dBm":
        return 1e-3 * 10 ** (value / 10)
    if not suffix:
        raise ConfigError(f"{text!r}: unit suffix required (expected {unit}, e.g. 'n{unit}')")
    for base, canon in sorted(_BASE.items(), key=lambda kv: -len(kv[0])):
        if suffix.endswith(base) and canon == unit:
            pre = suffix[: -len(base)]
            if pre in _PREFIX:
                x = _PREFIX[pre]
                return value * 10.0 ** x if x >= 0 else value / 10.0 ** -x
    raise ConfigError(f"{text!r}: unit {suffix!r} is not a multiple of {unit}")


def format_quantity(value: float, unit: str) -> str:
    """Inverse of :func:`parse_quantity` in base units (round-trips exactly)."""
    if unit == "1":
        return repr(float(value))
    if unit == "int":
        return str(int(value))
    if unit == "str":
        return str(value)
    if unit == "dB":
        return f"{float(value)!r} dB"
    return f"{float(value)!r} {unit}"


def _parse_field(section: str, key: str, raw: str, unit: str):
    if unit == "str":
        return raw.strip()
    if unit == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"expected an integer, got {raw!r}") from None
    if unit.endswith("*"):
        parts = [p for p in raw.split(",") if p.strip()]
        return [parse_quantity(p, unit[:-1]) for p in parts]
    if section == "circuit" and key == "r_shunt" and raw.strip().lower() == "absent":
        return None
    if section == "circuit" and key == "f_hp" and raw.strip().lower() == "dc":
        return "dc"
    return parse_quantity(raw, unit)


def _format_field(value, unit: str) -> str:
    if value is None:
        return "absent"
    if isinstance(value, str):
        return value
    if isinstance(value, DeviceClass):
        return value.value
    if unit.endswith("*"):
        return ", ".join(format_quantity(v, unit[:-1]) for v in value)
    return format_quantity(value, unit)


@dataclass
class RunConfig:
    preset: str | None = "device1"
    device: DeviceParams = field(default_factory=DeviceParams)
    circuit: CircuitParams = field(default_factory=CircuitParams)
    attack: AttackParams = field(default_factory=AttackParams)
    seed: int = 0
    dt: float = 10e-12
    command: str = ""
    blocks: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULTS.items()})

    def block(self, name: str) -> dict:
        return self.blocks[name]

    def to_ini(self) -> str:
        """Fully resolved config; parsing it back gives an equal RunConfig."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["run"] = {"command": self.command, "preset": self.preset or "", "seed": str(self.seed),
                     "dt": format_quantity(self.dt, "s"), "version": __version__}
        cp["device"] = {k: (v if k == "device_class" else _format_field(v, DEVICE_UNITS[k]))
                        for k, v in self.device.to_dict().items()}
        cp["circuit"] = {k: _format_field(v if not (k == "r_shunt" and v == "absent") else None, CIRCUIT_UNITS[k])
                         for k, v in self.circuit.to_dict().items()}
        cp["attack"] = {k: _format_field(v, ATTACK_UNITS[k]) for k, v in self.attack.to_dict().items()}
        for name, vals in self.blocks.items():
            cp[name] = {k: _format_field(v, EXPERIMENT_UNITS[name][k]) for k, v in vals.items()}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)


def _line_of(text: str, section: str, key: str) -> int | None:
    cur = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and re.match(rf"^{re.escape(key)}\s*[=:]", s):
            return n
    return None


def load_config(path=None, text: str | None = None, command: str = "") -> RunConfig:
    """Parse an INI config (file ``path`` or string ``text``).

    The ``[device]``/``[circuit]``/``[attack]`` sections override the
    ``[run] preset`` values field by field; ``preset =`` (empty) starts from
    the bare defaults.  Errors name the file, line, section and field.
    """
    src = str(path) if path is not None else "<config>"
    if text is None:
        text = Path(path).read_text() if path is not None else ""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=src)
    except configparser.Error as exc:
        raise ConfigError(f"{src}: {exc}") from None

    def where(sec, key):
        n = _line_of(text, sec, key)
        return f"{src}:{n}" if n else src

    values: dict = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{src}: unknown section [{sec}]")
        units = SECTIONS[sec]
        for key, raw in cp[sec].items():
            if sec == "run" and key == "version":
                continue
            if key not in units:
                raise ConfigError(f"{where(sec, key)}: [{sec}] unknown field {key!r}")
            try:
                values.setdefault(sec, {})[key] = _parse_field(sec, key, raw, units[key])
            except ConfigError as exc:
                raise ConfigError(f"{where(sec, key)}: [{sec}] {key}: {exc}") from None

    run = values.get("run", {})
    name = run.get("preset", "device1") or None
    try:
        if name is None:
            dev, cir, att = DeviceParams(), CircuitParams(), AttackParams()
        else:
            p = preset(name)
            dev, cir, att = p.device, p.circuit, p.attack
    except ConfigError as exc:
        raise ConfigError(f"{where('run', 'preset')}: [run] preset: {exc}") from None

    def apply(obj, sec):
        changes = values.get(sec, {})
        if not changes:
            return obj
        try:
            return obj.replace(**changes)
        except (ModelDomainError, ConfigError, ValueError) as exc:
            key = next(iter(changes))
            raise ConfigError(f"{where(sec, key)}: [{sec}] {exc}") from None

    cfg = RunConfig(name, apply(dev, "device"), apply(cir, "circuit"), apply(att, "attack"),
                    run.get("seed", 0), run.get("dt", 10e-12), command or run.get("command", ""))
    for sec in EXPERIMENT_UNITS:
        cfg.blocks[sec].update(values.get(sec, {}))
    if not 0 < cfg.dt <= 25e-12:
        raise ConfigError(f"{where('run', 'dt')}: [run] dt must lie in (0, 25 ps]")
    return cfg


def write_manifest(cfg: RunConfig, outdir, files=()) -> Path:
    """``manifest.ini`` (runnable resolved config) listing the produced files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    body = cfg.to_ini()
    if files:
        body += "\n# outputs: " + ", ".join(sorted(Path(f).name for f in files)) + "\n"
    p = outdir / "manifest.ini"
    p.write_text(body)
    return p


def manifest_dict(cfg: RunConfig) -> dict:
    return {"version": __version__, "command": cfg.command, "preset": cfg.preset, "seed": cfg.seed,
            "dt": cfg.dt, "device": cfg.device.to_dict(), "circuit": cfg.circuit.to_dict(),
            "attack": cfg.attack.to_dict(),
            "blocks": {k: dict(v) for k, v in cfg.blocks.items()}}
