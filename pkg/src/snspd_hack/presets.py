"""Five named detector presets with a provenance flag on every number.

Flags:

* ``reported``   order-of-magnitude value stated for the measured devices
* ``derived``    follows from reported values through a closed form
* ``calibrated`` fitted so the model reproduces a reported anchor
  (constants produced by ``scripts/calibrate_presets.py``)
* ``assumed``    modelling choice with no reported counterpart

Only the device class of each preset is known for the real chips; the
per-device numbers are synthesised around the common operating point
(10 µA bias at 0.9 of the critical current, 1 µH, 50 Ω shunt).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuit import CircuitParams
from .device import DeviceClass, DeviceParams
from .errors import ConfigError
from .stimulus import AttackParams

# per-preset physical variations around the common operating point
_PHYSICAL = {
    "device1": dict(device_class=DeviceClass.SNAP, i_fraction=0.9, l_k=1e-6, eta=0.5),
    "device2": dict(device_class=DeviceClass.SNAP, i_fraction=0.85, l_k=0.8e-6, eta=0.4),
    "device3": dict(device_class=DeviceClass.MEANDER, i_fraction=0.9, l_k=1.5e-6, eta=0.3),
    "device4": dict(device_class=DeviceClass.CAVITY_MEANDER, i_fraction=0.9, l_k=1.2e-6, eta=0.8),
    "device5": dict(device_class=DeviceClass.CAVITY_MEANDER, i_fraction=0.88, l_k=1e-6, eta=0.85),
}

# output of scripts/calibrate_presets.py (seed 0)
_CALIBRATED = {
    "device1": dict(noise_rms=0.006917809364405253, tau_sub=1.0788124859988842e-06,
                    ap_rate=3.0794234942664747, reference_rate=28744852.046696674),
    "device2": dict(noise_rms=0.009319884368180324, tau_sub=1.0788102701124076e-06,
                    ap_rate=3.073162866898512, reference_rate=37023561.84322146),
    "device3": dict(noise_rms=0.002208282977989388, tau_sub=1.0788180297113404e-06,
                    ap_rate=3.1217542114711847, reference_rate=19138848.467167594),
    "device4": dict(noise_rms=0.0051992180870699825, tau_sub=1.0788147031203458e-06,
                    ap_rate=3.0962979962701964, reference_rate=23954053.010246247),
    "device5": dict(noise_rms=0.007244741983447524, tau_sub=1.0788124862811731e-06,
                    ap_rate=3.0841655386136173, reference_rate=29082712.892504517),
}

PRESETS = tuple(sorted(_PHYSICAL))

_FLAGS_DEVICE = {
    "i_c": "derived", "l_k": "reported", "r_max": "assumed", "r_spot": "calibrated",
    "eta": "assumed", "eta_abs": "calibrated", "e_sat": "calibrated", "e_on": "calibrated",
    "e_off": "calibrated", "tau_th": "calibrated", "i_retrap": "calibrated",
    "beta_sens": "assumed", "device_class": "reported", "r_spot_spread": "calibrated",
    "avalanche_prob": "assumed", "avalanche_delay": "calibrated", "tau_sub": "calibrated",
    "ap_rate": "calibrated", "dark_rate": "assumed",
}
_FLAGS_CIRCUIT = {
    "r_bias": "reported", "v_bias": "derived", "r_shunt": "reported", "line_delay": "reported",
    "gain_db": "reported", "f_hp": "reported", "hp_order": "assumed", "f_lp": "reported",
    "noise_rms": "calibrated", "sample_dt": "assumed",
}
_FLAGS_ATTACK = {
    "p_blind": "assumed", "drop_db": "reported", "surge_db": "reported",
    "tau_off": "reported", "tau_rearm": "assumed",
}


@dataclass(frozen=True)
class Preset:
    name: str
    device: DeviceParams
    circuit: CircuitParams
    attack: AttackParams
    reference_rate: float
    provenance: dict = field(compare=False)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "device": self.device.to_dict(),
            "circuit": self.circuit.to_dict(),
            "attack": self.attack.to_dict(),
            "reference_rate": self.reference_rate,
            "provenance": self.provenance,
        }


def physical_preset(name: str):
    """Uncalibrated ``(device, circuit, attack)``: noise-free and without afterpulsing."""
    try:
        spec = _PHYSICAL[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    i_bias = 10e-6
    i_c = i_bias / spec["i_fraction"]
    dev = DeviceParams(i_c=i_c, i_retrap=0.3 * i_c, l_k=spec["l_k"], eta=spec["eta"],
                       device_class=spec["device_class"])
    cir = CircuitParams()
    return dev, cir, AttackParams()


def preset(name: str) -> Preset:
    """Calibrated preset; raises :class:`ConfigError` for unknown names."""
    dev, cir, att = physical_preset(name)
    cal = _CALIBRATED.get(name)
    if cal is None:
        raise ConfigError(f"preset {name!r} has no frozen calibration; run scripts/calibrate_presets.py")
    dev = dev.replace(tau_sub=cal["tau_sub"], ap_rate=cal["ap_rate"])
    cir = cir.replace(noise_rms=cal["noise_rms"])
    prov = {
        "device": dict(_FLAGS_DEVICE),
        "circuit": dict(_FLAGS_CIRCUIT),
        "attack": dict(_FLAGS_ATTACK),
        "reference_rate": "calibrated",
    }
    return Preset(name, dev, cir, att, cal["reference_rate"], prov)


def all_presets() -> list[Preset]:
    return [preset(n) for n in PRESETS]
