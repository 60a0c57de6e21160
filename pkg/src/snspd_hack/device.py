"""Lumped electro-thermal model of a shunted superconducting nanowire.

The nanowire is described by three continuous variables and a phase flag:

* ``i_d``   current through the wire (A), driven through the kinetic inductance
* ``e_hs``  lumped hotspot energy (J), heated by Joule power and absorbed light
* ``e_sub`` heat stored in the substrate under the wire (J), fed by the hotspot
  as it rethermalises; it sets the afterpulse hazard after blinding ends

and the phase, SUPERCONDUCTING or NORMAL.  Phase changes are discrete and are
applied once per integration step by :func:`apply_transitions`.

All functions here are pure.  The time-domain engine re-implements the same
equations in a compiled kernel; tests compare the two.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelDomainError


class DeviceClass(enum.Enum):
    SNAP = "SNAP"
    MEANDER = "MEANDER"
    CAVITY_MEANDER = "CAVITY_MEANDER"


class Phase(enum.IntEnum):
    SUPERCONDUCTING = 0
    NORMAL = 1


@dataclass(frozen=True)
class DeviceParams:
    """Static parameters of one detector chip (SI units throughout)."""

    i_c: float = 10e-6 / 0.9
    l_k: float = 1e-6
    r_max: float = 1e5
    r_spot: float = 800.0
    eta: float = 0.5
    eta_abs: float = 0.5
    e_sat: float = 2.5e-14
    e_on: float = 1e-16
    e_off: float = 5e-17
    tau_th: float = 1e-10
    i_retrap: float = 0.3 * 10e-6 / 0.9
    beta_sens: float = 0.7
    device_class: DeviceClass = DeviceClass.SNAP
    # relative spread of the single-photon hotspot resistance between events
    r_spot_spread: float = 0.1
    # SNAP avalanche: probability and mean of an extra exponential delay
    # between absorption and hotspot formation (photon-driven events only)
    avalanche_prob: float = 0.1
    avalanche_delay: float = 200e-12
    # substrate heat reservoir and the afterpulse hazard it drives
    tau_sub: float = 1.0e-6
    ap_rate: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if isinstance(self.device_class, str):
            object.__setattr__(self, "device_class", DeviceClass(self.device_class))
        validate_params(self)

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["device_class"] = self.device_class.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ModelDomainError(f"unknown device fields: {sorted(unknown)}")
        return cls(**d)


def validate_params(p: DeviceParams) -> None:
    for name in ("i_c", "l_k", "r_max", "r_spot", "e_sat", "e_on", "e_off",
                 "tau_th", "i_retrap", "tau_sub"):
        v = getattr(p, name)
        if not (math.isfinite(v) and v > 0):
            raise ModelDomainError(f"{name} must be finite and > 0, got {v!r}")
    for name in ("eta", "eta_abs", "beta_sens"):
        v = getattr(p, name)
        if not (0 < v <= 1):
            raise ModelDomainError(f"{name} must lie in (0, 1], got {v!r}")
    if not p.i_retrap < p.i_c:
        raise ModelDomainError("need 0 < i_retrap < i_c")
    if not (p.e_off < p.e_on < p.e_sat):
        raise ModelDomainError("need 0 < e_off < e_on < e_sat")
    for name in ("r_spot_spread", "avalanche_delay", "ap_rate", "dark_rate"):
        if not getattr(p, name) >= 0:
            raise ModelDomainError(f"{name} must be >= 0")
    if not 0 <= p.avalanche_prob <= 1:
        raise ModelDomainError("avalanche_prob must lie in [0, 1]")


def hotspot_resistance(params: DeviceParams, phase: Phase, e_hs: float, r_floor: float) -> float:
    """Resistance of the normal domain, never below the seeding floor while NORMAL.

    Energy in excess of the nucleation energy ``e_on`` spreads the domain
    linearly up to ``r_max`` at ``e_sat``.  A photon hotspot (seeded at
    ``e_on``) therefore sits at its floor, while a bright-driven one grows
    towards ``r_max``.
    """
    if phase == Phase.SUPERCONDUCTING:
        return 0.0
    x = (e_hs - params.e_on) / (params.e_sat - params.e_on)
    return max(r_floor, params.r_max * min(1.0, max(0.0, x)))


@dataclass(frozen=True)
class ElectroThermalState:
    t: float
    i_d: float
    e_hs: float = 0.0
    phase: Phase = Phase.SUPERCONDUCTING
    r_hs: float = 0.0
    # resistance floor of the current hotspot (r_spot for optical/overcurrent
    # switching, a per-event sample for photon-driven switching)
    r_floor: float = 0.0
    e_sub: float = 0.0

    def evolve(self, params: DeviceParams, **changes) -> "ElectroThermalState":
        new = dataclasses.replace(self, **changes)
        r = hotspot_resistance(params, new.phase, new.e_hs, new.r_floor)
        return dataclasses.replace(new, r_hs=r)


def quiescent_state(params: DeviceParams, i_bias: float, t: float = 0.0) -> ElectroThermalState:
    return ElectroThermalState(t=t, i_d=i_bias)


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ModelDomainError(f"non-finite input {v!r}")


def derivatives(state: ElectroThermalState, params: DeviceParams, p_opt: float,
                i_bias: float, r_shunt: float | None, r_bias: float = 1e5,
                v_extra: float = 0.0):
    """Time derivatives ``(di_dt, de_dt)`` of wire current and hotspot energy.

    With ``r_shunt=None`` the wire is fed only through ``r_bias`` from a
    voltage ``i_bias * r_bias`` (no alternate current path).  ``v_extra`` is an
    additional series voltage at the device node (transmission-line reflection).
    """
    _check_finite(state.i_d, state.e_hs, p_opt, i_bias)
    if p_opt < 0:
        raise ModelDomainError("optical power must be >= 0")
    r_hs = state.r_hs
    if r_shunt is None:
        di_dt = (i_bias * r_bias - state.i_d * (r_bias + r_hs) + v_extra) / params.l_k
    else:
        di_dt = ((i_bias - state.i_d) * r_shunt - state.i_d * r_hs + v_extra) / params.l_k
    de_dt = state.i_d ** 2 * r_hs + params.eta_abs * p_opt - state.e_hs / params.tau_th
    return di_dt, de_dt


def substrate_derivative(state: ElectroThermalState, params: DeviceParams) -> float:
    return state.e_hs / params.tau_th - state.e_sub / params.tau_sub


def sample_spot_resistance(params: DeviceParams, rng: np.random.Generator | None) -> float:
    if rng is None or params.r_spot_spread == 0:
        return params.r_spot
    return params.r_spot * max(0.1, 1.0 + params.r_spot_spread * rng.standard_normal())


def apply_transitions(state: ElectroThermalState, params: DeviceParams, p_opt: float = 0.0,
                      photon_absorbed: bool = False, rng=None) -> ElectroThermalState:
    """Apply the phase machine once.

    SC -> NORMAL on a photon absorption (hotspot seeded at ``e_on``), when the
    hotspot energy reaches ``e_on`` or when the current reaches ``i_c``.
    NORMAL -> SC only once the hotspot is cold (``e_hs < e_off``) *and* the
    current has been pushed below ``i_retrap``.
    """
    if state.phase == Phase.SUPERCONDUCTING:
        if photon_absorbed:
            return state.evolve(params, phase=Phase.NORMAL, e_hs=max(state.e_hs, params.e_on),
                                r_floor=sample_spot_resistance(params, rng))
        if state.e_hs >= params.e_on or state.i_d >= params.i_c:
            return state.evolve(params, phase=Phase.NORMAL, r_floor=params.r_spot)
        return state
    if state.e_hs < params.e_off and state.i_d < params.i_retrap:
        return state.evolve(params, phase=Phase.SUPERCONDUCTING, r_floor=0.0)
    return state


def is_photosensitive(state: ElectroThermalState, params: DeviceParams) -> bool:
    return state.phase == Phase.SUPERCONDUCTING and state.i_d >= params.beta_sens * params.i_c


def absorb_photon(state: ElectroThermalState, params: DeviceParams, rng: np.random.Generator):
    """Offer one photon to the wire. Returns ``(new_state, detected)``."""
    if not is_photosensitive(state, params):
        return state, False
    if rng.random() >= params.eta:
        return state, False
    return apply_transitions(state, params, photon_absorbed=True, rng=rng), True


# closed forms used by the calibration and the attack planner

def rl_time_constant(params: DeviceParams, r_shunt: float) -> float:
    return params.l_k / r_shunt


def recovery_time(params: DeviceParams, i_bias: float, r_shunt: float, i_start: float = 0.0) -> float:
    """Time for the RL current return from ``i_start`` to reach the sensitivity gate."""
    gate = params.beta_sens * params.i_c
    if gate > i_bias:
        return math.inf
    if i_start >= gate:
        return 0.0
    return -rl_time_constant(params, r_shunt) * math.log((i_bias - gate) / (i_bias - i_start))


def hold_threshold_power(params: DeviceParams) -> float:
    """Smallest continuous power whose equilibrium hotspot energy stays at ``e_off``."""
    return params.e_off / (params.eta_abs * params.tau_th)


def onset_threshold_power(params: DeviceParams) -> float:
    """Smallest continuous power able to switch a superconducting wire."""
    return params.e_on / (params.eta_abs * params.tau_th)


def blinded_resistance(params: DeviceParams, p_opt: float) -> float:
    """Steady-state bright-driven resistance (Joule term neglected, i_d ~ 0)."""
    e = params.eta_abs * p_opt * params.tau_th
    return hotspot_resistance(params, Phase.NORMAL, e, params.r_spot)
