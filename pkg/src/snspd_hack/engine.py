"""Fixed-step transient simulation of the wire and its readout.

The inner loop is a numba kernel that advances ``(i_d, e_hs, e_sub)`` with
classical RK4, applies the phase machine after every step, injects photon
events at their (snapped) step boundary and fires afterpulse / dark events
when the integrated hazard passes a pre-drawn unit-exponential threshold.

Random numbers come from three independent streams spawned from the seed
(photon draws, hazard thresholds, amplifier noise), all drawn a fixed number
of times per photon / per run, so the result does not depend on ``dt``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .circuit import AnalogTrace, CircuitParams, amplify, reflection_coefficient
from .device import DeviceClass, DeviceParams, ElectroThermalState, Phase
from .errors import ConfigError, IntegrationError
from .stimulus import OpticalWaveform, photon_energy

MAX_DT = 25e-12
NEVER = np.array([np.inf])  # threshold stream that never fires
DEFAULT_DT = 10e-12
DEFAULT_LOG_INTERVAL = 1e-9


class EventKind(enum.IntEnum):
    PHOTON_DETECTED = 0
    PHOTON_IGNORED = 1
    BLIND_ONSET = 2
    FAKE_EDGE = 3
    SC_RECOVERED = 4
    LATCHED = 5
    AFTERPULSE = 6


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind


@dataclass(frozen=True, eq=False)
class StateLog:
    t: np.ndarray
    i_d: np.ndarray
    e_hs: np.ndarray
    phase: np.ndarray
    r_hs: np.ndarray
    e_sub: np.ndarray

    def __len__(self):
        return len(self.t)

    def state(self, k: int) -> ElectroThermalState:
        return ElectroThermalState(t=float(self.t[k]), i_d=float(self.i_d[k]), e_hs=float(self.e_hs[k]),
                                   phase=Phase(int(self.phase[k])), r_hs=float(self.r_hs[k]),
                                   e_sub=float(self.e_sub[k]))


@dataclass(frozen=True, eq=False)
class SimulationRecord:
    trace: AnalogTrace | None
    raw_trace: AnalogTrace | None
    state_log: StateLog
    events: tuple
    final_state: ElectroThermalState
    hazard_exposure: float
    seed: object = None
    dt: float = DEFAULT_DT
    flux_exposure: float = 0.0

    def events_of(self, *kinds) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def __eq__(self, other):
        if not isinstance(other, SimulationRecord):
            return NotImplemented
        logs = all(np.array_equal(getattr(self.state_log, f), getattr(other.state_log, f))
                   for f in ("t", "i_d", "e_hs", "phase", "r_hs", "e_sub"))
        return (self.trace == other.trace and self.raw_trace == other.raw_trace and logs
                and self.events == other.events and self.final_state == other.final_state)


# --- compiled kernel ----------------------------------------------------------

# indices into the packed device parameter vector
_IC, _LK, _RMAX, _RSPOT, _ETAABS, _ESAT, _EON, _EOFF, _TAUTH, _IRET, _BETA, _TAUSUB, _APRATE, _DARK = range(14)
# packed circuit vector
_IBIAS, _RSHUNT, _RBIAS, _GAMMA = range(4)

ERR_NONE = 0
ERR_NONFINITE = 1


@numba.njit(cache=True, inline="always", error_model="numpy")
def _resistance(phase, e, r_floor, dev):
    if phase == 0:
        return 0.0
    x = (e - dev[_EON]) / (dev[_ESAT] - dev[_EON])
    if x > 1.0:
        x = 1.0
    if x < 0.0:
        x = 0.0
    r = dev[_RMAX] * x
    return r if r > r_floor else r_floor


@numba.njit(cache=True, inline="always", error_model="numpy")
def _rhs(i, e, s, phase, r_floor, p, v_extra, dev, cir):
    r = _resistance(phase, e, r_floor, dev)
    if cir[_RSHUNT] > 0.0:
        di = ((cir[_IBIAS] - i) * cir[_RSHUNT] - i * r + v_extra) / dev[_LK]
    else:
        di = (cir[_IBIAS] * cir[_RBIAS] - i * (cir[_RBIAS] + r) + v_extra) / dev[_LK]
    ee = e if e > 0.0 else 0.0
    de = i * i * r + dev[_ETAABS] * p - ee / dev[_TAUTH]
    ds = ee / dev[_TAUTH] - s / dev[_TAUSUB]
    return di, de, ds


@numba.njit(cache=True, inline="always", error_model="numpy")
def _raw(i, r, cir):
    if cir[_RSHUNT] > 0.0:
        return (cir[_IBIAS] - i) * cir[_RSHUNT]
    return i * r


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _kernel(t0, dt, n_steps, init, dev, cir, lag, seg_a, seg_b, seg_p,
            ph_step, ph_u, ph_r, eta, thresholds, hazard_start, flux_gain, flux_thr,
            sample_dt, n_samples, log_every,
            samples, log, ev_t, ev_k):
    i = init[0]
    e = init[1]
    s = init[2]
    phase = int(init[3])
    r_floor = init[4]
    ibias = cir[_IBIAS]

    n_seg = seg_a.shape[0]
    seg = 0
    n_ph = ph_step.shape[0]
    ph = 0
    while ph < n_ph and ph_step[ph] < 0:
        ph += 1
    n_thr = thresholds.shape[0]
    h_idx = 0
    lam = 0.0
    exposure = 0.0
    n_fthr = flux_thr.shape[0]
    f_idx = 0
    lam_f = 0.0
    flux_exposure = 0.0
    n_ev = 0
    max_ev = ev_t.shape[0]
    normal_since = t0 if phase == 1 else -1.0
    latched_flag = False

    ring = np.zeros(lag + 1)
    ring_pos = 0

    r_now = _resistance(phase, e, r_floor, dev)
    raw_prev = _raw(i, r_now, cir)
    j = 0
    if n_samples > 0:
        samples[0] = raw_prev
        j = 1
    n_log = 0
    if log_every > 0:
        log[0, 0] = t0
        log[0, 1] = i
        log[0, 2] = e
        log[0, 3] = phase
        log[0, 4] = r_now
        log[0, 5] = s
        n_log = 1

    for k in range(n_steps):
        t = t0 + k * dt
        # optical power at the step start
        while seg < n_seg and seg_b[seg] <= t:
            seg += 1
        p = 0.0
        if seg < n_seg and seg_a[seg] <= t:
            p = seg_p[seg]

        # photon events snapped to this step boundary
        while ph < n_ph and ph_step[ph] == k:
            if phase == 0 and i >= dev[_BETA] * dev[_IC] and ph_u[ph] < eta:
                phase = 1
                if e < dev[_EON]:
                    e = dev[_EON]
                r_floor = ph_r[ph]
                normal_since = t
                latched_flag = False
                kind = 0
            else:
                kind = 1
            if n_ev < max_ev:
                ev_t[n_ev] = t
                ev_k[n_ev] = kind
                n_ev += 1
            ph += 1

        sensitive = phase == 0 and i >= dev[_BETA] * dev[_IC]

        # photon counting of continuous light too weak to switch the wire by
        # heating alone; brighter light switches it thermally within picoseconds
        if sensitive and p > 0.0 and dev[_ETAABS] * p * dev[_TAUTH] <= dev[_EON]:
            rate_f = flux_gain * p
            if t >= hazard_start:
                flux_exposure += rate_f * dt
            lam_f += rate_f * dt
            if f_idx < n_fthr and lam_f >= flux_thr[f_idx]:
                f_idx += 1
                lam_f = 0.0
                phase = 1
                if e < dev[_EON]:
                    e = dev[_EON]
                r_floor = dev[_RSPOT]
                normal_since = t
                latched_flag = False
                sensitive = False
                if n_ev < max_ev:
                    ev_t[n_ev] = t
                    ev_k[n_ev] = 0
                    n_ev += 1

        # dark / afterpulse hazard while photosensitive
        if sensitive:
            rate = dev[_DARK] + dev[_APRATE] * s / dev[_EON]
            if t >= hazard_start:
                exposure += rate * dt
            lam += rate * dt
            if h_idx < n_thr and lam >= thresholds[h_idx]:
                h_idx += 1
                lam = 0.0
                phase = 1
                if e < dev[_EON]:
                    e = dev[_EON]
                r_floor = dev[_RSPOT]
                normal_since = t
                latched_flag = False
                if n_ev < max_ev:
                    ev_t[n_ev] = t
                    ev_k[n_ev] = 6
                    n_ev += 1

        v_extra = 0.0
        if lag > 0:
            v_extra = cir[_GAMMA] * ring[(ring_pos + 1) % (lag + 1)]

        # RK4 with phase and inputs frozen over the step
        k1i, k1e, k1s = _rhs(i, e, s, phase, r_floor, p, v_extra, dev, cir)
        k2i, k2e, k2s = _rhs(i + 0.5 * dt * k1i, e + 0.5 * dt * k1e, s + 0.5 * dt * k1s,
                             phase, r_floor, p, v_extra, dev, cir)
        k3i, k3e, k3s = _rhs(i + 0.5 * dt * k2i, e + 0.5 * dt * k2e, s + 0.5 * dt * k2s,
                             phase, r_floor, p, v_extra, dev, cir)
        k4i, k4e, k4s = _rhs(i + dt * k3i, e + dt * k3e, s + dt * k3s,
                             phase, r_floor, p, v_extra, dev, cir)
        i_new = i + dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        e_new = e + dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
        s_new = s + dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        # flush to zero: decaying energies must not reach subnormal range
        if e_new < 1e-40:
            e_new = 0.0
        if s_new < 1e-40:
            s_new = 0.0
        if not (math.isfinite(i_new) and math.isfinite(e_new) and math.isfinite(s_new)):
            return ERR_NONFINITE, t + dt, n_ev, n_log, exposure, flux_exposure, i, e, s, phase, r_floor
        t_new = t + dt

        # phase machine; event times interpolated inside the step
        if phase == 0:
            if e_new >= dev[_EON] or i_new >= dev[_IC]:
                if e_new >= dev[_EON]:
                    frac = (dev[_EON] - e) / (e_new - e) if e_new != e else 1.0
                else:
                    frac = (dev[_IC] - i) / (i_new - i) if i_new != i else 1.0
                frac = min(max(frac, 0.0), 1.0)
                phase = 1
                r_floor = dev[_RSPOT]
                normal_since = t_new
                latched_flag = False
                if n_ev < max_ev and e_new >= dev[_EON]:
                    ev_t[n_ev] = t + frac * dt
                    ev_k[n_ev] = 3 if i < 0.99 * ibias else 2
                    n_ev += 1
        else:
            if e_new < dev[_EOFF] and i_new < dev[_IRET]:
                fe = (e - dev[_EOFF]) / (e - e_new) if e >= dev[_EOFF] and e != e_new else 0.0
                fi = (i - dev[_IRET]) / (i - i_new) if i >= dev[_IRET] and i != i_new else 0.0
                frac = min(max(max(fe, fi), 0.0), 1.0)
                phase = 0
                r_floor = 0.0
                normal_since = -1.0
                if n_ev < max_ev:
                    ev_t[n_ev] = t + frac * dt
                    ev_k[n_ev] = 4
                    n_ev += 1
            elif (not latched_flag and p == 0.0 and t_new - normal_since > 100.0 * dev[_TAUTH]):
                if abs(e_new - e) <= 1e-6 * e_new:
                    latched_flag = True
                    if n_ev < max_ev:
                        ev_t[n_ev] = t_new
                        ev_k[n_ev] = 5
                        n_ev += 1

        i = i_new
        e = e_new
        s = s_new
        r_now = _resistance(phase, e, r_floor, dev)
        raw_new = _raw(i, r_now, cir)
        if lag > 0:
            ring_pos = (ring_pos + 1) % (lag + 1)
            ring[ring_pos] = raw_new

        while j < n_samples and t0 + j * sample_dt <= t_new + 1e-6 * dt:
            frac = (t0 + j * sample_dt - t) / dt
            samples[j] = raw_prev + frac * (raw_new - raw_prev)
            j += 1
        raw_prev = raw_new

        if log_every > 0 and (k + 1) % log_every == 0 and n_log < log.shape[0]:
            log[n_log, 0] = t_new
            log[n_log, 1] = i
            log[n_log, 2] = e
            log[n_log, 3] = phase
            log[n_log, 4] = r_now
            log[n_log, 5] = s
            n_log += 1

    return ERR_NONE, t0 + n_steps * dt, n_ev, n_log, exposure, flux_exposure, i, e, s, phase, r_floor


def _pack_device(d: DeviceParams) -> np.ndarray:
    return np.array([d.i_c, d.l_k, d.r_max, d.r_spot, d.eta_abs, d.e_sat, d.e_on, d.e_off,
                     d.tau_th, d.i_retrap, d.beta_sens, d.tau_sub, d.ap_rate, d.dark_rate])


def _pack_circuit(c: CircuitParams) -> np.ndarray:
    return np.array([c.i_bias, c.r_shunt if c.shunted else -1.0, c.r_bias, reflection_coefficient(c)])


def spawn_streams(seed):
    """Photon, hazard, noise and light-detection generators for one run."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def draw_photon_randoms(device: DeviceParams, n: int, rng: np.random.Generator):
    """Per-photon (detection uniform, hotspot resistance, avalanche delay)."""
    u = rng.random(n)
    z = rng.standard_normal(n)
    ua = rng.random(n)
    ex = rng.exponential(1.0, n)
    r = device.r_spot * np.maximum(0.1, 1.0 + device.r_spot_spread * z)
    snap = device.device_class == DeviceClass.SNAP
    delay = np.where(snap & (ua < device.avalanche_prob), ex * device.avalanche_delay, 0.0)
    return u, r, delay


def fires(device: DeviceParams, record: SimulationRecord, seed, duration: float) -> bool:
    """Would a run seeded with ``seed`` leave the noise-free trajectory of ``record``?

    ``record`` must come from a run with both hazard streams disabled; a
    seeded run matches it exactly unless one of its first thresholds is
    reached.
    """
    _, rng_hz, _, rng_fl = spawn_streams(seed)
    if hazard_thresholds(device, duration, rng_hz)[0] <= record.hazard_exposure:
        return True
    return bool(record.flux_exposure > 0 and flux_thresholds(duration, rng_fl)[0] <= record.flux_exposure)


def hazard_thresholds(device: DeviceParams, duration: float, rng: np.random.Generator) -> np.ndarray:
    n = 64 + int(4 * device.dark_rate * duration)
    return rng.exponential(1.0, n)


def flux_thresholds(duration: float, rng: np.random.Generator) -> np.ndarray:
    # one detection per 10 ns is far above any rate a recovering wire allows
    return rng.exponential(1.0, 64 + int(duration / 10e-9))


def simulate(device: DeviceParams, circuit: CircuitParams, input: OpticalWaveform, t_span,
             dt: float = DEFAULT_DT, seed=0, *, record_trace: bool = True,
             log_interval: float = DEFAULT_LOG_INTERVAL, initial_state: ElectroThermalState | None = None,
             hazard_start: float | None = None, thresholds: np.ndarray | None = None,
             light_thresholds: np.ndarray | None = None, wavelength: float = 1550e-9) -> SimulationRecord:
    """Integrate one detector over ``t_span`` under ``input``.

    The trace is sampled on a fixed ``circuit.sample_dt`` grid starting at
    ``t_span[0]`` (independent of ``dt``) and amplified from rest.
    ``hazard_start`` only affects the reported ``hazard_exposure``.
    ``thresholds`` overrides the hazard stream (``[inf]`` disables firing)
    and ``light_thresholds`` likewise for detections of continuous light,
    whose photons are taken at ``wavelength``.
    """
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise ConfigError("t_span must be finite and increasing")
    if not 0 < dt <= MAX_DT * (1 + 1e-12):
        raise ConfigError(f"dt must lie in (0, {MAX_DT}] s, got {dt}")
    n_steps = int(round((t1 - t0) / dt))
    rng_ph, rng_hz, rng_noise, rng_fl = spawn_streams(seed)

    if initial_state is None:
        initial_state = ElectroThermalState(t=t0, i_d=circuit.i_bias)
    init = np.array([initial_state.i_d, initial_state.e_hs, initial_state.e_sub,
                     float(int(initial_state.phase)), initial_state.r_floor])

    ph_t = input.photon_times
    u, r, delay = draw_photon_randoms(device, len(ph_t), rng_ph)
    steps = np.rint((ph_t + delay - t0) / dt).astype(np.int64) if len(ph_t) else np.zeros(0, np.int64)
    steps[(steps < 0) | (steps >= n_steps)] = -1
    order = np.argsort(steps, kind="stable")
    steps, u, r = steps[order], u[order], r[order]
    valid = steps >= 0
    steps, u, r = steps[valid], u[valid], r[valid]

    thr = hazard_thresholds(device, t1 - t0, rng_hz)
    if thresholds is not None:
        thr = np.asarray(thresholds, dtype=float)
    fthr = flux_thresholds(t1 - t0, rng_fl)
    if light_thresholds is not None:
        fthr = np.asarray(light_thresholds, dtype=float)

    seg = np.asarray(input.segments, dtype=float).reshape(-1, 3)
    lag = 0
    if circuit.line_delay > 0 and reflection_coefficient(circuit) != 0:
        lag = int(round(2 * circuit.line_delay / dt))

    sample_dt = circuit.sample_dt
    n_samples = int(math.floor((t1 - t0) / sample_dt + 1e-9)) + 1 if record_trace else 0
    samples = np.zeros(max(n_samples, 1))
    log_every = max(1, int(round(log_interval / dt))) if log_interval else 0
    log = np.zeros((n_steps // log_every + 2 if log_every else 1, 6))
    max_ev = 64 + 4 * (len(steps) + len(seg) + len(thr) + len(fthr))
    ev_t = np.zeros(max_ev)
    ev_k = np.zeros(max_ev, dtype=np.int64)

    err, t_err, n_ev, n_log, exposure, flux_exposure, i, e, s, phase, r_floor = _kernel(
        t0, dt, n_steps, init, _pack_device(device), _pack_circuit(circuit), lag,
        seg[:, 0].copy(), seg[:, 1].copy(), seg[:, 2].copy(),
        steps, u, r, float(device.eta), thr,
        t0 if hazard_start is None else float(hazard_start),
        float(device.eta) / photon_energy(wavelength), fthr,
        sample_dt, n_samples, log_every, samples, log, ev_t, ev_k)
    if err != ERR_NONE:
        raise IntegrationError(t_err)

    raw = trace = None
    if record_trace:
        raw = AnalogTrace(t0, sample_dt, samples[:n_samples].copy())
        trace = amplify(raw, circuit, rng_noise)
    log = log[:n_log]
    state_log = StateLog(*(np.ascontiguousarray(log[:, c]) for c in range(6)))
    for a in (state_log.t, state_log.i_d, state_log.e_hs, state_log.phase, state_log.r_hs, state_log.e_sub):
        a.setflags(write=False)
    order = np.argsort(ev_t[:n_ev], kind="stable")
    events = tuple(Event(float(ev_t[k]), EventKind(int(ev_k[k]))) for k in order)
    final = ElectroThermalState(t=t1, i_d=float(i), e_hs=float(e), phase=Phase(int(phase)),
                                r_floor=float(r_floor), e_sub=float(s)).evolve(device)
    return SimulationRecord(trace, raw, state_log, events, final, float(exposure), seed, dt,
                            float(flux_exposure))


def simulate_pair(devices, circuits, inputs, t_span, dt: float = DEFAULT_DT, seed=0,
                  split_seed: bool = True, **kwargs):
    """Two independent detectors on a shared clock; seeds are split unless disabled."""
    if split_seed:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        seeds = ss.spawn(2)
    else:
        seeds = [seed, seed]
    return tuple(simulate(d, c, w, t_span, dt, s, **kwargs)
                 for d, c, w, s in zip(devices, circuits, inputs, seeds))


def export_record(record: SimulationRecord, outdir, prefix: str = "run", manifest: dict | None = None) -> list[Path]:
    """Write trace CSVs, an events CSV and a JSON run manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    if record.trace is not None:
        p = outdir / f"{prefix}_trace.csv"
        record.trace.to_csv(p)
        paths.append(p)
        p = outdir / f"{prefix}_raw.csv"
        record.raw_trace.to_csv(p)
        paths.append(p)
    p = outdir / f"{prefix}_events.csv"
    with open(p, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_s", "kind"])
        for ev in record.events:
            w.writerow([repr(ev.t), ev.kind.name])
    paths.append(p)
    p = outdir / f"{prefix}_manifest.json"
    m = {"tool_version": __version__, "seed": _seed_repr(record.seed), "dt": record.dt}
    m.update(manifest or {})
    p.write_text(json.dumps(m, indent=2, sort_keys=True, default=str) + "\n")
    paths.append(p)
    return paths


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed
