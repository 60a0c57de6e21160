"""Bias network, readout chain and the DC-port voltage observable."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ConfigError, ModelDomainError

Z0 = 50.0


@dataclass(frozen=True)
class CircuitParams:
    """Electrical environment of one detector.

    ``r_shunt=None`` removes the shunt: the wire is then fed only through
    ``r_bias``, the current-source limit.  ``f_hp="dc"`` selects a DC-coupled
    amplifier chain.  The AC-coupled chain has ``hp_order`` cascaded
    first-order high-pass sections at ``f_hp`` (two amplifiers and a DC block).
    """

    r_bias: float = 1e5
    v_bias: float = 1.0
    r_shunt: float | None = 50.0
    line_delay: float = 5e-9
    gain_db: float = 56.0
    f_hp: float | str = 1e7
    hp_order: int = 3
    f_lp: float = 5.8e8
    noise_rms: float = 0.0
    sample_dt: float = 25e-12

    def __post_init__(self):
        if self.r_shunt == "absent":
            object.__setattr__(self, "r_shunt", None)
        if isinstance(self.f_hp, str):
            if self.f_hp.lower() != "dc":
                raise ConfigError(f"f_hp must be a frequency or 'dc', got {self.f_hp!r}")
            object.__setattr__(self, "f_hp", "dc")
        if not (self.r_bias > 0 and self.v_bias >= 0):
            raise ConfigError("r_bias must be > 0 and v_bias >= 0")
        if self.r_shunt is not None and not self.r_shunt > 0:
            raise ConfigError("r_shunt must be > 0 or 'absent'")
        if self.gain_db < 0 or self.noise_rms < 0 or self.line_delay < 0:
            raise ConfigError("gain_db, noise_rms and line_delay must be >= 0")
        if not self.f_lp > 0 or not self.sample_dt > 0:
            raise ConfigError("f_lp and sample_dt must be > 0")
        if not self.dc_coupled:
            if not 0 < self.f_hp < self.f_lp:
                raise ConfigError("need 0 < f_hp < f_lp for an AC-coupled chain")
            if int(self.hp_order) < 1:
                raise ConfigError("hp_order must be >= 1")

    @property
    def i_bias(self) -> float:
        return self.v_bias / self.r_bias

    @property
    def shunted(self) -> bool:
        return self.r_shunt is not None

    @property
    def dc_coupled(self) -> bool:
        return self.f_hp == "dc"

    @property
    def gain(self) -> float:
        return 10 ** (self.gain_db / 20)

    def replace(self, **changes) -> "CircuitParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["r_shunt"] is None:
            d["r_shunt"] = "absent"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown circuit fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class AnalogTrace:
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if not self.dt > 0:
            raise ModelDomainError("dt must be > 0")
        if not np.all(np.isfinite(s)):
            raise ModelDomainError("trace samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        return (isinstance(other, AnalogTrace) and self.t0 == other.t0 and self.dt == other.dt
                and np.array_equal(self.samples, other.samples))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)

    def index_of(self, t: float) -> int:
        return int(round((t - self.t0) / self.dt))

    def window(self, t_start: float, t_stop: float) -> "AnalogTrace":
        i0 = max(0, int(math.ceil((t_start - self.t0) / self.dt - 1e-9)))
        i1 = min(len(self.samples), int(math.floor((t_stop - self.t0) / self.dt + 1e-9)) + 1)
        return AnalogTrace(self.t0 + i0 * self.dt, self.dt, self.samples[i0:i1])

    def with_samples(self, samples) -> "AnalogTrace":
        return AnalogTrace(self.t0, self.dt, samples)

    def to_csv(self, path) -> None:
        times = self.times
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["time_s", "voltage_V"])
            for t, v in zip(times.tolist(), self.samples.tolist()):
                w.writerow([repr(t), repr(v)])

    @classmethod
    def from_csv(cls, path) -> "AnalogTrace":
        ts, vs = [], []
        with open(Path(path), newline="") as f:
            r = csv.reader(f)
            next(r)
            for row in r:
                ts.append(float(row[0]))
                vs.append(float(row[1]))
        if len(ts) < 2:
            raise ModelDomainError("need at least two samples to recover dt")
        ts = np.array(ts)
        return cls(float(ts[0]), _recover_dt(ts), np.array(vs))


def _recover_dt(ts: np.ndarray) -> float:
    """Find the float ``dt`` that regenerates ``t0 + dt*i`` exactly."""
    n = len(ts)
    idx = np.arange(n)
    guess = (ts[-1] - ts[0]) / (n - 1)
    cands = [guess, ts[1] - ts[0]]
    for base in list(cands):
        lo = hi = base
        for _ in range(64):
            lo = np.nextafter(lo, -np.inf)
            hi = np.nextafter(hi, np.inf)
            cands += [lo, hi]
    for dt in cands:
        if np.array_equal(ts[0] + dt * idx, ts):
            return float(dt)
    return float(guess)


def raw_readout_voltage(i_d, r_hs, circuit: CircuitParams):
    """Pickoff voltage at the RF port before amplification.

    Shunted: the voltage across the shunt, ``(i_bias - i_d) * r_shunt``.
    Without a shunt the sense voltage across the wire, ``i_d * r_hs``, is used.
    Accepts scalars or arrays.
    """
    if circuit.shunted:
        return (circuit.i_bias - np.asarray(i_d)) * circuit.r_shunt
    return np.asarray(i_d) * np.asarray(r_hs)


def filter_sections(circuit: CircuitParams, dt: float):
    """Discrete first-order sections (b, a) of the amplifier chain."""
    fs = 1.0 / dt
    if dt > 1.0 / (10 * circuit.f_lp):
        raise ConfigError(f"sample interval {dt:.3e} s undersamples f_lp={circuit.f_lp:.3e} Hz "
                          f"(need dt <= {1 / (10 * circuit.f_lp):.3e} s)")
    sections = []
    if not circuit.dc_coupled:
        b, a = signal.butter(1, circuit.f_hp, "highpass", fs=fs)
        sections += [(b, a)] * int(circuit.hp_order)
    b, a = signal.butter(1, circuit.f_lp, "lowpass", fs=fs)
    sections.append((b, a))
    return sections


def amplify(raw: AnalogTrace, circuit: CircuitParams, rng: np.random.Generator | None = None) -> AnalogTrace:
    """Band-limit, amplify and add white Gaussian noise.

    The chain starts from rest, so the raw trace must begin at its quiescent level.
    """
    y = np.asarray(raw.samples, dtype=float)
    for b, a in filter_sections(circuit, raw.dt):
        y = signal.lfilter(b, a, y)
    y = y * circuit.gain
    if circuit.noise_rms > 0:
        if rng is None:
            raise ConfigError("a random generator is required when noise_rms > 0")
        y = y + circuit.noise_rms * output_noise(len(y), circuit, raw.dt, rng)
    return AnalogTrace(raw.t0, raw.dt, y)


NOISE_WARMUP = 1000


def output_noise(n: int, circuit: CircuitParams, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS Gaussian noise band-limited by the chain's low-pass pole.

    White samples are drawn and filtered by the same first-order low-pass as
    the signal; a discarded warm-up makes the output stationary from the
    first sample.
    """
    b, a = filter_sections(circuit, dt)[-1]
    x = rng.standard_normal(n + NOISE_WARMUP)
    y = signal.lfilter(b, a, x)[NOISE_WARMUP:]
    return y / noise_gain(circuit, dt)


def noise_gain(circuit: CircuitParams, dt: float) -> float:
    """RMS of the low-pass output for unit white input (stationary)."""
    b, a = filter_sections(circuit, dt)[-1]
    # first-order section: h[0] = b0, h[k] = (b1 - a1*b0) * (-a1)**(k-1)
    b0, b1 = b
    a1 = a[1] / a[0]
    b0, b1 = b0 / a[0], b1 / a[0]
    c = b1 - a1 * b0
    return math.sqrt(b0 * b0 + c * c / (1 - a1 * a1))


def noise_lag_correlation(circuit: CircuitParams, dt: float, lag: int = 1) -> float:
    """Autocorrelation of :func:`output_noise` at ``lag`` samples."""
    b, a = filter_sections(circuit, dt)[-1]
    a1 = a[1] / a[0]
    b0, b1 = b[0] / a[0], b[1] / a[0]
    c = b1 - a1 * b0
    # impulse response h0 = b0, hk = c*r**(k-1) with r = -a1
    r = -a1
    var = b0 * b0 + c * c / (1 - r * r)
    if lag == 0:
        return 1.0
    cov = b0 * c * r ** (lag - 1) + c * c * r ** lag / (1 - r * r)
    return cov / var


def reflection_coefficient(circuit: CircuitParams, z0: float = Z0) -> float:
    """Reflection at the shunt end of the line; without a shunt the line sees the matched amplifier."""
    if not circuit.shunted:
        return 0.0
    return (circuit.r_shunt - z0) / (circuit.r_shunt + z0)


def reflection_inject(trace_at_device: AnalogTrace, circuit: CircuitParams) -> AnalogTrace:
    """Voltage returned to the device node by the mismatched line end.

    A copy of the outgoing transient, delayed by the round trip and scaled by
    the reflection coefficient; zero for a matched line or zero delay.
    """
    v = np.asarray(trace_at_device.samples)
    gamma = reflection_coefficient(circuit)
    if circuit.line_delay == 0 or gamma == 0:
        return trace_at_device.with_samples(np.zeros_like(v))
    lag = int(round(2 * circuit.line_delay / trace_at_device.dt))
    out = np.zeros_like(v)
    if lag < len(v):
        out[lag:] = gamma * v[:len(v) - lag]
    return trace_at_device.with_samples(out)


def dc_monitor(state_log, circuit: CircuitParams, window: float, quiescent_mv: float = 0.0,
               resolution_mv: float | None = None) -> float:
    """Average DC bias-port voltage (mV) over the last ``window`` of a state log.

    The averaged quantity is the shunt-node voltage ``(i_bias - i_d) * r_shunt``
    (``i_d * r_hs`` without a shunt), plus a constant ``quiescent_mv`` standing
    in for recoveries from honest counts that were not simulated.
    """
    t = np.asarray(state_log.t)
    if len(t) == 0:
        raise ModelDomainError("empty state log")
    sel = t >= t[-1] - window
    v = raw_readout_voltage(np.asarray(state_log.i_d)[sel], np.asarray(state_log.r_hs)[sel], circuit)
    mv = 1e3 * float(np.mean(v)) + quiescent_mv
    if resolution_mv:
        mv = round(mv / resolution_mv) * resolution_mv
    return mv
