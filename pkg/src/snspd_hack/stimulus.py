"""Optical input timelines: photon trains and the attacker's control diagrams."""

from __future__ import annotations

import bisect
import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelDomainError, PlanError

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0

# blinding settle time before the first usable carve-out
DEFAULT_SETTLE = 200e-9


def photon_energy(wavelength: float) -> float:
    return PLANCK * LIGHT_SPEED / wavelength


@dataclass(frozen=True)
class OpticalWaveform:
    """Piecewise-constant power on half-open segments ``[t_start, t_end)`` plus photons.

    ``segments`` holds ``(t_start, t_end, power)`` triples and ``photons``
    ``(t, energy)`` pairs; gaps between segments carry zero power.
    """

    segments: tuple = ()
    photons: tuple = ()

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(p)) for a, b, p in self.segments)
        phs = tuple((float(t), float(e)) for t, e in self.photons)
        prev_end = -math.inf
        for a, b, p in segs:
            if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(p)):
                raise ModelDomainError("segment values must be finite")
            if p < 0:
                raise ModelDomainError("optical power must be >= 0")
            if not b > a:
                raise ModelDomainError(f"empty or reversed segment [{a}, {b})")
            if a < prev_end:
                raise ModelDomainError("segments must be sorted and disjoint")
            prev_end = b
        if any(phs[i][0] > phs[i + 1][0] for i in range(len(phs) - 1)):
            raise ModelDomainError("photon times must be sorted")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "photons", phs)
        object.__setattr__(self, "_starts", [s[0] for s in segs])

    @property
    def photon_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.photons], dtype=float)

    def with_photons(self, photons) -> "OpticalWaveform":
        merged = sorted(list(self.photons) + list(photons))
        return OpticalWaveform(self.segments, tuple(merged))

    def shifted(self, dt: float) -> "OpticalWaveform":
        return OpticalWaveform(tuple((a + dt, b + dt, p) for a, b, p in self.segments),
                               tuple((t + dt, e) for t, e in self.photons))

    # CSV interchange; repr() keeps floats bit-exact through the round trip

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t_start_s", "t_end_s", "power_W"])
            for a, b, p in self.segments:
                w.writerow([repr(a), repr(b), repr(p)])

    def photons_to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t_s", "energy_J"])
            for t, e in self.photons:
                w.writerow([repr(t), repr(e)])

    @classmethod
    def from_csv(cls, path, photons_path=None) -> "OpticalWaveform":
        segs = _read_rows(path, 3)
        phs = _read_rows(photons_path, 2) if photons_path is not None else ()
        return cls(tuple(segs), tuple(phs))


def _read_rows(path, ncol):
    rows = []
    with open(Path(path), newline="") as f:
        r = csv.reader(f)
        next(r)
        for row in r:
            if len(row) != ncol:
                raise ModelDomainError(f"{path}: expected {ncol} columns, got {row!r}")
            rows.append(tuple(float(x) for x in row))
    return rows


def power_at(w: OpticalWaveform, t: float) -> float:
    i = bisect.bisect_right(w._starts, t) - 1
    if i < 0:
        return 0.0
    a, b, p = w.segments[i]
    return p if t < b else 0.0


def sample_power(w: OpticalWaveform, t: np.ndarray) -> np.ndarray:
    """Vectorised :func:`power_at`."""
    t = np.asarray(t, dtype=float)
    if not w.segments:
        return np.zeros_like(t)
    seg = np.asarray(w.segments)
    i = np.searchsorted(seg[:, 0], t, side="right") - 1
    ok = i >= 0
    ic = np.where(ok, i, 0)
    inside = ok & (t < seg[ic, 1])
    return np.where(inside, seg[ic, 2], 0.0)


def photon_train(rate: float, duration: float, wavelength: float = 1550e-9,
                 rng: np.random.Generator | None = None, t0: float = 0.0) -> OpticalWaveform:
    """Poisson photon arrivals at ``rate`` over ``[t0, t0 + duration)``."""
    if rate < 0 or duration < 0:
        raise ModelDomainError("rate and duration must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    n = rng.poisson(rate * duration) if rate > 0 else 0
    times = np.sort(t0 + rng.uniform(0.0, duration, size=n))
    e = photon_energy(wavelength)
    return OpticalWaveform((), tuple((float(t), e) for t in times))


@dataclass(frozen=True)
class AttackParams:
    p_blind: float = 10e-6
    drop_db: float = 20.0
    surge_db: float = 3.0
    tau_off: float = 20e-9
    tau_rearm: float = 10e-9

    def __post_init__(self):
        if not self.p_blind > 0:
            raise ModelDomainError("p_blind must be > 0")
        if not self.tau_off > 0:
            raise ModelDomainError("tau_off must be > 0")
        if not self.tau_rearm > 0:
            raise ModelDomainError("tau_rearm must be > 0")
        if not self.drop_db > 0:
            raise ModelDomainError("drop_db must be > 0")
        if not self.surge_db >= 0:
            raise ModelDomainError("surge_db must be >= 0")

    @property
    def period(self) -> float:
        return self.tau_off + self.tau_rearm

    @property
    def p_drop(self) -> float:
        return self.p_blind * 10 ** (-self.drop_db / 10)

    @property
    def p_surge(self) -> float:
        return self.p_blind * 10 ** (self.surge_db / 10)

    def replace(self, **changes) -> "AttackParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_plan(params: AttackParams, click_times, blind_start: float, blind_end: float,
               settle: float = DEFAULT_SETTLE) -> list[float]:
    """Validate a click plan and return it sorted. Raises :class:`PlanError`."""
    clicks = sorted(float(c) for c in click_times)
    if not blind_end > blind_start:
        raise PlanError("blind_end must be after blind_start")
    eps = 1e-15
    for c in clicks:
        if c < blind_start + settle - eps:
            raise PlanError(f"click at {c:.3e} s falls inside the {settle:.3e} s blinding settle time")
        if c >= blind_end:
            raise PlanError(f"click at {c:.3e} s is not before blind_end {blind_end:.3e} s")
    for a, b in zip(clicks, clicks[1:]):
        if b - a < params.period - eps:
            raise PlanError(
                f"click spacing {b - a:.3e} s < tau_off + tau_rearm = {params.period:.3e} s "
                f"(requested rate exceeds {1 / params.period:.4g} Hz)")
    return clicks


def compile_waveform(base: float, blind_start: float, blind_end: float,
                     windows: list[tuple[float, float, float]]) -> OpticalWaveform:
    """Constant ``base`` power over the blind window with power overrides.

    ``windows`` holds disjoint ``(t_start, t_end, power)`` overrides inside the
    blind window.
    """
    segs = []
    t = blind_start
    for a, b, p in sorted(windows):
        a = max(a, blind_start)
        b = min(b, blind_end)
        if b <= a:
            continue
        if a > t:
            segs.append((t, a, base))
        segs.append((a, b, p))
        t = b
    if blind_end > t:
        segs.append((t, blind_end, base))
    return OpticalWaveform(tuple(segs))


def build_control_diagram(params: AttackParams, click_times, blind_start: float,
                          blind_end: float, settle: float = DEFAULT_SETTLE):
    """Compile a click plan into ``(target, companion)`` power timelines.

    Each carve-out ends at its click time: the target sees the dropped power
    during ``[click - tau_off, click)`` and the companion a surge over the same
    window.
    """
    clicks = check_plan(params, click_times, blind_start, blind_end, settle)
    drops = [(c - params.tau_off, c, params.p_drop) for c in clicks]
    surges = [(c - params.tau_off, c, params.p_surge) for c in clicks]
    target = compile_waveform(params.p_blind, blind_start, blind_end, drops)
    companion = compile_waveform(params.p_blind, blind_start, blind_end, surges)
    return target, companion
