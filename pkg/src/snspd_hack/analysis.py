"""Click extraction and the headline statistics: jitter, afterpulsing, fake-click determinism."""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .circuit import AnalogTrace, CircuitParams, output_noise
from .device import DeviceParams, Phase
from .engine import DEFAULT_DT, NEVER, EventKind, fires, hazard_thresholds, simulate, spawn_streams
from .errors import ModelDomainError
from .stimulus import (DEFAULT_SETTLE, AttackParams, OpticalWaveform, build_control_diagram,
                       photon_energy)

DEFAULT_HOLDOFF = 5e-9
DEFAULT_BIN = 10e-12
MATCH_WINDOW = 2e-9
DEFAULT_REARM = 0.0
TAIL_TAUS = 40
# trial index reserved for arrival-time dither draws
DITHER_STREAM = 2**31 - 1
JITTER_CHUNK = 3000


@dataclass(frozen=True, eq=False)
class ClickStream:
    t: np.ndarray
    peak_v: np.ndarray
    threshold: float
    holdoff: float

    def __len__(self):
        return len(self.t)

    @property
    def clicks(self):
        return list(zip(self.t.tolist(), self.peak_v.tolist()))

    def between(self, t0: float, t1: float) -> np.ndarray:
        return self.t[(self.t >= t0) & (self.t < t1)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t_cross_s", "peak_V"])
            for t, v in self.clicks:
                w.writerow([repr(t), repr(v)])


def discriminate(trace: AnalogTrace, threshold: float, holdoff: float = DEFAULT_HOLDOFF,
                 rearm_fraction: float = DEFAULT_REARM) -> ClickStream:
    """Rising-edge threshold crossings with sub-sample linear interpolation.

    After a click the discriminator re-arms only once the trace has dropped
    below ``rearm_fraction * threshold`` and ``holdoff`` has elapsed, so noise
    riding on a slowly falling edge cannot re-trigger it.
    """
    if not threshold > 0:
        raise ModelDomainError("threshold must be > 0")
    if not 0 <= rearm_fraction <= 1:
        raise ModelDomainError("rearm_fraction must lie in [0, 1]")
    s = np.asarray(trace.samples)
    if len(s) < 2:
        return ClickStream(np.zeros(0), np.zeros(0), threshold, holdoff)
    cand = np.flatnonzero((s[:-1] < threshold) & (s[1:] >= threshold)) + 1
    rearm = np.flatnonzero(s <= rearm_fraction * threshold)
    frac = (threshold - s[cand - 1]) / (s[cand] - s[cand - 1])
    tc = trace.t0 + trace.dt * (cand - 1 + frac)
    keep = []
    last_t, last_k = -math.inf, -1
    for n, k in enumerate(cand):
        if tc[n] - last_t < holdoff:
            continue
        if last_k >= 0:
            j = np.searchsorted(rearm, last_k)
            if j >= len(rearm) or rearm[j] >= k:
                continue
        keep.append(n)
        last_t, last_k = tc[n], k
    k = cand[keep]
    tc = tc[keep]
    # peak: maximum until the pulse falls back below threshold
    below = np.flatnonzero(s < threshold)
    peaks = np.empty(len(k))
    for n, start in enumerate(k):
        j = np.searchsorted(below, start)
        stop = below[j] if j < len(below) else len(s)
        peaks[n] = s[start:stop].max()
    return ClickStream(tc, peaks, float(threshold), float(holdoff))


# --- reference pulse heights ----------------------------------------------------

@functools.lru_cache(maxsize=64)
def single_photon_height(device: DeviceParams, circuit: CircuitParams, dt: float = DEFAULT_DT) -> float:
    """Noise-free amplified peak of a nominal single-photon pulse."""
    dev = device.replace(eta=1.0, r_spot_spread=0.0, avalanche_prob=0.0)
    w = OpticalWaveform((), ((20e-9, photon_energy(1550e-9)),))
    rec = simulate(dev, circuit.replace(noise_rms=0.0), w, (0.0, 120e-9), dt, seed=0)
    return float(rec.trace.samples.max())


def default_threshold(device: DeviceParams, circuit: CircuitParams, fraction: float = 0.5) -> float:
    return fraction * single_photon_height(device, circuit)


# --- jitter -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JitterReport:
    edges: np.ndarray
    counts: np.ndarray
    fwhm: float
    mean: float
    sigma: float
    tail_fraction: float
    n_clicks: int
    n_missing: int
    delays: np.ndarray = field(repr=False, default=None)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_start_s", "bin_end_s", "count"])
            for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(a)), repr(float(b)), int(c)])

    def summary(self) -> dict:
        return {"fwhm_s": self.fwhm, "fit_mean_s": self.mean, "fit_sigma_s": self.sigma,
                "tail_fraction": self.tail_fraction, "counts": self.n_clicks, "missing": self.n_missing}

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2)


def histogram_fwhm(centers: np.ndarray, counts: np.ndarray) -> float:
    """Width at half the maximum bin, interpolated linearly between bin centres."""
    if counts.sum() == 0:
        return float("nan")
    p = int(np.argmax(counts))
    half = counts[p] / 2.0
    width = centers[1] - centers[0] if len(centers) > 1 else 0.0
    # walk outwards to the first bin below half height on each side
    i = p
    while i > 0 and counts[i - 1] >= half:
        i -= 1
    if i == 0:
        left = centers[0] - width / 2
    else:
        c0, c1 = counts[i - 1], counts[i]
        left = centers[i - 1] + (half - c0) / (c1 - c0) * width
    j = p
    while j < len(counts) - 1 and counts[j + 1] >= half:
        j += 1
    if j == len(counts) - 1:
        right = centers[-1] + width / 2
    else:
        c0, c1 = counts[j], counts[j + 1]
        right = centers[j] + (c0 - half) / (c0 - c1) * width
    return float(right - left)


def _gauss(x, a, mu, sig):
    return a * np.exp(-0.5 * ((x - mu) / sig) ** 2)


def jitter_from_delays(delays, bin_width: float = DEFAULT_BIN, n_missing: int = 0) -> JitterReport:
    d = np.asarray(delays, dtype=float)
    if len(d) == 0:
        raise ModelDomainError("no clicks to histogram")
    lo = math.floor(d.min() / bin_width) - 2
    hi = math.ceil(d.max() / bin_width) + 2
    edges = np.arange(lo, hi + 1) * bin_width
    counts, edges = np.histogram(d, edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    fwhm = histogram_fwhm(centers, counts)
    p = int(np.argmax(counts))
    mu0 = centers[p]
    sig0 = max(fwhm / 2.3548, bin_width / 2) if math.isfinite(fwhm) else bin_width
    try:
        (a, mu, sig), _ = curve_fit(_gauss, centers, counts, p0=(counts[p], mu0, sig0), maxfev=10000)
        sig = abs(sig)
    except (RuntimeError, ValueError):
        mu, sig = float(np.mean(d)), float(np.std(d))
    tail = float(np.mean(d > mu + 3 * sig)) if sig > 0 else 0.0
    return JitterReport(edges, counts, fwhm, float(mu), float(sig), tail, len(d), n_missing, d)


def match_clicks(clicks: np.ndarray, references, window: float = MATCH_WINDOW):
    """First click within ``±window`` of each reference; returns (delays, n_missing)."""
    clicks = np.sort(np.asarray(clicks))
    delays = []
    missing = 0
    for ref in references:
        j = np.searchsorted(clicks, ref - window)
        if j < len(clicks) and clicks[j] <= ref + window:
            delays.append(clicks[j] - ref)
        else:
            missing += 1
    return np.array(delays), missing


def jitter(records, reference_times, threshold: float, bins: float = DEFAULT_BIN,
           holdoff: float = DEFAULT_HOLDOFF, window: float = MATCH_WINDOW) -> JitterReport:
    """Histogram of click time minus reference time over one or more records.

    ``reference_times`` is a flat list for a single record or one list per record.
    Missing clicks are counted and left out of the histogram.
    """
    if not isinstance(records, (list, tuple)):
        records = [records]
    if len(records) == 1 and len(reference_times) and np.ndim(reference_times[0]) == 0:
        reference_times = [reference_times]
    delays, missing = [], 0
    for rec, refs in zip(records, reference_times):
        cs = discriminate(rec.trace, threshold, holdoff)
        d, m = match_clicks(cs.t, refs, window)
        delays.append(d)
        missing += m
    return jitter_from_delays(np.concatenate(delays), bins, missing)


def dithered_times(n: int, spacing: float, start: float, rng=None, dither: float = 1e-9) -> list[float]:
    """``start + k*spacing`` plus a uniform offset in ``[0, dither)``.

    The offset decorrelates arrival times from the trace sample grid; without
    it the interpolated crossing times alias against the histogram bins.
    """
    off = np.zeros(n) if rng is None else np.random.default_rng(rng).uniform(0.0, dither, n)
    return (start + spacing * np.arange(n) + off).tolist()


def photon_comb(n: int, spacing: float, start: float = 50e-9, wavelength: float = 1550e-9,
                rng=None) -> OpticalWaveform:
    """Single photons at (optionally dithered) regular spacing, for jitter runs."""
    e = photon_energy(wavelength)
    return OpticalWaveform((), tuple((t, e) for t in dithered_times(n, spacing, start, rng)))


def comb_chunks(n_photons: int, chunk: int = JITTER_CHUNK):
    """Split a photon count into simulation chunks (bounded trace memory)."""
    return [min(chunk, n_photons - k) for k in range(0, n_photons, chunk)]


def single_photon_jitter(device: DeviceParams, circuit: CircuitParams, n_photons: int = 3000,
                         spacing: float = 100e-9, seed=0, bins: float = DEFAULT_BIN,
                         dt: float = DEFAULT_DT, chunk: int = JITTER_CHUNK) -> JitterReport:
    """Jitter of a dithered single-photon comb, simulated ``chunk`` photons at a time.

    Chunk ``k`` uses seed ``(seed, k)``; the max-bin FWHM is biased low on
    small samples, so anchor-level checks want ~10^4 photons.
    """
    thr = default_threshold(device, circuit)
    delays, missing = [], 0
    for k, n in enumerate(comb_chunks(n_photons, chunk)):
        comb = photon_comb(n, spacing, rng=trial_seed(trial_seed(seed, k), DITHER_STREAM))
        t_end = comb.photons[-1][0] + spacing
        rec = simulate(device, circuit, comb, (0.0, t_end), dt, trial_seed(seed, k), log_interval=0)
        d, m = match_clicks(discriminate(rec.trace, thr).t, comb.photon_times)
        delays.append(d)
        missing += m
    return jitter_from_delays(np.concatenate(delays), bins, missing)


# --- fake clicks ------------------------------------------------------------------

@dataclass(frozen=True)
class FakeClickStats:
    p_click: float
    p_premature: float
    p_extra: float
    n_planned: int
    delays: np.ndarray = field(repr=False, default=None)
    peaks: np.ndarray = field(repr=False, default=None)


def reference_plan(attack: AttackParams, n_clicks: int, blind_start: float = 0.0,
                   settle: float = DEFAULT_SETTLE, tail: float = 100e-9, rng=None, dither: float = 1e-9):
    """Evenly spaced click plan at the maximum rate; ``rng`` dithers each click by up to ``dither``."""
    if rng is None:
        clicks = [blind_start + settle + k * attack.period for k in range(n_clicks)]
    else:
        clicks = dithered_times(n_clicks, attack.period + dither, blind_start + settle, rng, dither)
    blind_end = (clicks[-1] if clicks else blind_start + settle) + tail
    return clicks, blind_start, blind_end


def score_clicks(click_t: np.ndarray, plan, tau_off: float, blind_start: float, blind_end: float,
                 onset_window: float = 50e-9, window: float = MATCH_WINDOW):
    """Count (matched, premature carve-outs, extra clicks) for one blinded detector.

    The first click within ``onset_window`` of ``blind_start`` is the blinding
    onset pulse and is not scored.
    """
    t = np.sort(np.asarray(click_t))
    t = t[(t >= blind_start) & (t < blind_end)]
    used = np.zeros(len(t), bool)
    onset = np.flatnonzero(t < blind_start + onset_window)
    if len(onset):
        used[onset[0]] = True
    matched = premature = 0
    delays = []
    for c in plan:
        m = np.flatnonzero(~used & (np.abs(t - c) <= window))
        if len(m):
            matched += 1
            used[m[0]] = True
            delays.append(t[m[0]] - c)
        pm = np.flatnonzero(~used & (t >= c - tau_off) & (t < c - window))
        if len(pm):
            premature += 1
            used[pm] = True
    extra = int((~used).sum())
    return matched, premature, extra, np.array(delays)


def trial_seed(seed, trial: int) -> list[int]:
    """Entropy for trial ``trial`` of a Monte Carlo started from ``seed``."""
    entropy = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    if isinstance(entropy, (list, tuple)):
        return [*(int(x) for x in entropy), int(trial)]
    return [int(entropy), int(trial)]


def _noise_free(circuit: CircuitParams) -> CircuitParams:
    return circuit.replace(noise_rms=0.0)


def fake_click_determinism(device: DeviceParams, circuit: CircuitParams, attack: AttackParams,
                           n_clicks: int = 100, trials: int = 100, seed=0, dt: float = DEFAULT_DT,
                           threshold: float | None = None, return_stats: bool = False):
    """Monte Carlo of planned fake clicks against the 50% discriminator.

    Returns ``(p_click, p_premature, p_extra)`` over ``n_clicks * trials``
    carve-outs.  Each trial is a full engine run with seed ``(seed, trial)``;
    trials whose hazard stream never fires share the deterministic trajectory,
    so only their noise realisation is regenerated.
    """
    plan, b0, b1 = reference_plan(attack, n_clicks)
    target, _ = build_control_diagram(attack, plan, b0, b1)
    span = (b0 - 50e-9, b1)
    thr = default_threshold(device, circuit) if threshold is None else threshold
    base = simulate(device, _noise_free(circuit), target, span, dt, seed=0, log_interval=0,
                    thresholds=NEVER, light_thresholds=NEVER)
    y0 = base.trace.samples
    matched = premature = extra = 0
    delays, peaks = [], []
    for k in range(trials):
        ts = trial_seed(seed, k)
        rng_noise = spawn_streams(ts)[2]
        if fires(device, base, ts, span[1] - span[0]):
            trace = simulate(device, circuit, target, span, dt, ts, log_interval=0).trace
        else:
            y = y0 + circuit.noise_rms * output_noise(len(y0), circuit, base.trace.dt, rng_noise) if circuit.noise_rms > 0 else y0
            trace = base.trace.with_samples(y)
        cs = discriminate(trace, thr)
        m, p, x, d = score_clicks(cs.t, plan, attack.tau_off, b0, b1)
        matched += m
        premature += p
        extra += x
        delays.append(d)
        peaks.append(cs.peak_v)
    n = n_clicks * trials
    stats = FakeClickStats(matched / n, premature / n, extra / n, n, np.concatenate(delays),
                           np.concatenate(peaks))
    if return_stats:
        return stats
    return stats.p_click, stats.p_premature, stats.p_extra


# --- afterpulsing ------------------------------------------------------------------

def blinding_cycle(attack: AttackParams, blind_duration: float) -> OpticalWaveform:
    return OpticalWaveform(((0.0, blind_duration, attack.p_blind),))


def afterpulse_exposure(device: DeviceParams, circuit: CircuitParams, attack: AttackParams,
                        blind_duration: float, rep_period: float, dt: float = DEFAULT_DT) -> float:
    """Integrated afterpulse hazard over one repetition period (no firing).

    Once the wire has recovered in the dark the substrate energy decays as a
    pure exponential, so the run stops ``TAIL_TAUS`` substrate constants after
    light-off and the remainder of the period is integrated in closed form.
    """
    if not 0 <= blind_duration < rep_period:
        raise ModelDomainError("need 0 <= blind_duration < rep_period")
    if blind_duration == 0:
        return 0.0
    t_cut = min(rep_period, blind_duration + max(1e-6, TAIL_TAUS * device.tau_sub))
    rec = simulate(device, _noise_free(circuit), blinding_cycle(attack, blind_duration),
                   (0.0, t_cut), dt, seed=0, record_trace=False, log_interval=0,
                   thresholds=NEVER, light_thresholds=NEVER)
    rest = rep_period - t_cut
    st = rec.final_state
    if rest <= 0:
        return rec.hazard_exposure
    if not (st.phase == Phase.SUPERCONDUCTING and st.i_d >= device.beta_sens * device.i_c and st.e_hs <= 1e-6 * device.e_on):
        rec = simulate(device, _noise_free(circuit), blinding_cycle(attack, blind_duration),
                       (0.0, rep_period), dt, seed=0, record_trace=False, log_interval=0,
                       thresholds=NEVER, light_thresholds=NEVER)
        return rec.hazard_exposure
    tail = (device.ap_rate / device.e_on * st.e_sub * device.tau_sub * -math.expm1(-rest / device.tau_sub)
            + device.dark_rate * rest)
    return rec.hazard_exposure + tail


def afterpulse_probability(device: DeviceParams, circuit: CircuitParams, attack: AttackParams,
                           blind_duration: float, rep_period: float = 100e-6, trials: int = 1000,
                           seed=0, dt: float = DEFAULT_DT) -> float:
    """Fraction of repetition periods with at least one click after the blinding pulse.

    The blinding pulse is continuous (no carve-outs).  Before the first hazard
    event every trial follows the same deterministic trajectory, so a trial
    clicks exactly when its first unit-exponential hazard threshold, drawn
    from its own seed ``(seed, trial)`` as in :func:`simulate`, lies below the
    integrated hazard of that trajectory.  A detection of the blinding light
    itself at the onset (it precedes the thermal switch by picoseconds) is
    left out of that trajectory.
    """
    if trials < 1:
        raise ModelDomainError("trials must be >= 1")
    exposure = afterpulse_exposure(device, circuit, attack, blind_duration, rep_period, dt)
    hits = 0
    for k in range(trials):
        rng_hz = spawn_streams(trial_seed(seed, k))[1]
        if hazard_thresholds(device, rep_period, rng_hz)[0] <= exposure:
            hits += 1
    return hits / trials
