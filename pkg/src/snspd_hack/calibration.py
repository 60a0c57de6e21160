"""Fits of the phenomenological constants to the measured anchors.

Every routine here is deterministic for a given seed.  The numbers they
produce for the shipped presets are frozen in :mod:`snspd_hack.presets`;
``tests/test_calibration.py`` re-runs them to show the frozen values still
reproduce the anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import analysis
from .circuit import AnalogTrace, CircuitParams, output_noise
from .device import DeviceParams, Phase
from .engine import DEFAULT_DT, EventKind, simulate
from .errors import ModelDomainError
from .stimulus import AttackParams, OpticalWaveform, photon_energy

JITTER_TARGET = 160e-12
JITTER_PHOTONS = 96000
NOISE_DRAWS = 4
AFTERPULSE_TARGETS = ((1e-6, 0.10), (10e-6, 0.16))
REP_PERIOD = 100e-6
V2_FLOOR_MV = 0.2


# --- noise ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseCalibration:
    noise_rms: float
    fwhm: float
    threshold: float
    n_clicks: int


def calibrate_noise(device: DeviceParams, circuit: CircuitParams, target: float = JITTER_TARGET,
                    n_photons: int = JITTER_PHOTONS, spacing: float = 100e-9, seed=0,
                    dt: float = DEFAULT_DT, noise_draws: int = NOISE_DRAWS) -> NoiseCalibration:
    """noise_rms giving a single-photon FWHM of ``target`` at the 50% threshold.

    The noise-free response to a photon comb is simulated once (in chunks);
    the FWHM is then a function of the noise amplitude alone (common random
    numbers, regenerated per evaluation) and is solved for by Brent's method.
    ``eta`` is set to 1 so every photon contributes a click.  The max-bin
    FWHM estimate shrinks on small samples, so the sample is large enough
    for an independent run of the same size to land within a few ps.  The
    target is the mean over ``noise_draws`` noise realisations: solving on a
    single draw fits its ~2 ps sampling scatter into ``noise_rms``.
    """
    dev = device.replace(eta=1.0)
    quiet = circuit.replace(noise_rms=0.0)
    thr = analysis.default_threshold(device, circuit)
    chunks = []
    for k, n in enumerate(analysis.comb_chunks(n_photons)):
        comb = analysis.photon_comb(n, spacing, rng=analysis.trial_seed(seed, analysis.DITHER_STREAM - 1 - k))
        refs = comb.photon_times
        rec = simulate(dev, quiet, comb, (0.0, refs[-1] + spacing), dt, [seed, 2, k], log_interval=0)
        # float32 keeps ~10^5 photons of trace in memory
        chunks.append((rec.trace.t0, rec.trace.dt, rec.trace.samples.astype(np.float32), refs))
        del rec

    def report(sigma, j):
        delays, missing = [], 0
        for k, (t0, ts, y, refs) in enumerate(chunks):
            z = output_noise(len(y), circuit, ts, np.random.default_rng([seed, 1, k, j]))
            cs = analysis.discriminate(AnalogTrace(t0, ts, y + sigma * z), thr)
            d, m = analysis.match_clicks(cs.t, refs)
            delays.append(d)
            missing += m
        return analysis.jitter_from_delays(np.concatenate(delays), n_missing=missing)

    def mean_fwhm(sigma):
        return float(np.mean([report(sigma, j).fwhm for j in range(noise_draws)]))

    def f(s):
        return mean_fwhm(s) - target

    lo, hi = 1e-4 * thr, thr / 3
    if f(lo) * f(hi) > 0:
        # near thr/3 noise crossings swamp small samples; walk up from
        # low noise to the first sign change instead
        hi = thr / 40
        while f(hi) < 0:
            lo, hi = hi, hi * 1.25
            if hi > thr / 3:
                raise ModelDomainError(f"no noise level below threshold/3 gives FWHM {target:g} s")
    sigma = brentq(f, lo, hi, xtol=1e-5 * thr)
    return NoiseCalibration(float(sigma), mean_fwhm(sigma), thr, report(sigma, 0).n_clicks)


# --- blinding threshold ---------------------------------------------------------

def holds_blinded(device: DeviceParams, circuit: CircuitParams, power: float,
                  hold: float = 1e-6, onset_power: float = 10e-6, onset: float = 100e-9,
                  dt: float = DEFAULT_DT) -> bool:
    """True if ``power`` keeps a wire that was switched by ``onset_power`` NORMAL for ``hold``."""
    w = OpticalWaveform(((0.0, onset, onset_power), (onset, onset + hold, power)))
    rec = simulate(device, circuit.replace(noise_rms=0.0), w, (0.0, onset + hold), dt, 0,
                   record_trace=False, log_interval=0)
    # below threshold the wire recovers and is re-triggered by the light, so
    # the final phase alone does not tell
    return rec.final_state.phase == Phase.NORMAL and not rec.events_of(EventKind.SC_RECOVERED)


def blinding_threshold(device: DeviceParams, circuit: CircuitParams, lo: float = 1e-8,
                       hi: float = 1e-4, rel_tol: float = 1e-3, dt: float = DEFAULT_DT) -> float:
    """Smallest continuous power holding the blinded state, by bisection in log power."""
    if not holds_blinded(device, circuit, hi, dt=dt):
        return math.inf
    if holds_blinded(device, circuit, lo, dt=dt):
        return lo
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if holds_blinded(device, circuit, mid, dt=dt):
            hi = mid
        else:
            lo = mid
    return hi


# --- afterpulsing ------------------------------------------------------------------

@dataclass(frozen=True)
class AfterpulseCalibration:
    tau_sub: float
    ap_rate: float
    predicted: tuple


def unit_exposure(device: DeviceParams, circuit: CircuitParams, attack: AttackParams,
                  blind_duration: float, rep_period: float = REP_PERIOD, dt: float = DEFAULT_DT) -> float:
    """Hazard integral per unit ``ap_rate`` (the hazard is linear in it)."""
    dev = device.replace(ap_rate=1.0, dark_rate=0.0)
    return analysis.afterpulse_exposure(dev, circuit, attack, blind_duration, rep_period, dt)


def calibrate_afterpulse(device: DeviceParams, circuit: CircuitParams, attack: AttackParams,
                         targets=AFTERPULSE_TARGETS, rep_period: float = REP_PERIOD,
                         tau_bounds=(5e-8, 1e-4), dt: float = DEFAULT_DT) -> AfterpulseCalibration:
    """Fit (tau_sub, ap_rate) so P(click after blinding) hits both targets.

    P = 1 - exp(-ap_rate * X(D; tau_sub)).  The ratio of the two required
    exposures fixes tau_sub; ap_rate then follows from either target.
    """
    (d1, p1), (d2, p2) = targets
    want = math.log(1 - p2) / math.log(1 - p1)

    def ratio(log_tau):
        dev = device.replace(tau_sub=math.exp(log_tau))
        return (unit_exposure(dev, circuit, attack, d2, rep_period, dt)
                / unit_exposure(dev, circuit, attack, d1, rep_period, dt) - want)

    lt = brentq(ratio, math.log(tau_bounds[0]), math.log(tau_bounds[1]), xtol=1e-4)
    tau = math.exp(lt)
    dev = device.replace(tau_sub=tau)
    x1 = unit_exposure(dev, circuit, attack, d1, rep_period, dt)
    rate = -math.log(1 - p1) / x1
    x2 = unit_exposure(dev, circuit, attack, d2, rep_period, dt)
    pred = (1 - math.exp(-rate * x1), 1 - math.exp(-rate * x2))
    return AfterpulseCalibration(tau, rate, pred)


# --- DC monitor floor ------------------------------------------------------------------

def count_area(device: DeviceParams, circuit: CircuitParams, dt: float = DEFAULT_DT) -> float:
    """Time integral (V·s) of the shunt-node voltage of one detection."""
    dev = device.replace(eta=1.0, r_spot_spread=0.0, avalanche_prob=0.0)
    w = OpticalWaveform((), ((10e-9, photon_energy(1550e-9)),))
    rec = simulate(dev, circuit.replace(noise_rms=0.0), w, (0.0, 400e-9), dt, 0)
    raw = rec.raw_trace
    return float(np.sum(raw.samples) * raw.dt)


def reference_count_rate(device: DeviceParams, circuit: CircuitParams, floor_mv: float = V2_FLOOR_MV,
                         dt: float = DEFAULT_DT) -> float:
    """Honest count rate whose recoveries average to ``floor_mv`` at the bias port."""
    return floor_mv * 1e-3 / count_area(device, circuit, dt)
