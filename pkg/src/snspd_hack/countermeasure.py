"""Two defences: the DC bias-port voltage monitor (V2) and pulse-shape discrimination."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, curve_fit
from scipy.stats import mannwhitneyu

from . import analysis
from .circuit import AnalogTrace, CircuitParams, dc_monitor
from .device import DeviceParams
from .engine import DEFAULT_DT, simulate
from .errors import ModelDomainError
from .stimulus import (DEFAULT_SETTLE, AttackParams, OpticalWaveform, build_control_diagram,
                       photon_energy, photon_train)

REAL, FAKE, ABSTAIN = "REAL", "FAKE", "ABSTAIN"
FEATURES = ("peak_v", "rise_10_90", "log_recovery_tau", "area", "plateau_flag")
DEFAULT_ALARM_MV = 0.35
REP_PERIOD = 100e-6
PULSE_SPACING = 150e-9
RIDGE = 1e-2


# --- pulse features -----------------------------------------------------------------

@dataclass(frozen=True)
class PulseFeatures:
    peak_v: float
    rise_10_90: float
    recovery_tau: float
    area: float
    plateau_flag: bool
    valid: bool = True

    def vector(self) -> np.ndarray:
        return np.array([self.peak_v, self.rise_10_90, math.log(self.recovery_tau), self.area,
                         float(self.plateau_flag)])


def _exp(t, a, tau, c):
    return a * np.exp(-t / tau) + c


def extract_features(trace: AnalogTrace, click, nominal_tau: float = 20e-9) -> PulseFeatures:
    """Features of the pulse whose threshold crossing is ``click = (t, v)``.

    The recovery constant is a least-squares exponential (plus offset) over
    ``5*nominal_tau`` after the peak; a failed fit leaves the pulse invalid.
    """
    t_c = float(click[0])
    if not trace.t0 <= t_c <= trace.t_end:
        raise ModelDomainError(f"click at {t_c:.3e} s lies outside the trace")
    y = trace.samples
    dt = trace.dt
    k_c = trace.index_of(t_c)
    k0 = max(0, k_c - int(round(5e-9 / dt)))
    k1 = min(len(y), k_c + int(round(10e-9 / dt)) + 1)
    kp = k_c - int(round(1e-9 / dt))
    kp = max(kp, 0) + int(np.argmax(y[max(kp, 0):k1]))
    pk = float(y[kp])
    lo = float(np.min(y[k0:kp + 1]))
    rise = _rise_time(y[k0:kp + 1], lo, pk, dt)

    span = int(round(5 * nominal_tau / dt))
    seg = y[kp:kp + span + 1]
    tt = np.arange(len(seg)) * dt
    full = len(seg) == span + 1
    plateau = bool(full and np.all(seg >= 0.5 * pk))
    area = float(np.sum(y[max(0, k_c - int(round(2e-9 / dt))):kp + span + 1]) * dt)
    valid = True
    try:
        p, _ = curve_fit(_exp, tt, seg, p0=(pk - seg[-1], nominal_tau, seg[-1]),
                         bounds=([-np.inf, 1e-11, -np.inf], [np.inf, 1e-5, np.inf]), maxfev=2000)
        tau = float(p[1])
        valid = bool(np.isfinite(tau))
    except (RuntimeError, ValueError):
        tau, valid = math.nan, False
    return PulseFeatures(pk, rise, tau, area, plateau, valid)


def _rise_time(y, lo, pk, dt) -> float:
    """10-90% rise, walking back from the peak and interpolating."""
    amp = pk - lo
    if amp <= 0 or len(y) < 2:
        return dt
    def back(level):
        k = len(y) - 1
        while k > 0 and y[k - 1] > level:
            k -= 1
        if k == 0:
            return 0.0
        return (k - 1) + (level - y[k - 1]) / (y[k] - y[k - 1])
    r = (back(lo + 0.9 * amp) - back(lo + 0.1 * amp)) * dt
    return max(r, 1e-3 * dt)


def first_crossing(trace: AnalogTrace, threshold: float, t_from: float, t_to: float):
    """First upward crossing of ``threshold`` in ``[t_from, t_to]``, or None."""
    y = trace.samples
    a = max(trace.index_of(t_from), 1)
    b = min(trace.index_of(t_to) + 1, len(y))
    k = np.flatnonzero((y[a - 1:b - 1] < threshold) & (y[a:b] >= threshold))
    if not len(k):
        return None
    j = a + int(k[0])
    frac = (threshold - y[j - 1]) / (y[j] - y[j - 1])
    return trace.t0 + (j - 1 + frac) * trace.dt, float(y[j])


# --- classifier -----------------------------------------------------------------

@dataclass(frozen=True)
class LinearClassifier:
    """``score = weights · (x - mean) / scale``; FAKE when ``score > threshold``."""

    mean: tuple
    scale: tuple
    weights: tuple
    threshold: float
    features: tuple = FEATURES

    def score(self, f: PulseFeatures) -> float:
        x = f.vector()[[FEATURES.index(n) for n in self.features]]
        return float(np.dot(self.weights, (x - np.array(self.mean)) / np.array(self.scale)))

    def to_dict(self) -> dict:
        return asdict(self)


def train(real, fake, features=FEATURES) -> LinearClassifier:
    """Diagonal Fisher discriminant on valid pulses; threshold at maximum Youden index."""
    idx = [FEATURES.index(n) for n in features]
    xr = np.array([f.vector()[idx] for f in real if f.valid])
    xf = np.array([f.vector()[idx] for f in fake if f.valid])
    if len(xr) < 2 or len(xf) < 2:
        raise ModelDomainError("need at least two valid pulses per class")
    allx = np.vstack([xr, xf])
    mean = allx.mean(axis=0)
    scale = allx.std(axis=0)
    scale[scale == 0] = 1.0
    zr, zf = (xr - mean) / scale, (xf - mean) / scale
    # ridge term keeps constant-within-class features (plateau_flag) finite
    var = 0.5 * (zr.var(axis=0) + zf.var(axis=0)) + RIDGE
    w = (zf.mean(axis=0) - zr.mean(axis=0)) / var
    sr, sf = zr @ w, zf @ w
    cands = np.unique(np.concatenate([sr, sf]))
    best_j, thr = -1.0, float(cands[0])
    for c in cands:
        j = np.mean(sf > c) - np.mean(sr > c)
        if j > best_j:
            best_j, thr = j, float(c)
    return LinearClassifier(tuple(mean), tuple(scale), tuple(w), thr, tuple(features))


def classify(features: PulseFeatures, model: LinearClassifier):
    if not features.valid:
        return ABSTAIN, math.nan
    s = model.score(features)
    return (FAKE if s > model.threshold else REAL), s


def auc(scores_real, scores_fake) -> float:
    """Probability a fake scores above a real (ties count half)."""
    sr, sf = np.asarray(scores_real, float), np.asarray(scores_fake, float)
    u = mannwhitneyu(sf, sr, alternative="two-sided").statistic
    return float(u / (len(sr) * len(sf)))


def roc(scores_real, scores_fake) -> list[tuple[float, float, float]]:
    """Rows ``(threshold, TPR, FPR)`` with FAKE as the positive class."""
    sr, sf = np.asarray(scores_real, float), np.asarray(scores_fake, float)
    rows = [(math.inf, 0.0, 0.0)]
    for c in np.unique(np.concatenate([sr, sf]))[::-1]:
        rows.append((float(c), float(np.mean(sf >= c)), float(np.mean(sr >= c))))
    return rows


def write_roc(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "tpr", "fpr"])
        for r in rows:
            w.writerow([repr(x) for x in r])


# --- labelled pulse sets -----------------------------------------------------------

def _aligned(trace: AnalogTrace, times):
    # pulses are located at the stimulus time: a DC-coupled fake never drops
    # below the threshold between carve-outs, so it has no crossing to key on
    return [(float(t), float(trace.samples[trace.index_of(t)])) for t in times]


def real_pulses(device: DeviceParams, circuit: CircuitParams, n: int, seed=0,
                spacing: float = PULSE_SPACING, dt: float = DEFAULT_DT):
    """(trace, clicks) for ``n`` single photons, one per ``spacing``."""
    dev = device.replace(eta=1.0)
    comb = analysis.photon_comb(n, spacing, rng=analysis.trial_seed(seed, analysis.DITHER_STREAM))
    refs = comb.photon_times
    rec = simulate(dev, circuit, comb, (0.0, refs[-1] + spacing), dt, seed, log_interval=0)
    return rec.trace, _aligned(rec.trace, refs)


def fake_pulses(device: DeviceParams, circuit: CircuitParams, attack: AttackParams, n: int, seed=0,
                spacing: float = PULSE_SPACING, dt: float = DEFAULT_DT):
    """(trace, clicks) for ``n`` planned fakes, one per ``spacing``."""
    if spacing < attack.period:
        raise ModelDomainError("spacing must be at least tau_off + tau_rearm")
    plan = analysis.dithered_times(n, spacing, DEFAULT_SETTLE,
                                   analysis.trial_seed(seed, analysis.DITHER_STREAM - 1))
    b1 = plan[-1] + spacing
    target, _ = build_control_diagram(attack, plan, 0.0, b1)
    rec = simulate(device, circuit, target, (-50e-9, b1), dt, seed, log_interval=0)
    return rec.trace, _aligned(rec.trace, plan)


@dataclass(frozen=True)
class ShapeReport:
    auc: float
    auc_threshold_only: float
    confusion: dict
    n_real: int
    n_fake: int
    n_invalid: int
    model: LinearClassifier = field(repr=False)
    roc: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {"auc": self.auc, "auc_threshold_only": self.auc_threshold_only,
                "confusion": self.confusion, "n_real": self.n_real, "n_fake": self.n_fake,
                "n_invalid": self.n_invalid, "model": self.model.to_dict()}


def shape_discrimination(device: DeviceParams, circuit: CircuitParams, attack: AttackParams,
                         n: int = 500, seed=0, features=FEATURES, dt: float = DEFAULT_DT) -> ShapeReport:
    """Train on the first half of ``n`` real and ``n`` fake pulses, score the second half.

    ``auc_threshold_only`` is what a discriminator alone sees: every scored
    pulse crossed the threshold, so its single binary feature is constant.
    """
    tau = device.l_k / circuit.r_shunt if circuit.shunted else 20e-9
    tr, cr = real_pulses(device, circuit, n, seed, dt=dt)
    tf, cf = fake_pulses(device, circuit, attack, n, seed, dt=dt)
    fr = [extract_features(tr, c, tau) for c in cr]
    ff = [extract_features(tf, c, tau) for c in cf]
    invalid = sum(not f.valid for f in fr + ff)
    hr, hf = len(fr) // 2, len(ff) // 2
    model = train(fr[:hr], ff[:hf], features)
    test_r = [f for f in fr[hr:] if f.valid]
    test_f = [f for f in ff[hf:] if f.valid]
    sr = [model.score(f) for f in test_r]
    sf = [model.score(f) for f in test_f]
    conf = {"tp": int(np.sum(np.array(sf) > model.threshold)), "fn": int(np.sum(np.array(sf) <= model.threshold)),
            "fp": int(np.sum(np.array(sr) > model.threshold)), "tn": int(np.sum(np.array(sr) <= model.threshold))}
    crossed_r = [1.0] * len(test_r)
    crossed_f = [1.0] * len(test_f)
    return ShapeReport(auc(sr, sf), auc(crossed_r, crossed_f), conf, len(test_r), len(test_f), invalid,
                       model, roc(sr, sf))


# --- DC-port monitor -----------------------------------------------------------------

@dataclass(frozen=True)
class V2Sweep:
    duty: tuple
    mv: tuple
    slope: float
    intercept: float
    r2: float
    alarm_mv: float = DEFAULT_ALARM_MV

    def to_dict(self) -> dict:
        return {"v2_series": [[d, v] for d, v in zip(self.duty, self.mv)], "slope_mv_per_duty": self.slope,
                "intercept_mv": self.intercept, "r2": self.r2, "v2_alarm_threshold_mv": self.alarm_mv}

    def alarms(self) -> list[bool]:
        return [v > self.alarm_mv for v in self.mv]


def v2_at_duty(device: DeviceParams, circuit: CircuitParams, attack: AttackParams, duty: float,
               rep_period: float = REP_PERIOD, quiescent_mv: float = 0.0,
               resolution_mv: float | None = None, dt: float = DEFAULT_DT) -> float:
    """Bias-port reading (mV) over one period with continuous blinding for ``duty·rep_period``."""
    if not 0 <= duty <= 0.5:
        raise ModelDomainError("duty must lie in [0, 0.5]")
    segs = ((0.0, duty * rep_period, attack.p_blind),) if duty > 0 else ()
    rec = simulate(device, circuit.replace(noise_rms=0.0), OpticalWaveform(segs), (0.0, rep_period), dt, 0,
                   record_trace=False)
    return dc_monitor(rec.state_log, circuit, rep_period, quiescent_mv, resolution_mv)


def v2_sweep(device: DeviceParams, circuit: CircuitParams, duty_grid, attack: AttackParams, seed=0,
             rep_period: float = REP_PERIOD, quiescent_mv: float = 0.2, resolution_mv: float | None = None,
             alarm_mv: float = DEFAULT_ALARM_MV, dt: float = DEFAULT_DT) -> V2Sweep:
    """V2 against blinding duty cycle at a 1/rep_period repetition, with an affine fit.

    ``quiescent_mv`` stands in for recoveries of honest counts at the
    reference count rate.  The runs are noise-free and draw nothing random,
    so ``seed`` is recorded only for the manifest.
    """
    duty = tuple(float(d) for d in duty_grid)
    mv = tuple(v2_at_duty(device, circuit, attack, d, rep_period, quiescent_mv, resolution_mv, dt) for d in duty)
    x, y = np.array(duty), np.array(mv)
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(res ** 2) / tot) if tot > 0 else 1.0
    return V2Sweep(duty, mv, float(slope), float(icpt), r2, alarm_mv)


# --- evasion ------------------------------------------------------------------------

def honest_stream(rate: float, t0: float, t1: float, seed, wavelength: float = 1550e-9):
    """Poisson photon times on ``[t0, t1)``."""
    if t1 <= t0 or rate <= 0:
        return ()
    w = photon_train(rate, t1 - t0, wavelength, np.random.default_rng(seed), t0)
    return w.photons


def honest_v2(device: DeviceParams, circuit: CircuitParams, photon_rate: float, window: float = REP_PERIOD,
              n_windows: int = 10, seed=0, dt: float = DEFAULT_DT):
    """V2 readings (mV) of normal counting, one per ``window``, and the count rate."""
    out, counts = [], 0
    for k in range(n_windows):
        ph = honest_stream(photon_rate, 0.0, window, analysis.trial_seed(seed, k))
        rec = simulate(device, circuit.replace(noise_rms=0.0), OpticalWaveform((), ph), (0.0, window), dt,
                       analysis.trial_seed(seed, k), record_trace=False)
        out.append(dc_monitor(rec.state_log, circuit, window))
        counts += len([e for e in rec.events if e.kind == 0])
    return np.array(out), counts / (n_windows * window)


@dataclass(frozen=True)
class EvasionResult:
    duty: float
    fake_rate: float
    v2_attack_mv: float
    v2_normal_mean_mv: float
    v2_normal_sigma_mv: float
    resend_rate: float
    alarm_mv: float

    @property
    def z(self) -> float:
        return (self.v2_attack_mv - self.v2_normal_mean_mv) / self.v2_normal_sigma_mv

    @property
    def evades(self) -> bool:
        return abs(self.z) <= 3 and self.v2_attack_mv <= self.alarm_mv and self.fake_rate >= 1e6

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(z=self.z, evades=self.evades)
        return d


def attack_cycle(device: DeviceParams, circuit: CircuitParams, attack: AttackParams, duty: float,
                 resend_rate: float, rep_period: float = REP_PERIOD, seed=0, dt: float = DEFAULT_DT):
    """One repetition period: fake clicks at the maximum rate while blinded, resent photons otherwise.

    Returns ``(v2_mv, fake_click_rate)``.
    """
    b1 = duty * rep_period
    n = int((b1 - DEFAULT_SETTLE - 100e-9) // attack.period) + 1
    plan, b0, b1 = analysis.reference_plan(attack, max(n, 0))
    target, _ = build_control_diagram(attack, plan, b0, b1)
    ph = honest_stream(resend_rate, b1 + 1e-6, rep_period, analysis.trial_seed(seed, 1))
    w = OpticalWaveform(target.segments, ph)
    rec = simulate(device, circuit, w, (0.0, rep_period), dt, seed)
    thr = analysis.default_threshold(device, circuit)
    cs = analysis.discriminate(rec.trace, thr)
    m, _, _, _ = analysis.score_clicks(cs.t, plan, attack.tau_off, b0, b1)
    return dc_monitor(rec.state_log, circuit, rep_period), m / rep_period


def evasion(device: DeviceParams, circuit: CircuitParams, attack: AttackParams, duty: float = 0.05,
            photon_rate: float = 1e9, rep_period: float = REP_PERIOD, n_windows: int = 10, seed=0,
            alarm_mv: float = DEFAULT_ALARM_MV, dt: float = DEFAULT_DT) -> EvasionResult:
    """Rate-matched low-duty attack against the V2 monitor.

    Normal operation is honest counting under ``photon_rate`` incident
    photons (saturating the count rate).  Eve blinds for ``duty`` of each
    period and resends photons for the rest, tuning their rate so the
    period-averaged V2 equals the normal mean.
    """
    normal, _ = honest_v2(device, circuit, photon_rate, rep_period, n_windows, seed, dt)
    mu, sd = float(normal.mean()), float(normal.std(ddof=1))

    def gap(log_rate):
        return attack_cycle(device, circuit, attack, duty, math.exp(log_rate), rep_period, seed, dt)[0] - mu

    lo, hi = math.log(photon_rate * 1e-3), math.log(photon_rate)
    if gap(hi) < 0:
        rate = photon_rate
    elif gap(lo) > 0:
        rate = photon_rate * 1e-3
    else:
        rate = math.exp(brentq(gap, lo, hi, xtol=1e-3))
    v2, fr = attack_cycle(device, circuit, attack, duty, rate, rep_period, seed, dt)
    return EvasionResult(duty, fr, v2, mu, sd, rate, alarm_mv)


def write_report(path, sweep: V2Sweep | None = None, shape: ShapeReport | None = None,
                 evasion_result: EvasionResult | None = None) -> None:
    out = {}
    if sweep is not None:
        out.update(sweep.to_dict())
    if shape is not None:
        out["shape"] = shape.to_dict()
    if evasion_result is not None:
        out["evasion"] = evasion_result.to_dict()
    with open(path, "w") as f:
        json.dump(out, f, indent=2)
