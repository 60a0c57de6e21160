"""Two-detector faked-state scenarios: compile Eve's click plan, run both detectors, score."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .circuit import dc_monitor, output_noise
from .engine import DEFAULT_DT, NEVER, StateLog, export_record, fires, simulate, spawn_streams
from .errors import PlanError
from .stimulus import DEFAULT_SETTLE, AttackParams, OpticalWaveform, check_plan, compile_waveform

LEAD = 50e-9
TAIL = 50e-9


class SchemeCategory(enum.Enum):
    # passive beam splitter in front of the detectors; the only scheme modelled
    PASSIVE_SPLIT = "PASSIVE_SPLIT"


@dataclass(frozen=True)
class AttackScenario:
    target_clicks_det0: tuple = ()
    target_clicks_det1: tuple = ()
    params: AttackParams = AttackParams()
    blind_window: tuple = (0.0, 1e-6)
    scheme_category: SchemeCategory = SchemeCategory.PASSIVE_SPLIT
    settle: float = DEFAULT_SETTLE

    def __post_init__(self):
        object.__setattr__(self, "target_clicks_det0", tuple(float(t) for t in self.target_clicks_det0))
        object.__setattr__(self, "target_clicks_det1", tuple(float(t) for t in self.target_clicks_det1))
        object.__setattr__(self, "blind_window", tuple(float(t) for t in self.blind_window))
        if isinstance(self.scheme_category, str):
            object.__setattr__(self, "scheme_category", SchemeCategory(self.scheme_category))

    @property
    def plans(self):
        return self.target_clicks_det0, self.target_clicks_det1

    def validate(self) -> tuple[list[float], list[float]]:
        """Check each detector's plan; raises :class:`PlanError` naming the detector."""
        b0, b1 = self.blind_window
        out = []
        for det, plan in enumerate(self.plans):
            try:
                out.append(check_plan(self.params, plan, b0, b1, self.settle))
            except PlanError as exc:
                raise PlanError(f"detector {det}: {exc}") from None
        return out[0], out[1]

    def swapped(self) -> "AttackScenario":
        return AttackScenario(self.target_clicks_det1, self.target_clicks_det0, self.params,
                              self.blind_window, self.scheme_category, self.settle)

    def to_dict(self) -> dict:
        return {"scheme_category": self.scheme_category.value,
                "target_clicks_det0": list(self.target_clicks_det0),
                "target_clicks_det1": list(self.target_clicks_det1),
                "params": self.params.to_dict(), "blind_window": list(self.blind_window),
                "settle": self.settle}


def reference_scenario(params: AttackParams = AttackParams()) -> AttackScenario:
    """Detector 0 clicks at 0 and 30 ns; detector 1 only ever sees surges."""
    return AttackScenario((0.0, 30e-9), (), params, (-DEFAULT_SETTLE, 100e-9))


def max_fake_rate(params: AttackParams) -> float:
    return 1.0 / params.period


def _subtract(intervals, holes):
    """Parts of ``intervals`` not covered by ``holes`` (both lists of (a, b, p))."""
    out = []
    for a, b, p in intervals:
        pieces = [(a, b)]
        for ha, hb, _ in holes:
            nxt = []
            for x, y in pieces:
                if hb <= x or ha >= y:
                    nxt.append((x, y))
                    continue
                if ha > x:
                    nxt.append((x, ha))
                if hb < y:
                    nxt.append((hb, y))
            pieces = nxt
        out += [(x, y, p) for x, y in pieces if y > x]
    return out


def compile_scenario(scenario: AttackScenario) -> tuple[OpticalWaveform, OpticalWaveform]:
    """Per-detector power timelines.

    Each detector gets drops at its own carve-outs and surges at the other
    detector's; where the two overlap the own drop wins.
    """
    plans = scenario.validate()
    p = scenario.params
    b0, b1 = scenario.blind_window
    drops = [[(c - p.tau_off, c, p.p_drop) for c in plan] for plan in plans]
    surges = [[(c - p.tau_off, c, p.p_surge) for c in plan] for plan in plans]
    out = []
    for det in (0, 1):
        windows = drops[det] + _subtract(surges[1 - det], drops[det])
        out.append(compile_waveform(p.p_blind, b0, b1, windows))
    return out[0], out[1]


@dataclass(frozen=True)
class DetectorScore:
    clicks: analysis.ClickStream = field(repr=False)
    onset_clicks: tuple
    n_planned: int
    n_matched: int
    n_premature: int
    n_extra: int
    dc_monitor_mv: float

    @property
    def p_click(self) -> float:
        return self.n_matched / self.n_planned if self.n_planned else 1.0

    @property
    def p_premature(self) -> float:
        return self.n_premature / self.n_planned if self.n_planned else 0.0

    @property
    def p_extra(self) -> float:
        return self.n_extra / max(self.n_planned, 1)

    def to_dict(self) -> dict:
        return {"clicks": self.clicks.clicks, "onset_clicks": list(self.onset_clicks),
                "n_planned": self.n_planned, "n_matched": self.n_matched,
                "n_premature": self.n_premature, "n_extra": self.n_extra,
                "p_click": self.p_click, "p_premature": self.p_premature, "p_extra": self.p_extra,
                "dc_monitor_mv": self.dc_monitor_mv}


@dataclass(frozen=True)
class AttackReport:
    scenario: AttackScenario
    detectors: tuple
    achieved_rate: float
    planned_rate: float
    max_rate: float
    records: tuple = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {"scenario": self.scenario.to_dict(),
                "detectors": [d.to_dict() for d in self.detectors],
                "achieved_rate_hz": self.achieved_rate, "planned_rate_hz": self.planned_rate,
                "max_rate_hz": self.max_rate}

    def export(self, outdir, manifest: dict | None = None) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        for det, (score, rec) in enumerate(zip(self.detectors, self.records)):
            paths += export_record(rec, outdir, f"det{det}", manifest)
            p = outdir / f"det{det}_clicks.csv"
            score.clicks.to_csv(p)
            paths.append(p)
        p = outdir / "attack_report.json"
        with open(p, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
        paths.append(p)
        return paths


def _rate(times) -> float:
    # per-detector click rate; a report's rate is the larger of the two, since
    # interleaved plans may jointly exceed 1/period while each stays legal
    t = sorted(times)
    if len(t) < 2:
        return 0.0
    return (len(t) - 1) / (t[-1] - t[0])


def score_detector(clicks: analysis.ClickStream, plan, scenario: AttackScenario, dc_mv: float,
                   onset_window: float = LEAD) -> tuple[DetectorScore, list]:
    """Score one detector; also returns the planned times that were matched."""
    b0, b1 = scenario.blind_window
    t = clicks.t
    onset = tuple(float(x) for x in t[(t >= b0) & (t < b0 + onset_window)][:1])
    m, pm, x, delays = analysis.score_clicks(t, plan, scenario.params.tau_off, b0, b1, onset_window)
    matched = [c for c in plan if np.any(np.abs(t - c) <= analysis.MATCH_WINDOW)]
    return DetectorScore(clicks, onset, len(plan), m, pm, x, dc_mv), matched


def _span(scenario):
    b0, b1 = scenario.blind_window
    return (b0 - LEAD, b1 + TAIL)


def run_scenario(scenario: AttackScenario, devices, circuits, seed=0, dt: float = DEFAULT_DT,
                 thresholds=None) -> AttackReport:
    """Simulate both detectors under the compiled scenario and score them.

    ``devices`` and ``circuits`` are pairs (a single object is used for both).
    """
    devices = _pair(devices)
    circuits = _pair(circuits)
    waves = compile_scenario(scenario)
    plans = scenario.validate()
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    seeds = ss.spawn(2)
    span = _span(scenario)
    b0, b1 = scenario.blind_window
    scores, records, rates = [], [], []
    for det in (0, 1):
        rec = simulate(devices[det], circuits[det], waves[det], span, dt, seeds[det])
        thr = thresholds[det] if thresholds else analysis.default_threshold(devices[det], circuits[det])
        cs = analysis.discriminate(rec.trace, thr)
        dc = dc_monitor(_clip_log(rec.state_log, b1), circuits[det], b1 - b0)
        sc, mt = score_detector(cs, plans[det], scenario, dc)
        scores.append(sc)
        records.append(rec)
        rates.append(_rate(mt))
    return AttackReport(scenario, tuple(scores), max(rates), max(_rate(p) for p in plans),
                        max_fake_rate(scenario.params), tuple(records))


def _clip_log(log: StateLog, t_stop: float) -> StateLog:
    sel = np.asarray(log.t) <= t_stop
    return StateLog(*(np.asarray(getattr(log, f))[sel] for f in ("t", "i_d", "e_hs", "phase", "r_hs", "e_sub")))


def _pair(x):
    return tuple(x) if isinstance(x, (list, tuple)) else (x, x)


@dataclass(frozen=True)
class TrialSummary:
    trials: int
    n_planned: tuple
    n_matched: tuple
    n_premature: tuple
    n_extra: tuple
    n_onset: tuple
    full_runs: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("trials", "n_planned", "n_matched", "n_premature", "n_extra", "n_onset", "full_runs")}


def scenario_trials(scenario: AttackScenario, devices, circuits, trials: int, seed=0,
                    dt: float = DEFAULT_DT) -> TrialSummary:
    """Repeat a scenario with per-trial seeds ``(seed, trial)`` and total the scores.

    Each trial is equivalent to :func:`run_scenario` with that seed.  A trial
    whose hazard stream does not fire follows the noise-free trajectory, so
    only its amplifier noise is regenerated; otherwise it is re-simulated.
    """
    devices = _pair(devices)
    circuits = _pair(circuits)
    waves = compile_scenario(scenario)
    plans = scenario.validate()
    span = _span(scenario)
    thr = [analysis.default_threshold(d, c) for d, c in zip(devices, circuits)]
    base = [simulate(d, c.replace(noise_rms=0.0), w, span, dt, 0, thresholds=NEVER,
                     light_thresholds=NEVER, log_interval=0) for d, c, w in zip(devices, circuits, waves)]
    tot = np.zeros((5, 2), dtype=np.int64)
    full = 0
    for k in range(trials):
        seeds = np.random.SeedSequence(analysis.trial_seed(seed, k)).spawn(2)
        for det in (0, 1):
            ss = seeds[det]
            fresh = np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key)
            rng_noise = spawn_streams(fresh)[2]
            if fires(devices[det], base[det], np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key),
                     span[1] - span[0]):
                full += 1
                trace = simulate(devices[det], circuits[det], waves[det], span, dt, ss, log_interval=0).trace
            else:
                y = base[det].trace.samples
                c = circuits[det]
                if c.noise_rms > 0:
                    y = y + c.noise_rms * output_noise(len(y), c, base[det].trace.dt, rng_noise)
                trace = base[det].trace.with_samples(y)
            cs = analysis.discriminate(trace, thr[det])
            sc, _ = score_detector(cs, plans[det], scenario, 0.0)
            tot[:, det] += (sc.n_planned, sc.n_matched, sc.n_premature, sc.n_extra, len(sc.onset_clicks))
    return TrialSummary(trials, *(tuple(int(v) for v in row) for row in tot), full)
