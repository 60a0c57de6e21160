"""Search over (p_blind, tau_off, tau_rearm) for deterministic, low-power fake clicks."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .circuit import CircuitParams
from .device import DeviceParams
from .engine import DEFAULT_DT
from .errors import ConfigError
from .stimulus import AttackParams

P_REF = 1e-6
AXES = ("p_blind", "tau_off", "tau_rearm")
LOG_AXES = ("p_blind",)
REF_CLICKS = 100
MIN_STEP = 0.01


@dataclass(frozen=True)
class ObjectiveMetrics:
    p_click: float
    p_premature: float
    p_extra: float
    afterpulse_per_fake: float
    p_blind_norm: float
    feasible: bool

    @property
    def objective(self) -> float:
        return (10 * (1 - self.p_click) + 10 * self.p_premature + self.afterpulse_per_fake
                + 0.1 * self.p_blind_norm)

    def key(self):
        # feasibility first, then the weighted objective
        return (not self.feasible, self.objective)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective
        return d


def reference_blind_duration(params: AttackParams, n_clicks: int = REF_CLICKS) -> float:
    _, b0, b1 = analysis.reference_plan(params, n_clicks)
    return b1 - b0


def evaluate(params: AttackParams, device: DeviceParams, circuit: CircuitParams, trials: int = 100,
             seed=0, n_clicks: int = REF_CLICKS, dt: float = DEFAULT_DT) -> ObjectiveMetrics:
    """Score ``params`` on the reference scenario.

    ``trials`` runs of ``n_clicks`` planned fakes each; the afterpulse term is
    the probability of a click after one blinding cycle of the same length
    (repeated every 100 µs), divided by ``n_clicks``.
    """
    if trials < 100:
        raise ConfigError("evaluate needs trials >= 100")
    pc, pp, px = analysis.fake_click_determinism(device, circuit, params, n_clicks, trials, seed, dt)
    d = reference_blind_duration(params, n_clicks)
    ap = analysis.afterpulse_probability(device, circuit, params, d, trials=trials, seed=seed, dt=dt)
    return ObjectiveMetrics(pc, pp, px, ap / n_clicks, params.p_blind / P_REF, pc == 1.0 and pp == 0.0)


@dataclass(frozen=True)
class Bounds:
    p_blind: tuple = (0.1e-6, 100e-6)
    tau_off: tuple = (1e-9, 50e-9)
    tau_rearm: tuple = (1e-9, 50e-9)

    def __post_init__(self):
        for name in AXES:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo <= hi):
                raise ConfigError(f"bounds for {name} must be finite with 0 < lo <= hi")

    def to_params(self, u, base: AttackParams) -> AttackParams:
        """Map unit-cube coordinates to parameters (log scale for power)."""
        vals = {}
        for name, x in zip(AXES, u):
            lo, hi = getattr(self, name)
            vals[name] = lo * (hi / lo) ** x if name in LOG_AXES else lo + (hi - lo) * x
        return base.replace(**vals)


@dataclass
class SearchResult:
    params: AttackParams
    metrics: ObjectiveMetrics
    feasible: bool
    log: list = field(repr=False)
    seed: object = 0
    trials: int = 100

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "phase", *AXES, "seed", "trials", "p_click", "p_premature", "p_extra",
                        "afterpulse_per_fake", "p_blind_norm", "feasible", "objective"])
            for e in self.log:
                m = e["metrics"]
                w.writerow([e["index"], e["phase"], *(repr(e["params"][a]) for a in AXES), e["seed"],
                            e["trials"], repr(m["p_click"]), repr(m["p_premature"]), repr(m["p_extra"]),
                            repr(m["afterpulse_per_fake"]), repr(m["p_blind_norm"]), int(m["feasible"]),
                            repr(m["objective"])])

    def best_dict(self) -> dict:
        return {"params": self.params.to_dict(), "metrics": self.metrics.to_dict(),
                "feasible": self.feasible, "seed": _json_seed(self.seed), "trials": self.trials,
                "evaluations": len(self.log)}

    def write_best(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.best_dict(), f, indent=2)


def _json_seed(seed):
    return seed if isinstance(seed, (int, list)) else repr(seed)


def optimize(bounds: Bounds, device: DeviceParams, circuit: CircuitParams, budget: int = 60, seed=0,
             trials: int = 100, base: AttackParams = AttackParams(), grid_points: int = 3,
             n_clicks: int = REF_CLICKS, dt: float = DEFAULT_DT) -> SearchResult:
    """Grid then coordinate descent; every evaluation shares ``seed``.

    Points are compared by feasibility first and objective second, so the
    search never trades determinism for power.  Revisited points come from a
    cache and do not count against ``budget``.
    """
    if grid_points < 3:
        raise ConfigError("grid needs at least 3 points per axis")
    if budget < grid_points ** len(AXES):
        raise ConfigError(f"budget must cover the {grid_points}^{len(AXES)} grid")
    cache: dict = {}
    log: list = []

    def f(u, phase):
        u = tuple(round(min(max(x, 0.0), 1.0), 12) for x in u)
        if u not in cache:
            p = bounds.to_params(u, base)
            m = evaluate(p, device, circuit, trials, seed, n_clicks, dt)
            cache[u] = m
            log.append({"index": len(log), "phase": phase, "params": p.to_dict(), "seed": _json_seed(seed),
                        "trials": trials, "metrics": m.to_dict()})
        return cache[u]

    ticks = np.linspace(0.0, 1.0, grid_points)
    best_u, best = None, None
    for u in itertools.product(ticks, repeat=len(AXES)):
        m = f(u, "grid")
        if best is None or m.key() < best.key():
            best_u, best = tuple(u), m

    step = 0.5 / (grid_points - 1)
    while step >= MIN_STEP and len(log) < budget:
        moved = False
        for ax in range(len(AXES)):
            for sgn in (1, -1):
                if len(log) >= budget:
                    break
                u = list(best_u)
                u[ax] = min(max(u[ax] + sgn * step, 0.0), 1.0)
                u = tuple(u)
                if u == best_u:
                    continue
                m = f(u, "refine")
                if m.key() < best.key():
                    best_u, best, moved = u, m, True
        if not moved:
            step *= 0.5
    u = tuple(round(x, 12) for x in best_u)
    return SearchResult(bounds.to_params(u, base), best, best.feasible, log, seed, trials)


def replay(entry: dict, device: DeviceParams, circuit: CircuitParams, n_clicks: int = REF_CLICKS,
           dt: float = DEFAULT_DT) -> ObjectiveMetrics:
    """Re-evaluate one search-log entry under its logged seed."""
    return evaluate(AttackParams(**entry["params"]), device, circuit, entry["trials"], entry["seed"],
                    n_clicks, dt)
