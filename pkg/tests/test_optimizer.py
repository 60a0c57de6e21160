import csv
import json

import pytest

from snspd_hack import optimizer as opt
from snspd_hack.errors import ConfigError
from snspd_hack.stimulus import AttackParams

FAST = dict(n_clicks=3, dt=25e-12)


def test_objective_and_key():
    good = opt.ObjectiveMetrics(1.0, 0.0, 0.0, 0.001, 2.0, True)
    assert good.objective == pytest.approx(0.001 + 0.2)
    bad = opt.ObjectiveMetrics(0.9, 0.0, 0.0, 0.0, 0.1, False)
    assert good.key() < bad.key()


def test_bounds_mapping():
    b = opt.Bounds((0.1e-6, 100e-6), (1e-9, 50e-9), (1e-9, 50e-9))
    p = b.to_params((0.5, 0.0, 1.0), AttackParams())
    assert p.p_blind == pytest.approx(10 ** -5.5)
    assert (p.tau_off, p.tau_rearm) == (1e-9, 50e-9)
    with pytest.raises(ConfigError):
        opt.Bounds((0.0, 1e-6))


def test_evaluate_needs_trials(dev1):
    with pytest.raises(ConfigError):
        opt.evaluate(dev1.attack, dev1.device, dev1.circuit, trials=10)


def test_default_attack_feasible(dev1):
    m = opt.evaluate(dev1.attack, dev1.device, dev1.circuit, **FAST)
    assert m.feasible and m.p_click == 1.0


def test_unblinding_power_infeasible(dev1):
    m = opt.evaluate(dev1.attack.replace(p_blind=0.1e-6), dev1.device, dev1.circuit, **FAST)
    assert not m.feasible


def test_zero_carve_out_never_clicks(dev1):
    m = opt.evaluate(dev1.attack.replace(tau_off=1e-12), dev1.device, dev1.circuit, **FAST)
    assert m.p_click == 0.0 and not m.feasible


def test_budget_and_grid_checks(dev1):
    with pytest.raises(ConfigError):
        opt.optimize(opt.Bounds(), dev1.device, dev1.circuit, budget=10)
    with pytest.raises(ConfigError):
        opt.optimize(opt.Bounds(), dev1.device, dev1.circuit, grid_points=2)


def test_infeasible_region_flagged(dev1):
    b = opt.Bounds((0.05e-6, 0.1e-6), (20e-9, 21e-9), (10e-9, 11e-9))
    res = opt.optimize(b, dev1.device, dev1.circuit, budget=27, **FAST)
    assert not res.feasible
    assert len(res.log) == 27


def test_search_log_and_replay(tmp_path, dev1):
    b = opt.Bounds((1e-6, 10e-6), (15e-9, 25e-9), (5e-9, 15e-9))
    res = opt.optimize(b, dev1.device, dev1.circuit, budget=30, seed=2, **FAST)
    assert res.feasible
    assert res.params.p_blind >= 1e-6
    res.write_log(tmp_path / "log.csv")
    res.write_best(tmp_path / "best.json")
    rows = list(csv.DictReader(open(tmp_path / "log.csv")))
    assert len(rows) == len(res.log) <= 30
    assert {r["phase"] for r in rows} == {"grid", "refine"}
    best = json.loads((tmp_path / "best.json").read_text())
    assert best["feasible"] and best["evaluations"] == len(res.log)
    entry = res.log[-1]
    again = opt.replay(entry, dev1.device, dev1.circuit, **FAST)
    assert again.to_dict() == entry["metrics"]
