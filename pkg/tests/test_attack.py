import json

import pytest

from snspd_hack import attack
from snspd_hack.errors import PlanError
from snspd_hack.stimulus import AttackParams

A = AttackParams()


def test_compile_reference_scenario():
    w0, w1 = attack.compile_scenario(attack.reference_scenario(A))
    drops = [s for s in w0.segments if s[2] == pytest.approx(A.p_drop)]
    surges = [s for s in w1.segments if s[2] == pytest.approx(A.p_surge)]
    for segs in (drops, surges):
        assert [x for a, b, _ in segs for x in (a, b)] == pytest.approx([-20e-9, 0.0, 10e-9, 30e-9], abs=1e-15)


def test_own_drop_overrides_companion_surge():
    sc = attack.AttackScenario((0.0,), (10e-9,), A, (-200e-9, 100e-9))
    w0, _ = attack.compile_scenario(sc)
    # det0 drops on [-20, 0) and sees det1's surge only on [0, 10)
    powers = {(round(a * 1e9), round(b * 1e9)): p for a, b, p in w0.segments}
    assert powers[(-20, 0)] == pytest.approx(A.p_drop)
    assert powers[(0, 10)] == pytest.approx(A.p_surge)


def test_plan_rejection_names_detector():
    sc = attack.AttackScenario((), (0.0, 25e-9), A, (-200e-9, 100e-9))
    with pytest.raises(PlanError, match="detector 1"):
        sc.validate()


def test_rates():
    assert attack.max_fake_rate(A) == pytest.approx(1 / 30e-9)
    assert attack.max_fake_rate(A.replace(tau_off=50e-9, tau_rearm=50e-9)) == pytest.approx(10e6)
    assert attack._rate([0.0, 30e-9, 60e-9]) == pytest.approx(1 / 30e-9)
    assert attack._rate([0.0]) == 0.0


@pytest.fixture(scope="module")
def reference_report(dev1):
    return attack.run_scenario(attack.reference_scenario(dev1.attack), dev1.device, dev1.circuit, seed=1)


def test_reference_scenario_logic(reference_report):
    d0, d1 = reference_report.detectors
    assert (d0.n_planned, d0.n_matched, d0.n_premature, d0.n_extra) == (2, 2, 0, 0)
    assert len(d0.onset_clicks) == 1 and len(d1.onset_clicks) == 1
    assert (d1.n_planned, d1.n_extra) == (0, 0)
    assert d0.p_click == 1.0 and d1.p_click == 1.0
    assert reference_report.achieved_rate == pytest.approx(1 / 30e-9, rel=0.05)


def test_swapped_scenario_mirrors(dev1, reference_report):
    rep = attack.run_scenario(attack.reference_scenario(dev1.attack).swapped(), dev1.device, dev1.circuit,
                              seed=1)
    a0, a1 = reference_report.detectors
    b0, b1 = rep.detectors
    assert (b1.n_planned, b1.n_matched, b1.n_extra) == (a0.n_planned, a0.n_matched, a0.n_extra)
    assert (b0.n_planned, b0.n_extra) == (a1.n_planned, a1.n_extra)


def test_report_export(tmp_path, reference_report):
    paths = reference_report.export(tmp_path, {"preset": "device1"})
    names = {p.name for p in paths}
    assert {"attack_report.json", "det0_clicks.csv", "det1_trace.csv"} <= names
    rep = json.loads((tmp_path / "attack_report.json").read_text())
    assert rep["scenario"]["scheme_category"] == "PASSIVE_SPLIT"
    assert rep["detectors"][0]["n_matched"] == 2


def test_trials_fast_path_agrees_with_full_runs(dev1):
    sc = attack.reference_scenario(dev1.attack)
    summ = attack.scenario_trials(sc, dev1.device, dev1.circuit, 6, seed=4)
    full = [attack.run_scenario(sc, dev1.device, dev1.circuit, seed=[4, k]) for k in range(6)]
    for det in (0, 1):
        assert summ.n_matched[det] == sum(r.detectors[det].n_matched for r in full)
        assert summ.n_extra[det] == sum(r.detectors[det].n_extra for r in full)
        assert summ.n_onset[det] == sum(len(r.detectors[det].onset_clicks) for r in full)
