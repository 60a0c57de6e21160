"""Acceptance suite: one test per criterion, each at its stated tolerance.

Calibration anchors (noise, blinding threshold, afterpulse endpoints) were
fitted to the reported numbers; everything else is a property that has to
hold once they are in place.
"""

import math

import numpy as np
import pytest

from snspd_hack import analysis, attack, calibration, countermeasure, optimizer
from snspd_hack.cli import main
from snspd_hack.device import Phase, recovery_time
from snspd_hack.engine import EventKind, simulate
from snspd_hack.stimulus import OpticalWaveform, build_control_diagram, photon_energy

PHOTON = photon_energy(1550e-9)


def one_photon(t=20e-9):
    return OpticalWaveform((), ((t, PHOTON),))


def test_c01_rl_recovery_matches_closed_form(dev1):
    dev = dev1.device.replace(eta=1.0)
    cir = dev1.circuit.replace(noise_rms=0.0)
    assert dev.l_k / cir.r_shunt == pytest.approx(20e-9)
    rec = simulate(dev, cir, one_photon(), (0.0, 300e-9), log_interval=25e-12)
    t_sc = rec.events_of(EventKind.SC_RECOVERED)[0].t
    log = rec.state_log
    sel = (log.t >= t_sc) & (log.t <= 300e-9)
    t, i = log.t[sel], log.i_d[sel]
    assert np.all(log.phase[sel] == Phase.SUPERCONDUCTING)
    ib = cir.i_bias
    want = ib - (ib - i[0]) * np.exp(-(t - t[0]) / 20e-9)
    assert len(t) > 1000
    assert np.max(np.abs(i - want) / want) < 0.01


def test_c02_shunt_prevents_latching(dev1):
    dev = dev1.device.replace(eta=1.0)
    assert dev1.circuit.i_bias == pytest.approx(0.9 * dev.i_c)
    shunted = simulate(dev, dev1.circuit, one_photon(), (0.0, 400e-9))
    rec_t = [e.t for e in shunted.events_of(EventKind.SC_RECOVERED)]
    assert shunted.events_of(EventKind.PHOTON_DETECTED)
    assert rec_t and rec_t[0] - 20e-9 <= 200e-9
    assert shunted.final_state.phase == Phase.SUPERCONDUCTING

    bare = simulate(dev, dev1.circuit.replace(r_shunt="absent"), one_photon(), (0.0, 10.1e-6),
                    record_trace=False, log_interval=10e-9)
    log = bare.state_log
    after = log.t > 25e-9
    assert log.t[-1] - 20e-9 >= 10e-6
    assert np.all(log.phase[after] == Phase.NORMAL)
    assert not bare.events_of(EventKind.SC_RECOVERED)


def test_c03_blinding_threshold(dev1):
    p = calibration.blinding_threshold(dev1.device, dev1.circuit)
    assert 0.7e-6 <= p <= 1.3e-6


@pytest.fixture(scope="module")
def optimum(dev1):
    res = optimizer.optimize(optimizer.Bounds(), dev1.device, dev1.circuit, budget=60, seed=0, trials=100,
                             n_clicks=10)
    assert res.feasible
    return res


def test_c04_deterministic_control_at_optimum(dev1, optimum):
    p = optimum.params
    assert p.p_blind >= 1e-6
    assert p.tau_off < recovery_time(dev1.device, dev1.circuit.i_bias, dev1.circuit.r_shunt)
    st = analysis.fake_click_determinism(dev1.device, dev1.circuit, p, n_clicks=100, trials=100, seed=1,
                                         return_stats=True)
    assert st.n_planned == 10_000
    assert (st.p_click, st.p_premature, st.p_extra) == (1.0, 0.0, 0.0)


def test_c05_rate_at_30ns_period(dev1):
    plan = [k * 30e-9 for k in range(30)]
    sc = attack.AttackScenario(tuple(plan), (), dev1.attack, (-200e-9, plan[-1] + 100e-9))
    rep = attack.run_scenario(sc, dev1.device, dev1.circuit, seed=0)
    d0 = rep.detectors[0]
    assert (d0.n_matched, d0.n_premature, d0.n_extra) == (30, 0, 0)
    assert rep.max_rate == pytest.approx(33.33e6, rel=1e-3)
    assert rep.achieved_rate == pytest.approx(33.33e6, rel=1e-2)


@pytest.fixture(scope="module")
def jitter_pair(dev1):
    real = analysis.single_photon_jitter(dev1.device.replace(eta=1.0), dev1.circuit,
                                         calibration.JITTER_PHOTONS, seed=1)
    st = analysis.fake_click_determinism(dev1.device, dev1.circuit, dev1.attack, 100, 100, seed=1,
                                         return_stats=True)
    return real, analysis.jitter_from_delays(st.delays)


def test_c06_jitter(jitter_pair):
    real, fake = jitter_pair
    assert real.fwhm == pytest.approx(160e-12, abs=5e-12)
    assert 110e-12 <= fake.fwhm <= 160e-12
    assert fake.fwhm <= real.fwhm
    assert real.tail_fraction > 0.02
    assert fake.tail_fraction < 0.005


def test_c07_afterpulses(dev1):
    ds = [1e-6, 2e-6, 5e-6, 10e-6]
    probs = [analysis.afterpulse_probability(dev1.device, dev1.circuit, dev1.attack, d, 100e-6, 1000, seed=0)
             for d in ds]
    assert probs[0] == pytest.approx(0.10, abs=0.02)
    assert probs[-1] == pytest.approx(0.16, abs=0.02)
    assert all(a <= b for a, b in zip(probs, probs[1:]))
    n_fakes = int(10e-6 // dev1.attack.period)
    per_fake = probs[-1] / n_fakes
    assert 0.0003 <= per_fake <= 0.0012


def test_c08_two_detector_control(dev1):
    rep = attack.run_scenario(attack.reference_scenario(dev1.attack), dev1.device, dev1.circuit, seed=0)
    d0, d1 = rep.detectors
    assert (d0.n_matched, d0.n_premature, d0.n_extra) == (2, 0, 0)
    assert len(d1.onset_clicks) == 1 and d1.n_extra == 0
    matched = [t for t in d0.clicks.t if any(abs(t - c) <= analysis.MATCH_WINDOW for c in (0.0, 30e-9))]
    assert len(matched) == 2

    # detector 1 receives only surges: it must never click after onset
    summ = attack.scenario_trials(attack.reference_scenario(dev1.attack), dev1.device, dev1.circuit,
                                  10_000, seed=0)
    assert summ.n_extra[1] == 0 and summ.n_premature[1] == 0
    assert summ.n_matched[0] == summ.n_planned[0] == 20_000


def test_c09_countermeasures(dev1):
    sweep = countermeasure.v2_sweep(dev1.device, dev1.circuit, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], dev1.attack)
    assert sweep.mv[0] == pytest.approx(0.2, rel=0.2)
    assert sweep.mv[-1] == pytest.approx(0.5, rel=0.2)
    assert sweep.r2 > 0.99

    dc = dev1.circuit.replace(f_hp="dc")
    shape = countermeasure.shape_discrimination(dev1.device, dc, dev1.attack, 500, seed=0)
    assert shape.auc >= 0.95
    assert shape.auc_threshold_only == pytest.approx(0.5)

    ev = countermeasure.evasion(dev1.device, dev1.circuit, dev1.attack, duty=0.05)
    assert ev.evades
    assert ev.v2_attack_mv < sweep.alarm_mv


def test_c10_numerical_hygiene(tmp_path, dev1):
    target, _ = build_control_diagram(dev1.attack, [0.0], -200e-9, 100e-9)
    w = target.with_photons([(150e-9, PHOTON)])
    dev = dev1.device.replace(eta=1.0)
    thr = analysis.default_threshold(dev, dev1.circuit)
    clicks = []
    for dt in (10e-12, 5e-12):
        rec = simulate(dev, dev1.circuit, w, (-250e-9, 300e-9), dt, seed=4)
        clicks.append(analysis.discriminate(rec.trace, thr).t)
    assert len(clicks[0]) == len(clicks[1]) == 3
    assert np.max(np.abs(clicks[0] - clicks[1])) < 5e-12

    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["attack", "-o", str(out), "--seed", "7"]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == sorted(p.name for p in outs[1].iterdir())
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
