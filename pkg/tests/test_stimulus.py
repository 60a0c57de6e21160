import numpy as np
import pytest

from snspd_hack.errors import ModelDomainError, PlanError
from snspd_hack.stimulus import (AttackParams, OpticalWaveform, build_control_diagram, check_plan,
                                 compile_waveform, photon_energy, photon_train, power_at, sample_power)

A = AttackParams()


def test_photon_energy_1550():
    assert photon_energy(1550e-9) == pytest.approx(1.282e-19, rel=1e-3)


def test_photon_train_statistics():
    assert photon_train(0.0, 1e-3, rng=np.random.default_rng(0)).photons == ()
    counts = [len(photon_train(1e6, 1e-3, rng=np.random.default_rng(s)).photons) for s in range(20)]
    assert abs(np.mean(counts) - 1000) < 5 * np.sqrt(1000 / 20)
    w = photon_train(1e6, 1e-4, rng=np.random.default_rng(3), t0=1e-6)
    t = w.photon_times
    assert np.all(np.diff(t) >= 0) and t.min() >= 1e-6 and t.max() < 1e-6 + 1e-4


def test_reference_plan_diagram():
    target, companion = build_control_diagram(A, [0.0, 30e-9], -200e-9, 100e-9)
    want = [(-200e-9, -20e-9, 10e-6), (-20e-9, 0.0, A.p_drop), (0.0, 10e-9, 10e-6),
            (10e-9, 30e-9, A.p_drop), (30e-9, 100e-9, 10e-6)]
    assert len(target.segments) == len(want)
    for got, exp in zip(target.segments, want):
        assert got == pytest.approx(exp, rel=1e-9, abs=1e-18)
    assert companion.segments[1][2] == pytest.approx(10e-6 * 10 ** 0.3)
    assert A.period == pytest.approx(30e-9)
    assert 1 / A.period == pytest.approx(33.3e6, abs=0.05e6)


def test_empty_plan_is_constant():
    w, c = build_control_diagram(A, [], 0.0, 1e-6)
    assert w.segments == ((0.0, 1e-6, 10e-6),) == c.segments


def test_drop_arithmetic():
    assert A.p_drop == pytest.approx(0.1e-6)
    assert A.replace(tau_off=50e-9, tau_rearm=50e-9).period == pytest.approx(100e-9)


def test_power_lookup_half_open():
    w = OpticalWaveform(((0.0, 1.0, 2.0), (1.0, 2.0, 3.0)))
    assert power_at(w, -0.5) == 0.0
    assert power_at(w, 0.5) == 2.0
    assert power_at(w, 1.0) == 3.0
    assert power_at(w, 2.0) == 0.0
    t = np.array([-0.5, 0.5, 1.0, 2.0, 1.5])
    assert sample_power(w, t).tolist() == [0.0, 2.0, 3.0, 0.0, 3.0]


def test_plan_errors():
    with pytest.raises(PlanError, match="spacing"):
        check_plan(A, [0.0, 25e-9], -200e-9, 100e-9)
    with pytest.raises(PlanError, match="settle"):
        check_plan(A, [-100e-9], -200e-9, 100e-9)
    with pytest.raises(PlanError):
        check_plan(A, [100e-9], -200e-9, 100e-9)
    assert check_plan(A, [30e-9, 0.0], -200e-9, 100e-9) == [0.0, 30e-9]


def test_compile_clips_windows():
    w = compile_waveform(1.0, 0.0, 10.0, [(-1.0, 1.0, 0.5), (9.0, 12.0, 2.0)])
    assert w.segments == ((0.0, 1.0, 0.5), (1.0, 9.0, 1.0), (9.0, 10.0, 2.0))


@pytest.mark.parametrize("segs", [((0.0, 1.0, -1.0),), ((1.0, 0.0, 1.0),), ((0.0, 2.0, 1.0), (1.0, 3.0, 1.0)),
                                  ((0.0, np.inf, 1.0),)])
def test_invalid_waveforms(segs):
    with pytest.raises(ModelDomainError):
        OpticalWaveform(segs)


def test_invalid_attack_params():
    for bad in (dict(p_blind=0.0), dict(tau_off=0.0), dict(drop_db=0.0), dict(surge_db=-1.0)):
        with pytest.raises(ModelDomainError):
            AttackParams(**bad)


def test_waveform_csv_round_trip(tmp_path):
    w = OpticalWaveform(((0.0, 1e-7, 1e-5), (1e-7, 3e-7, 1e-7)), ((5e-8, 1.28e-19),))
    w.to_csv(tmp_path / "w.csv")
    w.photons_to_csv(tmp_path / "p.csv")
    assert OpticalWaveform.from_csv(tmp_path / "w.csv", tmp_path / "p.csv") == w
