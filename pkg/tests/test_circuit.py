import math

import numpy as np
import pytest

from snspd_hack.circuit import (AnalogTrace, CircuitParams, amplify, dc_monitor, noise_gain,
                                noise_lag_correlation, output_noise, raw_readout_voltage,
                                reflection_coefficient, reflection_inject)
from snspd_hack.engine import StateLog
from snspd_hack.errors import ConfigError, ModelDomainError

C = CircuitParams()
DT = 25e-12


def test_readout_levels():
    assert raw_readout_voltage(C.i_bias, 0.0, C) == 0.0
    # full expulsion: 10 uA through 50 ohm
    assert raw_readout_voltage(0.0, 0.0, C) == pytest.approx(0.5e-3)
    open_ = C.replace(r_shunt="absent")
    assert raw_readout_voltage(5e-6, 1000.0, open_) == pytest.approx(5e-3)


def test_fake_pulse_fraction_closed_form():
    # current recovered for one RL time constant: 1 - 1/e of the full level
    i = C.i_bias * (1 - math.exp(-1.0))
    frac = 1 - raw_readout_voltage(i, 0.0, C) / raw_readout_voltage(0.0, 0.0, C)
    assert frac == pytest.approx(1 - math.exp(-1.0))
    assert raw_readout_voltage(i, 0.0, C) == pytest.approx(0.5e-3 * math.exp(-1.0))


def test_zero_input_zero_output():
    out = amplify(AnalogTrace(0.0, DT, np.zeros(1000)), C)
    assert np.all(out.samples == 0.0)


def step(n=8000, at=400):
    x = np.zeros(n)
    x[at:] = 1e-4
    return AnalogTrace(0.0, DT, x)


def test_dc_coupled_step_plateaus():
    dc = C.replace(f_hp="dc")
    y = amplify(step(), dc).samples
    assert y[-1] == pytest.approx(1e-4 * dc.gain, rel=1e-6)
    assert y[-1000:].std() < 1e-9 * dc.gain


def test_ac_coupled_step_decays_with_high_pass_constant():
    one = C.replace(hp_order=1)
    y = amplify(step(), one).samples
    t = np.arange(len(y)) * DT - 400 * DT
    tau = 1 / (2 * math.pi * one.f_hp)
    assert tau == pytest.approx(15.9e-9, rel=1e-2)
    # well after the low-pass settles the response is exp(-t/tau)
    for t_k in (20e-9, 40e-9, 80e-9):
        k = int(round(t_k / DT)) + 400
        assert y[k] / (1e-4 * one.gain) == pytest.approx(math.exp(-t[k] / tau), rel=0.03)


def test_undersampling_rejected():
    with pytest.raises(ConfigError):
        amplify(AnalogTrace(0.0, 1e-9, np.zeros(10)), C)


def test_noise_is_unit_rms_with_predicted_correlation():
    z = output_noise(400_000, C, DT, np.random.default_rng(1))
    assert z.std() == pytest.approx(1.0, rel=0.02)
    r1 = np.corrcoef(z[:-1], z[1:])[0, 1]
    assert r1 == pytest.approx(noise_lag_correlation(C, DT), abs=0.01)
    assert noise_gain(C, DT) > 0


def test_noise_requires_rng():
    with pytest.raises(ConfigError):
        amplify(AnalogTrace(0.0, DT, np.zeros(10)), C.replace(noise_rms=1e-3))


def test_reflection():
    assert reflection_coefficient(C) == 0.0
    c25 = C.replace(r_shunt=25.0)
    assert reflection_coefficient(c25) == pytest.approx(-1 / 3)
    x = np.zeros(2000)
    x[100] = 1.0
    out = reflection_inject(AnalogTrace(0.0, DT, x), c25).samples
    lag = int(round(10e-9 / DT))
    assert out[100 + lag] == pytest.approx(-1 / 3)
    assert np.count_nonzero(out) == 1
    flat = reflection_inject(AnalogTrace(0.0, DT, x), c25.replace(line_delay=0.0)).samples
    assert np.all(flat == 0)


def test_dc_monitor_fully_blinded_bound():
    n = 100
    log = StateLog(np.arange(n) * 1e-9, np.zeros(n), np.zeros(n), np.ones(n), np.zeros(n), np.zeros(n))
    assert dc_monitor(log, C, 1e-6) == pytest.approx(0.5)
    assert dc_monitor(log, C, 1e-6, quiescent_mv=0.2) == pytest.approx(0.7)
    assert dc_monitor(log, C, 1e-6, resolution_mv=0.3) == pytest.approx(0.6)
    with pytest.raises(ModelDomainError):
        dc_monitor(StateLog(*(np.zeros(0),) * 6), C, 1e-6)


def test_trace_csv_round_trip(tmp_path):
    tr = AnalogTrace(-2.5e-7, DT, np.random.default_rng(0).standard_normal(500))
    tr.to_csv(tmp_path / "t.csv")
    assert AnalogTrace.from_csv(tmp_path / "t.csv") == tr


def test_trace_rejects_nonfinite():
    with pytest.raises(ModelDomainError):
        AnalogTrace(0.0, DT, np.array([0.0, np.nan]))


@pytest.mark.parametrize("bad", [dict(r_shunt=-1.0), dict(f_hp="ac"), dict(f_hp=1e9), dict(hp_order=0),
                                 dict(noise_rms=-1.0)])
def test_invalid_circuit(bad):
    with pytest.raises(ConfigError):
        CircuitParams(**bad)
