import json

import numpy as np
import pytest

from snspd_hack import analysis
from snspd_hack.device import Phase
from snspd_hack.engine import NEVER, EventKind, export_record, fires, simulate, simulate_pair
from snspd_hack.errors import ConfigError
from snspd_hack.stimulus import OpticalWaveform, photon_energy

E1550 = photon_energy(1550e-9)


def one_photon(t=20e-9):
    return OpticalWaveform((), ((t, E1550),))


def test_dark_input_is_flat(dev1):
    rec = simulate(dev1.device, dev1.circuit.replace(noise_rms=0.0), OpticalWaveform(), (0.0, 100e-9))
    assert rec.events == ()
    assert np.all(rec.trace.samples == 0.0)


def test_single_photon_click_and_recovery(dev1):
    d = dev1.device.replace(eta=1.0)
    rec = simulate(d, dev1.circuit, one_photon(), (0.0, 300e-9), seed=3)
    kinds = [e.kind for e in rec.events]
    assert kinds.count(EventKind.PHOTON_DETECTED) == 1
    rec_t = [e.t for e in rec.events_of(EventKind.SC_RECOVERED)]
    assert rec_t and rec_t[0] - 20e-9 < 200e-9
    assert len(analysis.discriminate(rec.trace, analysis.default_threshold(d, dev1.circuit)).t) == 1


def test_blinded_wire_ignores_photons(dev1):
    w = OpticalWaveform(((0.0, 500e-9, 10e-6),), ((300e-9, E1550),))
    rec = simulate(dev1.device.replace(eta=1.0), dev1.circuit, w, (0.0, 500e-9), thresholds=NEVER)
    assert rec.events_of(EventKind.BLIND_ONSET)
    assert rec.events_of(EventKind.PHOTON_IGNORED)
    assert not rec.events_of(EventKind.PHOTON_DETECTED)
    assert rec.final_state.phase == Phase.NORMAL


def test_blinding_holds_wire_resistive_throughout(dev1):
    w = OpticalWaveform(((0.0, 2e-6, 2e-6),))
    rec = simulate(dev1.device, dev1.circuit, w, (0.0, 2e-6), dt=2e-12, thresholds=NEVER)
    log = rec.state_log
    after = log.t > 100e-9
    assert np.all(log.phase[after] == Phase.NORMAL)
    assert np.all(log.e_hs[after] > dev1.device.e_off)


def test_same_seed_same_record(dev1):
    w = one_photon()
    a = simulate(dev1.device, dev1.circuit, w, (0.0, 200e-9), seed=11)
    b = simulate(dev1.device, dev1.circuit, w, (0.0, 200e-9), seed=11)
    c = simulate(dev1.device, dev1.circuit, w, (0.0, 200e-9), seed=12)
    assert a == b
    assert a.trace != c.trace


def test_pair_seed_split(dev1):
    w = one_photon()
    a, b = simulate_pair([dev1.device] * 2, [dev1.circuit] * 2, [w, w], (0.0, 100e-9), seed=5)
    assert a.trace != b.trace
    a2, b2 = simulate_pair([dev1.device] * 2, [dev1.circuit] * 2, [w, w], (0.0, 100e-9), seed=5,
                           split_seed=False)
    assert a2 == b2


def test_fires_agrees_with_full_run(dev1):
    # a run whose hazard does not fire must match the noise-free base exactly
    dev = dev1.device.replace(ap_rate=20.0)
    w = OpticalWaveform(((0.0, 1e-6, 10e-6),))
    span = (0.0, 2e-6)
    quiet = dev1.circuit.replace(noise_rms=0.0)
    base = simulate(dev, quiet, w, span, thresholds=NEVER, light_thresholds=NEVER, log_interval=0)
    seen = set()
    for s in range(12):
        full = simulate(dev, quiet, w, span, seed=[s, 0], log_interval=0)
        f = fires(dev, base, [s, 0], span[1] - span[0])
        seen.add(f)
        if not f:
            assert full.events == base.events
            assert full.trace == base.trace
        else:
            assert full.events != base.events
    assert seen == {True, False}


def test_bad_span_and_dt(dev1):
    with pytest.raises(ConfigError):
        simulate(dev1.device, dev1.circuit, OpticalWaveform(), (1.0, 0.0))
    with pytest.raises(ConfigError):
        simulate(dev1.device, dev1.circuit, OpticalWaveform(), (0.0, 1e-7), dt=1e-9)


def test_export(tmp_path, dev1):
    rec = simulate(dev1.device, dev1.circuit, one_photon(), (0.0, 100e-9), seed=2)
    paths = export_record(rec, tmp_path, "x", {"preset": "device1"})
    assert {p.name for p in paths} == {"x_trace.csv", "x_raw.csv", "x_events.csv", "x_manifest.json"}
    m = json.loads((tmp_path / "x_manifest.json").read_text())
    assert m["seed"] == 2 and m["preset"] == "device1"
