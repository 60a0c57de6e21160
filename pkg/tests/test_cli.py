import csv
import json

import pytest

from snspd_hack.cli import main
from snspd_hack.config import load_config


def run(tmp_path, cmd, ini="", *extra):
    cfg = tmp_path / "in.ini"
    cfg.write_text(ini)
    out = tmp_path / cmd
    return main([cmd, "-c", str(cfg), "-o", str(out), *extra]), out


def rows(path):
    return list(csv.DictReader(open(path)))


def test_simulate_photon(tmp_path):
    code, out = run(tmp_path, "simulate", "[device]\neta = 1\n")
    assert code == 0
    assert len(rows(out / "photon_clicks.csv")) == 1
    assert (out / "manifest.ini").exists()


def test_simulate_attack_shows_onset_then_fake(tmp_path):
    code, out = run(tmp_path, "simulate", "[simulate]\nmode = attack\n")
    assert code == 0
    t = [float(r["t_cross_s"]) for r in rows(out / "attack_clicks.csv")]
    assert len(t) == 2
    assert t[0] == pytest.approx(-200e-9, abs=2e-9)
    assert t[1] == pytest.approx(0.0, abs=2e-9)


def test_manifest_reproduces_run(tmp_path):
    code, out = run(tmp_path, "simulate", "[run]\nseed = 9\n")
    code2 = main(["simulate", "-c", str(out / "manifest.ini"), "-o", str(tmp_path / "again")])
    assert code == code2 == 0
    assert (out / "photon_trace.csv").read_bytes() == (tmp_path / "again" / "photon_trace.csv").read_bytes()
    assert load_config(out / "manifest.ini").seed == 9


def test_attack_command(tmp_path):
    code, out = run(tmp_path, "attack", "[scenario]\ntrials = 20\n")
    assert code == 0
    rep = json.loads((out / "attack_report.json").read_text())
    assert rep["detectors"][0]["n_matched"] == 2
    assert json.loads((out / "trials.json").read_text())["trials"] == 20


def test_failed_attack_exits_2(tmp_path):
    code, out = run(tmp_path, "attack", "[attack]\ntau_off = 2 ns\ntau_rearm = 28 ns\n")
    assert code == 2
    assert (out / "manifest.ini").exists()


def test_config_error_exits_1(tmp_path, capsys):
    code, _ = run(tmp_path, "attack", "[attack]\ntau_off = 20\n")
    assert code == 1
    assert "tau_off" in capsys.readouterr().err
    code, _ = run(tmp_path, "attack", "[scenario]\nclicks_det0 = 0 ns, 25 ns\n")
    assert code == 1


def test_preset_and_seed_flags(tmp_path):
    code, out = run(tmp_path, "simulate", "[run]\nseed = 1\n", "--preset", "device3", "--seed", "5")
    assert code == 0
    cfg = load_config(out / "manifest.ini")
    assert (cfg.preset, cfg.seed) == ("device3", 5)


def test_afterpulse_command(tmp_path):
    code, out = run(tmp_path, "afterpulse", "[afterpulse]\nblind_durations = 1 us, 10 us\ntrials = 100\n")
    assert code == 0
    p = [float(r["probability"]) for r in rows(out / "afterpulse.csv")]
    assert len(p) == 2 and p[0] <= p[1]


def test_jitter_command(tmp_path):
    code, out = run(tmp_path, "jitter", "[jitter]\nn_photons = 100\nn_fakes = 10\ntrials = 3\n")
    assert code == 0
    s = json.loads((out / "jitter.json").read_text())
    assert s["fake"]["counts"] == 30


def test_optimize_infeasible_exits_2(tmp_path):
    ini = ("[run]\ndt = 25 ps\n[optimizer]\np_blind_bounds = 0.05 uW, 0.1 uW\ntau_off_bounds = 20 ns, 21 ns\n"
           "tau_rearm_bounds = 10 ns, 11 ns\nbudget = 27\nn_clicks = 2\n")
    code, out = run(tmp_path, "optimize", ini)
    assert code == 2
    assert json.loads((out / "best.json").read_text())["feasible"] is False


def test_presets_command(tmp_path, capsys):
    code, out = run(tmp_path, "presets")
    assert code == 0
    data = json.loads((out / "presets.json").read_text())
    assert [d["name"] for d in data] == ["device1", "device2", "device3", "device4", "device5"]
    assert data[0]["provenance"]["circuit"]["noise_rms"] == "calibrated"


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as e:
        main(["attack", "--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--config", "--out", "--preset", "--seed", "--jobs"):
        assert flag in text
