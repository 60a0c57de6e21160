import pytest

from snspd_hack.config import RunConfig, format_quantity, load_config, parse_quantity, write_manifest
from snspd_hack.errors import ConfigError
from snspd_hack.presets import preset


@pytest.mark.parametrize("text,unit,want", [
    ("20 ns", "s", 20e-9), ("100 uW", "W", 1e-4), ("-30 dBm", "W", 1e-6), ("1 uH", "H", 1e-6),
    ("50 ohm", "ohm", 50.0), ("10 MHz", "Hz", 1e7), ("0.35 mV", "V", 0.35e-3), ("3", "1", 3.0),
    ("56 dB", "dB", 56.0), ("25ps", "s", 25e-12),
])
def test_parse_quantity(text, unit, want):
    assert parse_quantity(text, unit) == pytest.approx(want, rel=1e-12)


def test_exact_negative_prefix():
    assert parse_quantity("100 uW", "W") == 100 / 1e6


@pytest.mark.parametrize("text,unit", [("20", "s"), ("20 nW", "s"), ("3 ns", "1"), ("abc", "s"), ("5", "dB")])
def test_parse_quantity_rejects(text, unit):
    with pytest.raises(ConfigError):
        parse_quantity(text, unit)


def test_format_round_trip():
    for v, u in [(2.5e-14, "J"), (1e-4, "W"), (0.1, "1"), (56.0, "dB")]:
        assert parse_quantity(format_quantity(v, u), u) == v


def test_defaults_come_from_preset():
    cfg = load_config(text="")
    p = preset("device1")
    assert (cfg.device, cfg.circuit, cfg.attack) == (p.device, p.circuit, p.attack)


def test_overrides_and_blocks():
    cfg = load_config(text="[attack]\ntau_off = 25 ns\n[circuit]\nr_shunt = absent\nf_hp = dc\n"
                           "[scenario]\nclicks_det0 = 0 ns, 40 ns\n[run]\nseed = 7\n")
    assert cfg.attack.tau_off == 25e-9
    assert cfg.circuit.r_shunt is None and cfg.circuit.dc_coupled
    assert cfg.block("scenario")["clicks_det0"] == [0.0, 40e-9]
    assert cfg.seed == 7


def test_error_names_file_line_and_field(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[run]\nseed = 1\n\n[attack]\ntau_off = 20\n")
    with pytest.raises(ConfigError, match=r"bad.ini:5: \[attack\] tau_off"):
        load_config(p)


@pytest.mark.parametrize("text,match", [
    ("[nope]\n", "unknown section"), ("[attack]\nfoo = 1 s\n", "unknown field"),
    ("[run]\npreset = device9\n", "device1, device2"), ("[run]\ndt = 1 ns\n", "dt"),
    ("[attack]\ntau_off = -1 ns\n", "tau_off"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(text=text)


def test_empty_preset_uses_bare_defaults():
    cfg = load_config(text="[run]\npreset =\n")
    assert cfg.preset is None and cfg.circuit.noise_rms == 0.0


def test_manifest_is_a_runnable_config(tmp_path):
    cfg = load_config(text="[attack]\np_blind = 2.05 uW\n[run]\nseed = 3\n", command="attack")
    m = write_manifest(cfg, tmp_path, [tmp_path / "a.csv"])
    back = load_config(m)
    assert back.to_ini() == cfg.to_ini()
    assert isinstance(back, RunConfig) and back.attack.p_blind == 2.05e-6
    assert "# outputs: a.csv" in m.read_text()
