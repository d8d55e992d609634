import math
from importlib.resources import files

import pytest

from microcav.config import ConfigError, format_config, parse_config, parse_text, split_key
from microcav.optics import FLAT

TABLE1 = files("microcav") / "data" / "table1.cfg"


def test_table1_fixture():
    cfg = parse_config(TABLE1)
    assert [e.name for e in cfg.designs] == ["r100mm", "r5mm", "r2mm", "r0p7mm"]
    d = cfg.designs[0].design
    assert d.length == pytest.approx(2.075e-3, rel=1e-15)
    assert d.mirror_1.roc is FLAT and d.mirror_2.roc == pytest.approx(0.1, rel=1e-15)
    assert d.mirror_1.transmission == pytest.approx(100e-6, rel=1e-15)
    assert d.length_uncertainty == pytest.approx(25e-6, rel=1e-15)
    assert cfg.designs[0].linewidth_rel_unc == pytest.approx(0.01, rel=1e-15)
    # finesse is stored as a linewidth: c / (2 L F)
    assert cfg.designs[0].linewidth == pytest.approx(299792458 / (2 * 2.075e-3 * 32200), rel=1e-14)
    assert cfg.atom.dipole_decay == pytest.approx(2 * math.pi * 3.03e6, rel=1e-15)


def test_empty_file_is_valid():
    cfg = parse_text("")
    assert cfg.designs == () or list(cfg.designs) == []
    assert cfg.reflow is None
    assert parse_text("# just a comment\n\n") == cfg


@pytest.mark.parametrize("key, value, si", [
    ("length_mm", "2", 2e-3), ("length_um", "250", 250e-6), ("length_m", "0.001", 1e-3),
    ("length_nm", "5e5", 5e-4),
])
def test_length_units(key, value, si):
    cfg = parse_text(f"[design.a]\n{key} = {value}\nroc2_mm = 5\n")
    assert cfg.designs[0].design.length == pytest.approx(si, rel=1e-15)


def test_other_units():
    cfg = parse_text("[reflow]\nseal_temperature_c = 20\nseal_pressure_kpa = 50\n"
                     "forming_pressure_bar = 0.7\nhole_diameter_mm = 1.6\n"
                     "[schedule]\nmax_cooling_rate_c_per_min = 3\n")
    assert cfg.reflow.seal_temperature == pytest.approx(293.15, rel=1e-15)
    assert cfg.reflow.seal_pressure == pytest.approx(5e4, rel=1e-15)
    assert cfg.reflow.forming_pressure == pytest.approx(7e4, rel=1e-15)
    assert cfg.reflow.hole_radius == pytest.approx(0.8e-3, rel=1e-15)
    assert cfg.anneal.max_cooling_rate == pytest.approx(0.05, rel=1e-15)


def test_split_key_longest_suffix():
    assert split_key("linewidth_mhz") == ("linewidth", "mhz")
    assert split_key("dipole_decay_mhz_2pi") == ("dipole_decay", "mhz_2pi")
    assert split_key("max_cooling_rate_c_per_min") == ("max_cooling_rate", "c_per_min")
    assert split_key("preset") == ("preset", None)


def test_unit_mismatch_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_text("[design.a]\nroc2_mm = 5\nlength_kg = 2\n")
    (issue,) = [i for i in info.value.issues if i.line == 3]
    assert issue.line == 3
    assert "mismatch" in issue.message and "mass" in issue.message
    assert "line 3" in str(info.value)


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as info:
        parse_text("[design.a]\nlength_mm = 1\nroc2_mm = 5\ncolour = red\n[nonsense]\nx = 1\n")
    lines = [i.line for i in info.value.issues]
    assert lines == [4, 5, 6]
    assert "unknown key" in info.value.issues[0].message
    assert "unknown section" in info.value.issues[1].message


def test_all_errors_collected_and_sorted():
    text = "[design.a]\nlength_kg = 1\nroc2_mm = abc\n[reflow]\nhole_radius = 1\nbogus_mm = 2\n"
    with pytest.raises(ConfigError) as info:
        parse_text(text)
    # the design also lacks a valid length, reported on its header line
    assert [i.line for i in info.value.issues] == [1, 2, 3, 5, 6]


def test_missing_unit_and_duplicates():
    with pytest.raises(ConfigError) as info:
        parse_text("[design.a]\nlength = 1\nroc2_mm = 5\nroc2_mm = 6\n")
    msgs = {i.line: i.message for i in info.value.issues}
    assert "needs a unit suffix" in msgs[2]
    assert "duplicate" in msgs[4]


def test_flat_roc_forms():
    for text in ("roc1 = flat", "roc1_mm = flat", "roc1 = FLAT"):
        cfg = parse_text(f"[design.a]\nlength_mm = 1\n{text}\nroc2_mm = 5\n")
        assert cfg.designs[0].design.mirror_1.roc is FLAT


def test_round_trip_is_exact():
    cfg = parse_config(TABLE1)
    again = parse_text(format_config(cfg))
    assert again == cfg
    assert format_config(again) == format_config(cfg)


def test_round_trip_with_reflow_and_lists():
    text = ("[reflow]\nhole_diameter_mm = 1.6\nforming_pressure_mbar = 700\n"
            "sweep_hole_diameter_mm = 1.0, 1.6, 2.0\nsweep_forming_pressure_mbar = 500, 800\n"
            "[instrument]\nsamples = 1001\nposition_noise_um = 20\n")
    cfg = parse_text(text)
    assert cfg.sweep_hole_radii == pytest.approx((0.5e-3, 0.8e-3, 1e-3), rel=1e-15)
    assert cfg.instrument.samples == 1001
    assert parse_text(format_config(cfg)) == cfg


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(tmp_path / "absent.cfg")
    assert info.value.issues[0].line == 0
