import json
import subprocess
import sys

import numpy as np
import pytest

from nfsns.cli import EX_DATAERR, EX_NOINPUT, main
from nfsns.io import read_channel, read_header, read_pgm

SMALL = {
    "geometry": {"type": "uca", "n_elements": 64, "radius_m": 0.25, "height_m": 1.0},
    "grid": {"f_start_hz": 16e9, "f_stop_hz": 20e9, "n_freq": 81},
    "mode": "nf-sns",
    "paths": [
        {"azimuth_deg": 15.0, "elevation_deg": 10.0, "distance_m": 2.0, "delay_s": 6e-9, "gain_re": 1.0, "gain_im": 0.0},
        {"azimuth_deg": -95.0, "elevation_deg": 20.0, "distance_m": 3.5, "delay_s": 11e-9, "gain_re": 0.0,
         "gain_im": 0.5, "sns": {"center_index": 40, "width": 32, "taper_len": 4}},
        {"azimuth_deg": 140.0, "elevation_deg": 5.0, "distance_m": "far_field", "delay_s": 15.5e-9,
         "gain_re": -0.3, "gain_im": 0.0},
    ],
    "snr_db": 30.0,
    "seed": 3,
}


@pytest.fixture
def scene(tmp_path):
    cfg = tmp_path / "scene.json"
    cfg.write_text(json.dumps(SMALL))
    return tmp_path, cfg


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_writes_channel_and_truth(scene, capsys):
    d, cfg = scene
    assert run("synth", "--config", cfg, "-o", d / "ch.elaa") == 0
    assert (d / "ch.paths.json").exists()
    h = read_header(d / "ch.elaa")
    assert (h.m_elements, h.n_freq) == (64, 81)
    assert run("info", d / "ch.elaa") == 0
    out = capsys.readouterr().out
    assert "m_elements: 64\n" in out and "payload_bytes: 82944\n" in out


def test_modes_change_payload_not_header(scene):
    d, cfg = scene
    run("synth", "--config", cfg, "-o", d / "a.elaa", "--mode", "FF")
    run("synth", "--config", cfg, "-o", d / "b.elaa", "--mode", "nf-sns")
    a, b = (d / "a.elaa").read_bytes(), (d / "b.elaa").read_bytes()
    assert a[:36] == b[:36] and a[36:] != b[36:]


def test_empty_scene_has_zero_energy(tmp_path):
    cfg = dict(SMALL, paths=[])
    del cfg["snr_db"]
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("synth", "--config", tmp_path / "c.json", "-o", tmp_path / "z.elaa") == 0
    assert read_channel(tmp_path / "z.elaa").energy == 0.0


def test_bad_mode_is_a_usage_error(scene, capsys):
    d, cfg = scene
    with pytest.raises(SystemExit) as exc:
        run("synth", "--config", cfg, "-o", d / "x.elaa", "--mode", "spherical")
    assert exc.value.code == 2
    assert "unknown mode" in capsys.readouterr().err


def test_invalid_config_is_a_data_error(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"grid": SMALL["grid"]}))
    assert run("synth", "--config", tmp_path / "c.json", "-o", tmp_path / "x.elaa") == EX_DATAERR
    assert "geometry" in capsys.readouterr().err
    (tmp_path / "d.json").write_text("{not json")
    assert run("synth", "--config", tmp_path / "d.json", "-o", tmp_path / "x.elaa") == EX_DATAERR


def test_missing_input(tmp_path):
    assert run("info", tmp_path / "nope.elaa") == EX_NOINPUT


def test_ones_with_stationary_equals_sns(scene):
    d, cfg = scene
    run("synth", "--config", cfg, "-o", d / "ch.elaa")
    doc = json.loads((d / "ch.paths.json").read_text())
    for p in doc["paths"]:
        p["sns"] = "ones"
    (d / "ones.json").write_text(json.dumps(doc))
    run("reconstruct", d / "ones.json", "--mode", "nf-stationary", "-o", d / "st.elaa")
    run("reconstruct", d / "ones.json", "--mode", "nf-sns", "-o", d / "sns.elaa")
    assert (d / "st.elaa").read_bytes() == (d / "sns.elaa").read_bytes()


def test_cir_exports(scene):
    d, cfg = scene
    run("synth", "--config", cfg, "-o", d / "ch.elaa")
    assert run("cir", d / "ch.elaa", "--pad", 2, "--window", "hamming", "--floor-db", -40,
               "--csv", d / "h.csv", "--pgm", d / "h.pgm", "--pdp", d / "pdp.csv") == 0
    img = read_pgm(d / "h.pgm")
    assert img.shape == (64, 162)
    assert img.max() == 255
    rows = (d / "h.csv").read_text().split("\n")
    assert len(rows) == 65 and rows[-1] == ""
    assert len(rows[0].split(",")) == 162
    assert b"\r" not in (d / "h.csv").read_bytes()
    assert (d / "pdp.csv").read_text().startswith("delay_s,power_db\n")


def test_cir_needs_an_output(scene):
    d, cfg = scene
    run("synth", "--config", cfg, "-o", d / "ch.elaa")
    assert run("cir", d / "ch.elaa") == 2


def test_compare_dimension_mismatch(scene, tmp_path):
    d, cfg = scene
    run("synth", "--config", cfg, "-o", d / "a.elaa")
    other = dict(SMALL, geometry=dict(SMALL["geometry"], n_elements=48))
    (d / "o.json").write_text(json.dumps(other))
    assert run("synth", "--config", d / "o.json", "-o", d / "b.elaa") == 0
    assert run("compare", d / "a.elaa", d / "b.elaa") == EX_DATAERR


def test_dump_config_lists_every_default(capsys):
    assert run("estimate", "--dump-config") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["estimator"]["dynamic_range_db"] == 30.0
    assert doc["estimator"]["max_paths"] == 100
    assert doc["estimator"]["max_refine_iter"] == 20
    assert doc["estimator"]["sns_smooth_window"] == 5
    assert doc["scan"]["n_distances"] == 10


def test_pipeline_and_determinism(scene, capsys):
    d, cfg = scene
    for tag in ("1", "2"):
        assert run("synth", "--config", cfg, "-o", d / f"ch{tag}.elaa") == 0
        assert run("estimate", d / f"ch{tag}.elaa", "--geometry", d / f"ch{tag}.paths.json",
                   "-o", d / f"est{tag}.json") == 0
        assert run("reconstruct", d / f"est{tag}.json", "-o", d / f"rec{tag}.elaa") == 0
        assert run("cir", d / f"rec{tag}.elaa", "--pgm", d / f"h{tag}.pgm") == 0
    for name in ("ch{}.elaa", "est{}.json", "rec{}.elaa", "h{}.pgm"):
        assert (d / name.format(1)).read_bytes() == (d / name.format(2)).read_bytes(), name
    capsys.readouterr()
    assert run("compare", d / "est1.json", d / "ch1.paths.json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_matched"] == 3 and report["nmse_db"] < -15
    assert run("compare", d / "rec1.elaa", d / "ch1.elaa") == 0
    assert json.loads(capsys.readouterr().out)["nmse_db"] < -15


def test_module_entry_point(scene):
    d, cfg = scene
    run("synth", "--config", cfg, "-o", d / "ch.elaa")
    out = subprocess.run([sys.executable, "-m", "nfsns", "info", str(d / "ch.elaa")], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("magic: ELAACFR1\n")
