"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with pytest (the lines appear in the -v log) or directly:

    python3 tests/test_acceptance.py
"""

from __future__ import annotations

import functools
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from nfsns import (
    ArrayGeometry,
    ChannelTensor,
    FrequencyGrid,
    Gates,
    PathParams,
    SynthesisMode,
    add_noise,
    cfr_to_cir,
    estimate_paths,
    fraunhofer_distance,
    match_paths,
    nearfield_manifold,
    nmse_db,
    refine_path,
    coarse_scan,
    ScanGrid,
    synthesize_cfr,
    vr_jaccard,
)
from nfsns.cli import main as cli
from nfsns.io import read_header, read_pgm
from nfsns.scenarios import desk_geometry, desk_grid, multipath_scene
from nfsns.transform import cfr_to_cir_direct

SNR_DB = 30.0


def report(number: int, ok: bool, detail: str, seconds: float) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail} ({seconds:.1f} s)"
    print(line, flush=True)


def criterion(number: int, budget_s: float | None = None):
    """Wrap a check returning (ok, detail); time it and report one line."""

    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            ok, detail = fn()
            dt = time.perf_counter() - t0
            if budget_s is not None and dt > budget_s:
                ok, detail = False, f"{detail}; over the {budget_s:.0f} s budget"
            report(number, ok, detail, dt)
            return ok, detail

        run.number = number
        return run

    return wrap


# -- shared scenes (each estimated once per session) -------------------------


@functools.lru_cache(maxsize=None)
def desk_scene(sns: bool):
    geom, grid = desk_geometry(), desk_grid()
    truth = multipath_scene(geom.n_elements, grid, sns=sns)
    clean = synthesize_cfr(geom, grid, truth, SynthesisMode.NF_SNS)
    noisy = add_noise(clean, SNR_DB, seed=1)
    t0 = time.perf_counter()
    est = estimate_paths(noisy, geom)
    return geom, grid, truth, clean, noisy, est, time.perf_counter() - t0


# -- criteria -------------------------------------------------------------------


@criterion(1)
def check_fraunhofer():
    d = fraunhofer_distance(1.0, 20e9)
    return abs(d - 133.4) <= 0.01 * 133.4, f"fraunhofer_distance(1 m, 20 GHz) = {d:.2f} m (target 133.4 m +-1%)"


@criterion(2, budget_s=30)
def check_paper_replica():
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        cfg = {
            "geometry": {"type": "uca", "n_elements": 720, "radius_m": 0.5, "height_m": 1.25},
            "grid": {"f_start_hz": 16e9, "f_stop_hz": 20e9, "n_freq": 2001},
            "mode": "nf-sns",
            "scene": {"name": "multipath", "sns": True},
        }
        (d / "paper.json").write_text(json.dumps(cfg))
        rc = cli(["synth", "--config", str(d / "paper.json"), "-o", str(d / "paper.elaa")])
        size = (d / "paper.elaa").stat().st_size
        h = read_header(d / "paper.elaa")
        rc2 = cli(["cir", str(d / "paper.elaa"), "--pgm", str(d / "paper.pgm")])
        img = read_pgm(d / "paper.pgm")
    ok = rc == 0 and rc2 == 0 and (h.m_elements, h.n_freq) == (720, 2001)
    ok = ok and h.payload_bytes == 23_051_520 and size == 36 + 23_051_520 and img.shape[0] == 720
    return ok, f"{h.m_elements}x{h.n_freq} tensor, payload {size - 36} bytes, heatmap {img.shape[0]}x{img.shape[1]}"


@criterion(3, budget_s=60)
def check_transform_oracle():
    rng = np.random.Generator(np.random.PCG64(2024))
    worst = worst_parseval = 0.0
    for _ in range(200):
        m, n = int(rng.integers(1, 65)), int(rng.integers(2, 513))
        data = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        t = ChannelTensor(data, FrequencyGrid(16e9, 20e6, n))
        window = ("rect", "hann", "hamming")[int(rng.integers(3))] if n > 2 else "rect"
        pad = int(rng.integers(1, 5))
        fast = cfr_to_cir(t, window, pad).data
        slow = cfr_to_cir_direct(t, window, pad).data
        worst = max(worst, np.linalg.norm(fast - slow) / np.linalg.norm(slow))
        h = cfr_to_cir(t, "rect", 1).data
        lhs, rhs = np.sum(np.abs(h) ** 2), np.sum(np.abs(data) ** 2) / n
        worst_parseval = max(worst_parseval, abs(lhs - rhs) / rhs)
    ok = worst < 1e-10 and worst_parseval < 1e-10
    return ok, f"fast vs direct worst rel. error {worst:.1e}, Parseval worst {worst_parseval:.1e} (limit 1e-10)"


@criterion(4, budget_s=120)
def check_single_path():
    geom, grid = desk_geometry(), desk_grid()
    truth = PathParams(37.3, 0.0, 6.7, 22.137e-9, 0.8 * np.exp(0.4j))
    t = synthesize_cfr(geom, grid, [truth], SynthesisMode.NF_SNS)
    seed = coarse_scan(t, geom, ScanGrid())[0]
    p = refine_path(t, seed, geom=geom).path
    bin_ = 0.25e-9
    e_az, e_el = abs(p.azimuth - truth.azimuth), abs(p.elevation - truth.elevation)
    e_tau = abs(p.delay - truth.delay) / bin_
    e_d = abs(p.distance / truth.distance - 1)
    ok = e_az < 0.01 and e_el < 0.01 and e_tau < 1e-3 and e_d < 5e-3
    return ok, f"errors az {e_az:.1e} deg, el {e_el:.1e} deg, delay {e_tau:.1e} bin, distance {e_d:.1e} rel."


@criterion(5, budget_s=600)
def check_multipath():
    geom, grid, truth, _, _, est, dt = desk_scene(False)
    gates = Gates(azimuth_deg=1.0, elevation_deg=5.0, delay_s=grid.delay_resolution, log10_distance=0.3)
    m = match_paths([e.path for e in est], truth, gates)
    spurious = len(m.unmatched_estimates)
    ok = m.n_matched >= 9 and spurious == 0
    return ok, f"{m.n_matched}/10 matched, {spurious} spurious of {len(est)} estimates (estimation {dt:.0f} s)"


@criterion(6, budget_s=300)
def check_sns():
    geom, grid, truth, _, _, est, dt = desk_scene(True)
    m = match_paths([e.path for e in est], truth, Gates.for_grid(grid))
    jac, stat = [], []
    for i, j, _ in m.pairs:
        s_true = truth[j].sns
        if s_true is None:
            stat.append(float(np.mean(est[i].path.sns)))
        elif np.count_nonzero(s_true) >= 0.25 * geom.n_elements:
            jac.append(vr_jaccard(est[i].path.sns, s_true))
    n_arcs = sum(p.sns is not None for p in truth)
    ok = len(jac) == n_arcs and min(jac) >= 0.9 and min(stat) >= 0.95
    return ok, (
        f"{len(jac)}/{n_arcs} arcs recovered, min Jaccard {min(jac, default=0):.3f}; "
        f"min stationary mean SnS {min(stat, default=0):.3f}"
    )


@criterion(7)
def check_mode_algebra():
    geom, grid = desk_geometry(), desk_grid()
    paths = multipath_scene(geom.n_elements, grid, sns=False)
    ones = [PathParams(p.azimuth, p.elevation, p.distance, p.delay, p.gain, np.ones(geom.n_elements)) for p in paths]
    collapse = (
        synthesize_cfr(geom, grid, ones, SynthesisMode.NF_SNS).data.tobytes()
        == synthesize_cfr(geom, grid, paths, SynthesisMode.NF_STATIONARY).data.tobytes()
    )
    moved = [PathParams(p.azimuth, p.elevation, 2.0 * p.distance, p.delay, p.gain) for p in paths]
    ff = (
        synthesize_cfr(geom, grid, paths, SynthesisMode.FF).data.tobytes()
        == synthesize_cfr(geom, grid, moved, SynthesisMode.FF).data.tobytes()
    )
    # A u {b}: adding one path's tensor to the rest is bit-exact
    linear = all(
        synthesize_cfr(geom, grid, paths, mode).data.tobytes()
        == (synthesize_cfr(geom, grid, paths[:-1], mode).data + synthesize_cfr(geom, grid, paths[-1:], mode).data).tobytes()
        for mode in SynthesisMode
    )
    ok = collapse and ff and linear
    return ok, f"ones-collapse {collapse}, FF distance-free {ff}, linearity bit-exact {linear}"


@criterion(8, budget_s=900)
def check_reconstruction():
    geom, grid, truth, clean, noisy, est, dt = desk_scene(True)
    paths = [e.path for e in est]
    nf = nmse_db(synthesize_cfr(geom, grid, paths, SynthesisMode.NF_SNS), clean)
    ff = nmse_db(synthesize_cfr(geom, grid, paths, SynthesisMode.FF), clean)
    nf_noisy = nmse_db(synthesize_cfr(geom, grid, paths, SynthesisMode.NF_SNS), noisy)
    ok = nf <= -15.0 and ff - nf >= 5.0
    return ok, f"NF-SnS NMSE {nf:.1f} dB ({nf_noisy:.1f} dB vs noisy input), FF NMSE {ff:.1f} dB, gap {ff - nf:.1f} dB"


@criterion(9)
def check_fraunhofer_phase():
    D, f = 1.0, 20e9
    geom = ArrayGeometry([[0.0, D / 2, 0.0], [0.0, -D / 2, 0.0]])
    a = nearfield_manifold(geom, FrequencyGrid(f, 1e6, 1), 0.0, 0.0, fraunhofer_distance(D, f))
    phase = abs(float(np.angle(a[0, 0])))
    return abs(phase / (math.pi / 8) - 1) <= 0.02, f"edge excess phase {phase:.5f} rad vs pi/8 = {math.pi / 8:.5f}"


@criterion(10)
def check_determinism():
    cfg = {
        "geometry": {"type": "uca", "n_elements": 48, "radius_m": 0.25, "height_m": 1.0},
        "grid": {"f_start_hz": 16e9, "f_stop_hz": 20e9, "n_freq": 65},
        "mode": "nf-sns",
        "paths": [
            {"azimuth_deg": 30.0, "elevation_deg": 10.0, "distance_m": 2.0, "delay_s": 5e-9, "gain_re": 1.0, "gain_im": 0.0},
            {"azimuth_deg": -120.0, "elevation_deg": 5.0, "distance_m": "far_field", "delay_s": 9e-9,
             "gain_re": 0.2, "gain_im": 0.3, "sns": {"center_index": 10, "width": 20, "taper_len": 3}},
        ],
        "snr_db": 25.0,
        "seed": 9,
    }
    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        (d / "cfg.json").write_text(json.dumps(cfg))
        for k in range(2):
            run = d / str(k)
            run.mkdir()
            codes = [
                cli(["synth", "--config", str(d / "cfg.json"), "-o", str(run / "ch.elaa")]),
                cli(["estimate", str(run / "ch.elaa"), "--geometry", str(run / "ch.paths.json"), "-o", str(run / "est.json")]),
                cli(["reconstruct", str(run / "est.json"), "-o", str(run / "rec.elaa")]),
                cli(["cir", str(run / "rec.elaa"), "--csv", str(run / "h.csv"), "--pgm", str(run / "h.pgm")]),
                cli(["compare", str(run / "rec.elaa"), str(run / "ch.elaa"), "-o", str(run / "cmp.json")]),
            ]
            names = ("ch.elaa", "ch.paths.json", "est.json", "rec.elaa", "h.csv", "h.pgm")
            outputs.append((codes, {n: (run / n).read_bytes() for n in names}))
    (c1, f1), (c2, f2) = outputs
    same = [n for n in f1 if f1[n] == f2[n]]
    ok = c1 == c2 == [0] * 5 and len(same) == len(f1)
    return ok, f"{len(same)}/{len(f1)} seeded pipeline outputs byte-identical across two runs"


CHECKS = [
    check_fraunhofer,
    check_paper_replica,
    check_transform_oracle,
    check_single_path,
    check_multipath,
    check_sns,
    check_mode_algebra,
    check_reconstruction,
    check_fraunhofer_phase,
    check_determinism,
]


@pytest.mark.parametrize("check", CHECKS, ids=lambda c: f"criterion_{c.number:02d}_{c.__name__[6:]}")
def test_acceptance(check, capsys):
    with capsys.disabled():
        print()
        ok, detail = check()
    assert ok, detail


if __name__ == "__main__":
    results = [check()[0] for check in CHECKS]
    print(f"{sum(results)}/{len(results)} acceptance criteria passed")
    sys.exit(0 if all(results) else 1)
