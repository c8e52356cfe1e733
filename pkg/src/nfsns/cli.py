"""Command-line front end: synth, estimate, reconstruct, cir, compare, info.

Exit status is 0 on success, 2 for usage errors (bad flags or mode names),
65 for malformed or inconsistent data, 66 for missing inputs and 74 for
other I/O failures. Diagnostics go to standard error. No output byte depends
on the clock or the locale.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import ChannelTensor
from .estimator import EstimatorConfig, ScanGrid, estimate_paths
from .io import (
    MAGIC,
    FormatError,
    PathListDocument,
    dumps_json,
    estimator_config_from_json,
    estimator_config_to_json,
    geometry_from_json,
    grid_from_json,
    heatmap_csv,
    heatmap_pgm,
    load_json,
    path_from_json,
    read_channel,
    read_header,
    read_path_list,
    write_channel,
    write_bytes,
    write_path_list,
    write_text,
)
from .metrics import Gates, match_paths, nmse_db
from .scenarios import multipath_scene
from .synth import SynthesisMode, add_noise, synthesize_cfr
from .transform import WINDOWS, cfr_to_cir, cir_heatmap, power_delay_profile

log = logging.getLogger("nfsns")

EX_USAGE = 2
EX_DATAERR = 65
EX_NOINPUT = 66
EX_IOERR = 74


class CliError(Exception):
    def __init__(self, message: str, code: int = EX_DATAERR):
        super().__init__(message)
        self.code = code


def _mode(text: str) -> SynthesisMode:
    try:
        return SynthesisMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _negative(text: str) -> float:
    v = float(text)
    if not v < 0:
        raise argparse.ArgumentTypeError("must be negative")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _is_channel_file(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = load_json(args.config)
    if not isinstance(cfg, dict):
        raise FormatError("synth config must be a JSON object")
    base = Path(args.config).parent
    for key in ("geometry", "grid"):
        if key not in cfg:
            raise FormatError(f"synth config has no {key!r}")
    geom = geometry_from_json(cfg["geometry"], base)
    grid = grid_from_json(cfg["grid"])
    mode = args.mode or _config_mode(cfg.get("mode", "nf-sns"))

    if "scene" in cfg:
        scene = cfg["scene"]
        if scene.get("name") != "multipath":
            raise FormatError(f"unknown scene {scene.get('name')!r}")
        paths = multipath_scene(geom.n_elements, grid, sns=bool(scene.get("sns", False)))
    else:
        raw = cfg.get("paths", [])
        if not isinstance(raw, list):
            raise FormatError("paths must be a list")
        paths = [path_from_json(p, geom.n_elements) for p in raw]
    for p in paths:
        p.check_against(geom, grid)

    tensor = synthesize_cfr(geom, grid, paths, mode)
    snr = cfg.get("snr_db")
    if snr is not None:
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        tensor = add_noise(tensor, float(snr), seed)

    header = write_channel(args.out, tensor)
    truth = args.truth or str(Path(args.out).with_suffix(".paths.json"))
    write_path_list(truth, PathListDocument(geom, paths, grid))
    log.info("wrote %s (%d x %d, %d payload bytes) and %s", args.out, header.m_elements, header.n_freq,
             header.payload_bytes, truth)
    return 0


def _config_mode(text: str) -> SynthesisMode:
    try:
        return SynthesisMode.parse(text)
    except ValueError as exc:
        raise CliError(str(exc), EX_USAGE) from None


def _estimator_setup(args) -> tuple[dict, EstimatorConfig, ScanGrid]:
    raw = load_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise FormatError("estimator config must be a JSON object")
    cfg, scan = estimator_config_from_json(raw)
    return raw, cfg, scan


def cmd_estimate(args) -> int:
    raw, cfg, scan = _estimator_setup(args)
    if args.dump_config:
        doc = estimator_config_to_json(cfg, scan)
        if "geometry" in raw:
            doc["geometry"] = raw["geometry"]
        text = dumps_json(doc)
        if args.out:
            write_text(args.out, text)
        else:
            sys.stdout.write(text)
        return 0
    if not args.channel:
        raise CliError("estimate needs a channel file (or --dump-config)", EX_USAGE)
    if not args.out:
        raise CliError("estimate needs -o/--out", EX_USAGE)
    if args.geometry:
        gdoc = load_json(args.geometry)
        geom = geometry_from_json(gdoc.get("geometry", gdoc), Path(args.geometry).parent)
    elif "geometry" in raw:
        geom = geometry_from_json(raw["geometry"], Path(args.config).parent)
    else:
        raise CliError("no array geometry: pass --geometry or put one in --config", EX_USAGE)
    tensor = read_channel(args.channel, geom)
    estimates = estimate_paths(tensor, geom, scan, cfg)
    extras = [
        {
            "power_db": 10.0 * math.log10(e.power) if e.power > 0 else None,
            "converged": bool(e.converged),
            "iterations": int(e.iterations),
        }
        for e in estimates
    ]
    write_path_list(args.out, PathListDocument(geom, [e.path for e in estimates], tensor.grid, extras))
    log.info("%d paths written to %s", len(estimates), args.out)
    return 0


def cmd_reconstruct(args) -> int:
    doc = read_path_list(args.pathlist)
    grid = doc.grid
    if args.grid_from:
        grid = read_header(args.grid_from).grid
    if grid is None:
        raise FormatError("path list has no frequency grid; pass --grid-from CHANNEL")
    for p in doc.paths:
        p.check_against(doc.geometry, grid)
    tensor = synthesize_cfr(doc.geometry, grid, doc.paths, args.mode)
    write_channel(args.out, tensor)
    return 0


def cmd_cir(args) -> int:
    if not (args.csv or args.pgm or args.pdp):
        raise CliError("cir needs at least one of --csv, --pgm, --pdp", EX_USAGE)
    tensor = read_channel(args.channel)
    cir = cfr_to_cir(tensor, args.window, args.pad)
    if args.csv or args.pgm:
        db = cir_heatmap(cir, args.floor_db)
        if args.csv:
            write_text(args.csv, heatmap_csv(db))
        if args.pgm:
            write_bytes(args.pgm, heatmap_pgm(db, args.floor_db))
    if args.pdp:
        pdp = power_delay_profile(cir)
        peak = pdp.max()
        rel = np.maximum(pdp - peak, args.floor_db)
        lines = ["delay_s,power_db\n"]
        lines += [f"{format(float(t), '.6e')},{format(float(v), '.4f')}\n" for t, v in zip(cir.delays, rel)]
        write_text(args.pdp, "".join(lines))
    return 0


def _channel_report(a: ChannelTensor, b: ChannelTensor, name_a: str, name_b: str) -> dict:
    if a.shape != b.shape:
        raise FormatError(f"dimension mismatch: {name_a} is {a.shape}, {name_b} is {b.shape}")
    return {"kind": "channel", "candidate": name_a, "reference": name_b, "nmse_db": nmse_db(a, b)}


def cmd_compare(args) -> int:
    a_is_ch, b_is_ch = _is_channel_file(args.a), _is_channel_file(args.b)
    if a_is_ch and b_is_ch:
        report = _channel_report(read_channel(args.a), read_channel(args.b), args.a, args.b)
    elif not a_is_ch and not b_is_ch:
        est, ref = read_path_list(args.a), read_path_list(args.b)
        if est.geometry.n_elements != ref.geometry.n_elements:
            raise FormatError("path lists refer to arrays of different sizes")
        grid = ref.grid or est.grid
        gates = Gates.for_grid(grid) if grid is not None else Gates()
        m = match_paths(est.paths, ref.paths, gates)
        report = {
            "kind": "paths",
            "candidate": args.a,
            "reference": args.b,
            "n_candidate": len(est.paths),
            "n_reference": len(ref.paths),
            "n_matched": m.n_matched,
            "pairs": [
                {
                    "candidate": i,
                    "reference": j,
                    "distance": d,
                    "azimuth_err_deg": est.paths[i].azimuth - ref.paths[j].azimuth,
                    "elevation_err_deg": est.paths[i].elevation - ref.paths[j].elevation,
                    "delay_err_s": est.paths[i].delay - ref.paths[j].delay,
                }
                for i, j, d in m.pairs
            ],
            "unmatched_candidate": m.unmatched_estimates,
            "unmatched_reference": m.unmatched_truths,
        }
        if grid is not None:
            mode = args.mode or SynthesisMode.NF_SNS
            ca = synthesize_cfr(est.geometry, grid, est.paths, mode)
            cb = synthesize_cfr(ref.geometry, grid, ref.paths, mode)
            report["mode"] = mode.value
            report["nmse_db"] = nmse_db(ca, cb)
    else:
        # one path list against a measured channel: reconstruct it first
        plist, chan = (args.a, args.b) if b_is_ch else (args.b, args.a)
        doc = read_path_list(plist)
        tensor = read_channel(chan, doc.geometry)
        mode = args.mode or SynthesisMode.NF_SNS
        rec = synthesize_cfr(doc.geometry, tensor.grid, doc.paths, mode)
        report = _channel_report(rec, tensor, plist, chan)
        report["mode"] = mode.value
    text = dumps_json(report)
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_info(args) -> int:
    if _is_channel_file(args.file):
        h = read_header(args.file)
        lines = [
            f"magic: {MAGIC.decode('ascii')}",
            f"version: {h.version}",
            f"m_elements: {h.m_elements}",
            f"n_freq: {h.n_freq}",
            f"f_start_hz: {h.f_start_hz!r}",
            f"f_step_hz: {h.f_step_hz!r}",
            f"f_stop_hz: {h.grid.f_stop!r}",
            f"payload_bytes: {h.payload_bytes}",
        ]
    else:
        doc = read_path_list(args.file)
        lines = [
            f"schema_version: {doc.schema_version}",
            f"m_elements: {doc.geometry.n_elements}",
            f"n_paths: {len(doc.paths)}",
        ]
        if doc.grid is not None:
            lines.append(f"n_freq: {doc.grid.n_freq}")
    sys.stdout.write("".join(line + "\n" for line in lines))
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfsns", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a channel file and its ground-truth path list")
    s.add_argument("--config", required=True, help="scene config JSON")
    s.add_argument("-o", "--out", required=True, help="channel file to write")
    s.add_argument("--truth", help="path list to write (default: OUT with .paths.json)")
    s.add_argument("--mode", type=_mode, help="override the config's mode: FF, nf-stationary or nf-sns")
    s.add_argument("--seed", type=int, help="override the config's noise seed")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("estimate", help="extract paths from a channel file")
    e.add_argument("channel", nargs="?")
    e.add_argument("--config", help="estimator config JSON")
    e.add_argument("--geometry", help="geometry JSON or a path list whose geometry to use")
    e.add_argument("-o", "--out", help="path list to write")
    e.add_argument("--dump-config", action="store_true", help="write the full effective config and exit")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("reconstruct", help="synthesize a channel file from a path list")
    r.add_argument("pathlist")
    r.add_argument("--mode", type=_mode, default=SynthesisMode.NF_SNS)
    r.add_argument("--grid-from", help="take the frequency grid from this channel file")
    r.add_argument("-o", "--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    c = sub.add_parser("cir", help="impulse-response heatmap and power-delay profile")
    c.add_argument("channel")
    c.add_argument("--window", choices=WINDOWS, default="hann")
    c.add_argument("--pad", type=_positive_int, default=4, help="zero-padding factor")
    c.add_argument("--floor-db", type=_negative, default=-30.0)
    c.add_argument("--csv", help="element x delay dB matrix")
    c.add_argument("--pgm", help="8-bit binary PGM heatmap")
    c.add_argument("--pdp", help="array-averaged power-delay profile CSV")
    c.set_defaults(func=cmd_cir)

    k = sub.add_parser("compare", help="NMSE and path matching report")
    k.add_argument("a", help="candidate channel file or path list")
    k.add_argument("b", help="reference channel file or path list")
    k.add_argument("--mode", type=_mode, help="reconstruction mode for path lists (default nf-sns)")
    k.add_argument("-o", "--out")
    k.set_defaults(func=cmd_compare)

    i = sub.add_parser("info", help="print a channel file header or path-list summary")
    i.add_argument("file")
    i.set_defaults(func=cmd_info)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"nfsns {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"nfsns {args.command}: no such file: {exc.filename}", file=sys.stderr)
        return EX_NOINPUT
    except (FormatError, ValueError) as exc:
        print(f"nfsns {args.command}: {exc}", file=sys.stderr)
        return EX_DATAERR
    except OSError as exc:
        print(f"nfsns {args.command}: {exc}", file=sys.stderr)
        return EX_IOERR


if __name__ == "__main__":
    sys.exit(main())
