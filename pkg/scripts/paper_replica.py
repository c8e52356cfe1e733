"""Synthesize the 720-element, 2001-point measurement replica and export its CIR heatmap.

    python3 scripts/paper_replica.py --out replica/ [--mode nf-sns] [--snr-db 30]
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from nfsns import SynthesisMode, add_noise, cfr_to_cir, cir_heatmap, synthesize_cfr
from nfsns.io import PathListDocument, heatmap_pgm, write_bytes, write_channel, write_path_list
from nfsns.scenarios import multipath_scene, paper_geometry, paper_grid


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("replica"))
    ap.add_argument("--mode", default="nf-sns", choices=[m.value for m in SynthesisMode])
    ap.add_argument("--snr-db", type=float, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    geom, grid = paper_geometry(), paper_grid()
    paths = multipath_scene(geom.n_elements, grid, sns=True)

    t0 = time.perf_counter()
    tensor = synthesize_cfr(geom, grid, paths, SynthesisMode(args.mode))
    if args.snr_db is not None:
        tensor = add_noise(tensor, args.snr_db, seed=args.seed)
    write_channel(args.out / "replica.elaa", tensor)
    write_path_list(args.out / "replica.paths.json", PathListDocument(geom, paths, grid=grid))
    t_synth = time.perf_counter() - t0

    floor_db = -30.0
    heat = cir_heatmap(cfr_to_cir(tensor, "hann", 4), floor_db)
    write_bytes(args.out / "replica_cir.pgm", heatmap_pgm(heat, floor_db))
    print(f"tensor {tensor.data.shape}, synthesis {t_synth:.1f} s, total {time.perf_counter() - t0:.1f} s")
    print(f"wrote {args.out}/replica.elaa, replica.paths.json, replica_cir.pgm")


if __name__ == "__main__":
    main()
