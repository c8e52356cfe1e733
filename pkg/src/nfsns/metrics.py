"""Comparison of path sets, channels and visibility regions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import FrequencyGrid, PathParams, wrap_azimuth

NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class Gates:
    """Per-axis normalizers for path association.

    A far-field path matches a finite-distance one only when the finite
    distance is at least ``far_field_beyond`` (if set).
    """

    azimuth_deg: float = 1.0
    elevation_deg: float = 5.0
    delay_s: float = 0.25e-9
    log10_distance: float = 0.3
    far_field_beyond: Optional[float] = None

    @classmethod
    def for_grid(cls, grid: FrequencyGrid, **kw) -> "Gates":
        return cls(delay_s=grid.delay_resolution, **kw)

    def __post_init__(self):
        if min(self.azimuth_deg, self.elevation_deg, self.delay_s, self.log10_distance) <= 0:
            raise ValueError("gates must be positive")


@dataclass
class PathMatching:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_estimates: list[int] = field(default_factory=list)
    unmatched_truths: list[int] = field(default_factory=list)

    @property
    def n_matched(self) -> int:
        return len(self.pairs)


def _log_distance_gap(a: float, b: float, far_field_beyond: Optional[float]) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    if math.isinf(a) or math.isinf(b):
        finite = b if math.isinf(a) else a
        if far_field_beyond is not None and finite >= far_field_beyond:
            return 0.0
        return math.inf
    return abs(math.log10(a) - math.log10(b))


def path_distance(est: PathParams, truth: PathParams, gates: Gates) -> float:
    daz = wrap_azimuth(est.azimuth - truth.azimuth)
    terms = (
        daz / gates.azimuth_deg,
        (est.elevation - truth.elevation) / gates.elevation_deg,
        (est.delay - truth.delay) / gates.delay_s,
        _log_distance_gap(est.distance, truth.distance, gates.far_field_beyond) / gates.log10_distance,
    )
    return math.sqrt(sum(t * t for t in terms))


def match_paths(estimates: Sequence[PathParams], truths: Sequence[PathParams], gates: Gates = Gates()) -> PathMatching:
    """Greedy one-to-one association, globally closest pair first.

    Ties go to the lowest (estimate, truth) index pair; pairs farther than
    1 in gate-normalized distance are never matched.
    """
    cand = []
    for i, e in enumerate(estimates):
        for j, t in enumerate(truths):
            d = path_distance(e, t, gates)
            if d <= 1.0:
                cand.append((d, i, j))
    cand.sort()
    used_e, used_t = set(), set()
    pairs = []
    for d, i, j in cand:
        if i in used_e or j in used_t:
            continue
        used_e.add(i)
        used_t.add(j)
        pairs.append((i, j, d))
    return PathMatching(
        pairs=pairs,
        unmatched_estimates=[i for i in range(len(estimates)) if i not in used_e],
        unmatched_truths=[j for j in range(len(truths)) if j not in used_t],
    )


def nmse_db(candidate, reference) -> float:
    cand = np.asarray(getattr(candidate, "data", candidate))
    ref = np.asarray(getattr(reference, "data", reference))
    if cand.shape != ref.shape:
        raise ValueError(f"shape mismatch {cand.shape} vs {ref.shape}")
    ref_energy = float(np.vdot(ref, ref).real)
    if not ref_energy > 0:
        raise ValueError("reference channel is identically zero")
    diff = cand - ref
    ratio = float(np.vdot(diff, diff).real) / ref_energy
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(ratio), NMSE_FLOOR_DB)


def vr_jaccard(a, b, support_threshold: float = 0.1) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("SnS vectors must have equal length")
    sa = a > support_threshold
    sb = b > support_threshold
    union = np.count_nonzero(sa | sb)
    if union == 0:
        return 1.0
    return np.count_nonzero(sa & sb) / union
