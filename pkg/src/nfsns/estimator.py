"""Coarse-to-refine multipath estimation with successive interference cancellation.

The coarse stage is a near-field-focused Bartlett beamformer evaluated over
azimuth, elevation, distance (including a plane-wave cell) and delay. Each
candidate is refined by cyclic golden-section searches of the concentrated
least-squares likelihood, with the per-element visibility vector re-estimated
between cycles. Paths are peeled off strongest-first until the next one falls
outside the dynamic range, then re-estimated in SAGE-style sweeps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from .synth import SynthesisMode, path_contribution
from .core import (
    FAR_FIELD,
    SPEED_OF_LIGHT,
    ArrayGeometry,
    ChannelTensor,
    FrequencyGrid,
    PathParams,
    direction_response,
    element_response,
    fraunhofer_distance,
    path_manifold,
    wrap_azimuth,
)

log = logging.getLogger(__name__)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
# golden-section resolution relative to the convergence tolerance of each axis
_XTOL = 0.02


@dataclass
class ScanGrid:
    """Coarse search axes.

    ``azimuth_step_deg=None`` picks a step of about half the array's
    beamwidth at the highest frequency; for a UCA the step is snapped to an
    integer fraction of the element spacing so the fast circular-correlation
    scan applies. ``elevations_deg=None`` samples [-max, +max] elevation at
    the same resolution in direction cosine (only the upper half for a
    horizontal planar array, which cannot see the sign of the elevation).
    ``distances_m=None`` gives ``n_distances`` log-spaced points from twice
    the array radius to twice the Fraunhofer distance.
    """

    azimuth_step_deg: Optional[float] = None
    elevations_deg: Optional[tuple] = None
    max_elevation_deg: float = 30.0
    distances_m: Optional[tuple] = None
    n_distances: int = 10
    include_far_field: bool = True

    def resolve(self, geom: ArrayGeometry, grid: FrequencyGrid) -> "ResolvedScan":
        m = geom.n_elements
        uca_radius = _uca_radius(geom)
        lam = SPEED_OF_LIGHT / grid.f_stop
        # half a beamwidth, in direction-cosine units
        half_bw = 0.5 * lam / max(geom.aperture, 1e-9)
        step = self.azimuth_step_deg
        if step is None:
            target = min(math.degrees(half_bw), 5.0)
            if uca_radius is not None:
                base = 360.0 / m
                step = base / math.ceil(base / target - 1e-9)
            else:
                step = 360.0 / math.ceil(360.0 / target)
        if not step > 0:
            raise ValueError("azimuth step must be positive")
        n_az = int(round(360.0 / step))
        if n_az < 1:
            raise ValueError("azimuth step larger than a full turn")
        azimuths = np.arange(n_az) * (360.0 / n_az)

        fold = geom.is_horizontal_planar
        if self.elevations_deg is None:
            els = _elevation_axis(self.max_elevation_deg, min(half_bw, 0.1), fold)
        else:
            els = np.asarray(self.elevations_deg, dtype=float)
            if fold:
                els = np.abs(els)
            els = np.unique(els)
        if els.size == 0:
            raise ValueError("elevation list is empty")
        if np.any(np.abs(els) > 90):
            raise ValueError("elevations must lie in [-90, 90]")

        if self.distances_m is None:
            radius = geom.max_radius
            d_f = fraunhofer_distance(geom.aperture, grid.f_stop)
            lo, hi = 2.0 * radius, max(2.0 * d_f, 4.0 * radius)
            dists = np.geomspace(lo, hi, self.n_distances) if self.n_distances > 1 else np.array([lo])
        else:
            dists = np.sort(np.asarray(self.distances_m, dtype=float))
        if dists.size and not np.all(dists > geom.max_radius):
            raise ValueError("scan distances must exceed the array radius")
        if dists.size == 0 and not self.include_far_field:
            raise ValueError("distance axis is empty")
        inv = 1.0 / dists
        if self.include_far_field:
            inv = np.append(inv, 0.0)
        return ResolvedScan(
            azimuths=azimuths,
            elevations=els,
            inv_distances=inv,
            n_delay=grid.n_freq,
            delay_step=grid.delay_resolution,
            fold_elevation=fold,
            uca_radius=uca_radius,
            max_radius=geom.max_radius,
        )


def _elevation_axis(max_el: float, dcos: float, fold: bool) -> np.ndarray:
    """Elevations spaced ``dcos`` apart in the direction cosine that matters.

    A horizontal planar array senses cos(el); anything else is sampled
    uniformly in sin(el).
    """
    top = math.radians(abs(max_el))
    if fold:
        n = max(1, math.ceil((1.0 - math.cos(top)) / dcos))
        els = np.degrees(np.arccos(np.clip(1.0 - np.arange(n + 1) * (1.0 - math.cos(top)) / n, -1, 1)))
        return np.unique(np.round(els, 12))
    n = max(1, math.ceil(math.sin(top) / dcos))
    half = np.degrees(np.arcsin(np.arange(n + 1) * math.sin(top) / n))
    return np.unique(np.round(np.concatenate([-half[::-1], half]), 12))


@dataclass
class ResolvedScan:
    azimuths: np.ndarray
    elevations: np.ndarray
    inv_distances: np.ndarray  # distance order; 0.0 is the plane-wave cell
    n_delay: int
    delay_step: float
    fold_elevation: bool
    uca_radius: Optional[float]
    max_radius: float

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.azimuths.size, self.elevations.size, self.inv_distances.size, self.n_delay)

    @property
    def azimuth_step(self) -> float:
        return 360.0 / self.azimuths.size

    def elevation_bracket(self, el: float) -> tuple[float, float]:
        """One local elevation cell either side of ``el``."""
        els = self.elevations
        lo_bound, hi_bound = (0.0, 90.0) if self.fold_elevation else (-90.0, 90.0)
        if els.size < 2:
            width = 15.0
        else:
            i = int(np.argmin(np.abs(els - el)))
            gaps = np.diff(els)
            width = float(max(gaps[max(i - 1, 0)], gaps[min(i, gaps.size - 1)]))
        return max(el - width, lo_bound), min(el + width, hi_bound)

    @property
    def distance_ratio(self) -> float:
        finite = np.sort(1.0 / self.inv_distances[self.inv_distances > 0])
        if finite.size < 2:
            return 2.0
        return float(np.max(finite[1:] / finite[:-1]))

    @property
    def max_finite_distance(self) -> float:
        finite = self.inv_distances[self.inv_distances > 0]
        if finite.size == 0:
            return math.inf
        return float(1.0 / finite.min())


@dataclass
class EstimatorConfig:
    dynamic_range_db: float = 30.0
    max_paths: int = 100
    tol_angle_deg: float = 0.01
    tol_distance_rel: float = 1e-3
    tol_delay_bins: float = 1e-3
    max_refine_iter: int = 20
    sns_threshold: float = 0.1
    sns_smooth_window: int = 5
    sage_cycles: int = 1
    # None: calibrated so that noise alone crosses it with probability
    # ``false_alarm_prob`` over the whole scan (Bonferroni), never below 10 dB
    detection_margin_db: Optional[float] = None
    false_alarm_prob: float = 0.05
    estimate_sns: bool = True

    def __post_init__(self):
        if not self.dynamic_range_db > 0:
            raise ValueError("dynamic_range_db must be positive")
        for name in ("tol_angle_deg", "tol_distance_rel", "tol_delay_bins", "max_refine_iter", "sns_smooth_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_paths < 0 or self.sage_cycles < 0:
            raise ValueError("max_paths and sage_cycles must be non-negative")
        if not 0.0 <= self.sns_threshold < 1.0:
            raise ValueError("sns_threshold must lie in [0, 1)")
        if not 0.0 < self.false_alarm_prob < 1.0:
            raise ValueError("false_alarm_prob must lie in (0, 1)")


@dataclass
class Candidate:
    """A coarse detection: the cell center and its focused power."""

    azimuth: float
    elevation: float
    inv_distance: float
    delay: float
    power: float
    cell: Optional[tuple[int, int, int, int]]
    scan: ResolvedScan

    @property
    def distance(self) -> float:
        return FAR_FIELD if self.inv_distance == 0 else 1.0 / self.inv_distance

    @classmethod
    def from_path(cls, path: PathParams, scan: ResolvedScan) -> "Candidate":
        inv = 0.0 if path.is_far_field else 1.0 / path.distance
        return cls(path.azimuth, path.elevation, inv, path.delay, path.power, None, scan)


@dataclass
class PathEstimate:
    path: PathParams
    power_drop_db: float = 0.0
    seed: Optional[Candidate] = None
    converged: bool = True
    iterations: int = 0
    objective: list = field(default_factory=list)

    @property
    def power(self) -> float:
        return self.path.power

    @property
    def far_field(self) -> bool:
        return self.path.is_far_field


# ---------------------------------------------------------------- coarse scan


def _uca_radius(geom: ArrayGeometry) -> Optional[float]:
    """Radius if the geometry is a horizontal UCA laid out like build_uca."""
    m = geom.n_elements
    if m < 2 or not geom.is_horizontal_planar:
        return None
    rel = geom.relative
    radius = float(np.hypot(rel[0, 0], rel[0, 1]))
    if radius <= 0:
        return None
    phi = 2.0 * np.pi * np.arange(m) / m
    expected = radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if np.allclose(rel[:, :2], expected, rtol=0, atol=1e-12 * max(radius, 1.0)):
        return radius
    return None


def _steering_conj(geom, freqs, az, el, inv_d):
    """conj of the NF/FF manifold for one cell, shape (M, N)."""
    excess, amp = element_response(geom, az, el, inv_d)
    return amp[:, None] * np.exp((2j * np.pi / SPEED_OF_LIGHT) * np.multiply.outer(excess, freqs))


def _spectrum_slices(tensor: ChannelTensor, geom: ArrayGeometry, scan: ResolvedScan):
    """Yield (ie, idist, P) with P the (n_az, N) focused delay spectrum.

    P[az, k] = |(1/MN) sum_mn conj(A_mn) Y_mn exp(+j 2 pi f_n tau_k)|^2 on
    native delay bins tau_k = k / (N f_step).
    """
    y = tensor.data
    m, n = y.shape
    freqs = tensor.grid.frequencies
    n_az = scan.azimuths.size
    ratio = (360.0 / m) / scan.azimuth_step
    sub = int(round(ratio))
    fast = scan.uca_radius is not None and sub >= 1 and abs(ratio - sub) < 1e-9
    if fast:
        y_hat = np.fft.fft(y, axis=0)
    for ie, el in enumerate(scan.elevations):
        for idist, inv_d in enumerate(scan.inv_distances):
            if fast:
                # Rotating a UCA by one element spacing permutes its elements
                # cyclically: each azimuth offset is one circular correlation.
                corr = np.empty((n_az, n), dtype=complex)
                for ell in range(sub):
                    a_conj = _steering_conj(geom, freqs, scan.azimuths[ell], el, inv_d)
                    corr[ell::sub] = np.fft.ifft(y_hat * np.fft.fft(a_conj.conj(), axis=0).conj(), axis=0)
            else:
                corr = np.empty((n_az, n), dtype=complex)
                for j, az in enumerate(scan.azimuths):
                    corr[j] = np.einsum("mn,mn->n", _steering_conj(geom, freqs, az, el, inv_d), y)
            spec = np.fft.ifft(corr, axis=1) / m
            yield ie, idist, spec.real**2 + spec.imag**2


def focused_spectrum(tensor: ChannelTensor, geom: ArrayGeometry, scan: ResolvedScan) -> np.ndarray:
    """Full 4-D focused spectrum P[az, el, d, k]; 8 * prod(scan.shape) bytes."""
    out = np.empty(scan.shape)
    for ie, idist, p in _spectrum_slices(tensor, geom, scan):
        out[:, ie, idist, :] = p
    return out


def focused_spectrum_direct(tensor: ChannelTensor, geom: ArrayGeometry, az, el, inv_d, delays) -> np.ndarray:
    """Brute-force P over arbitrary delays for one spatial cell (test oracle)."""
    y = tensor.data
    m, n = y.shape
    freqs = tensor.grid.frequencies
    if inv_d == 0:
        proj = geom.relative @ np.array(
            [math.cos(math.radians(el)) * math.cos(math.radians(az)),
             math.cos(math.radians(el)) * math.sin(math.radians(az)),
             math.sin(math.radians(el))]
        )
        a = np.exp(2j * np.pi * np.outer(proj, freqs) / SPEED_OF_LIGHT)
    else:
        d = 1.0 / inv_d
        src = d * np.array(
            [math.cos(math.radians(el)) * math.cos(math.radians(az)),
             math.cos(math.radians(el)) * math.sin(math.radians(az)),
             math.sin(math.radians(el))]
        )
        dm = np.linalg.norm(src[None, :] - geom.relative, axis=1)
        a = (d / dm)[:, None] * np.exp(-2j * np.pi * np.outer(dm - d, freqs) / SPEED_OF_LIGHT)
    out = []
    for tau in np.atleast_1d(delays):
        v = np.sum(a.conj() * y * np.exp(2j * np.pi * freqs * tau)[None, :]) / (m * n)
        out.append(abs(v) ** 2)
    return np.array(out)


def detection_margin_db(scan: ResolvedScan, cfg: EstimatorConfig) -> float:
    if cfg.detection_margin_db is not None:
        return cfg.detection_margin_db
    # Noise-only focused power is exponential per bin; its median is ln2 times
    # the mean. Bonferroni over every (cell, delay) test.
    n_tests = float(np.prod(scan.shape))
    ratio = math.log(n_tests / cfg.false_alarm_prob) / math.log(2.0)
    return max(10.0, 10.0 * math.log10(ratio))


def coarse_scan(
    tensor: ChannelTensor,
    geom: ArrayGeometry,
    grid,
    cfg: Optional[EstimatorConfig] = None,
    limit: Optional[int] = None,
) -> list[Candidate]:
    """Ranked peaks of the focused delay spectrum.

    A bin qualifies when it exceeds the median of its (el, d) slice of the
    focused spectrum by the detection margin. Qualifying power is projected onto
    the (azimuth, delay) plane by maximizing over elevation and distance,
    which keeps memory at one plane; candidates are the local maxima of that
    plane (circular in both axes), each reported with its best cell.
    """
    cfg = cfg or EstimatorConfig()
    if tensor.shape[0] != geom.n_elements:
        raise ValueError(f"tensor has {tensor.shape[0]} rows, geometry {geom.n_elements} elements")
    scan = grid.resolve(geom, tensor.grid) if isinstance(grid, ScanGrid) else grid
    if min(scan.shape) == 0:
        raise ValueError("scan grid is empty")
    if scan.n_delay != tensor.grid.n_freq:
        raise ValueError("scan grid was resolved for a different frequency grid")

    factor = 10.0 ** (detection_margin_db(scan, cfg) / 10.0)
    n_az, _, _, n_tau = scan.shape
    best = np.zeros((n_az, n_tau))
    best_el = np.zeros((n_az, n_tau), dtype=np.int64)
    best_d = np.zeros((n_az, n_tau), dtype=np.int64)
    for ie, idist, p in _spectrum_slices(tensor, geom, scan):
        # pooled over the whole (az, delay) slice: a median over one row's N
        # delays is itself noisy enough to break the calibration for small N
        thresh = np.median(p) * factor
        p = np.where(p > thresh, p, 0.0)
        better = p > best
        best[better] = p[better]
        best_el[better] = ie
        best_d[better] = idist

    peaks = maximum_filter(best, size=3, mode="wrap")
    mask = (best > 0) & (best >= peaks)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return []
    powers = best[mask]
    order = np.lexsort((np.arange(powers.size), -powers))
    if limit is not None:
        order = order[:limit]
    out = []
    for i in order:
        ia, it = (int(v) for v in idx[i])
        ie, idist = int(best_el[ia, it]), int(best_d[ia, it])
        out.append(
            Candidate(
                azimuth=float(scan.azimuths[ia]),
                elevation=float(scan.elevations[ie]),
                inv_distance=float(scan.inv_distances[idist]),
                delay=it * scan.delay_step,
                power=float(powers[i]),
                cell=(ia, ie, idist, it),
                scan=scan,
            )
        )
    return out


# ------------------------------------------------------------------ refinement


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, xtol: float) -> tuple[float, float]:
    """Maximize f on [lo, hi]; ties resolve toward the smaller argument.

    The bracket ends are evaluated as well so optima on the boundary (for
    example the plane-wave limit of the inverse-distance axis) are reached
    exactly.
    """
    seen = {}

    def ev(x):
        if x not in seen:
            seen[x] = f(x)
        return seen[x]

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = ev(d)
    ev(lo)
    ev(hi)
    x_best = min(seen, key=lambda x: (-seen[x], x))
    return x_best, seen[x_best]


class _Likelihood:
    """Concentrated white-Gaussian log-likelihood of one path in a residual.

    For a model g = s * A(theta) * exp(-j 2 pi f tau), the gain is profiled
    out and the objective is |<g, y>|^2 / ||g||^2, the energy the best-fit
    path removes from the residual.
    """

    def __init__(
        self, residual: np.ndarray, geom: ArrayGeometry, grid: FrequencyGrid, horizontal_cosine: bool = False
    ):
        self.y = residual
        self.geom = geom
        self.freqs = grid.frequencies
        self.period = grid.max_delay
        self.n = grid.n_freq
        # on a horizontal planar array only the horizontal part of the
        # direction matters; el then carries cos(elevation), which may run
        # past 1 during a search
        self.horizontal_cosine = horizontal_cosine

    def response(self, az, el, inv_d):
        if self.horizontal_cosine:
            a = math.radians(az)
            return direction_response(self.geom, np.array([el * math.cos(a), el * math.sin(a), 0.0]), inv_d)
        return element_response(self.geom, az, el, inv_d)

    def mean_excess(self, az, el, inv_d, s):
        excess, amp = self.response(az, el, inv_d)
        w = (s * amp) ** 2
        tot = w.sum()
        return float(np.dot(w, excess) / tot) if tot > 0 else 0.0

    def spatial_projection(self, az, el, inv_d, s):
        """z_n = sum_m s_m amp_m exp(+j 2 pi f_n excess_m / c) y_mn and ||s amp||^2."""
        excess, amp = self.response(az, el, inv_d)
        steer = np.exp((2j * np.pi / SPEED_OF_LIGHT) * np.multiply.outer(excess, self.freqs))
        z = (s * amp) @ (steer * self.y)
        return z, float(np.sum((s * amp) ** 2))

    def delay_value(self, z, norm, tau):
        if norm <= 0:
            return 0.0
        v = np.dot(z, np.exp(2j * np.pi * self.freqs * tau))
        return (v.real**2 + v.imag**2) / (self.n * norm)

    def value(self, az, el, inv_d, tau, s):
        z, norm = self.spatial_projection(az, el, inv_d, s)
        return self.delay_value(z, norm, tau)

    def model(self, az, el, inv_d, tau, s):
        """Unit-gain path contribution s * A * exp(-j 2 pi f tau), shape (M, N)."""
        excess, amp = self.response(az, el, inv_d)
        t = tau + excess / SPEED_OF_LIGHT
        return (s * amp)[:, None] * np.exp(-2j * np.pi * np.multiply.outer(t, self.freqs))

    def gain(self, az, el, inv_d, tau, s):
        g = self.model(az, el, inv_d, tau, s)
        den = float(np.vdot(g, g).real)
        if den <= 0:
            return 0j
        return complex(np.vdot(g, self.y) / den)


def _smooth(s: np.ndarray, window: int, circular: bool) -> np.ndarray:
    window = int(window)
    if window <= 1 or s.size < 2:
        return s.copy()
    kernel = np.ones(window)
    half = window // 2
    if circular and s.size >= window:
        ext = np.concatenate([s[-half:], s, s[: window - 1 - half]]) if half else np.concatenate([s, s[: window - 1]])
        return np.convolve(ext, kernel, mode="valid") / window
    num = np.convolve(s, kernel, mode="full")[half : half + s.size]
    cnt = np.convolve(np.ones_like(s), kernel, mode="full")[half : half + s.size]
    return num / cnt


def estimate_sns_vector(
    residual: ChannelTensor,
    path: PathParams,
    cfg: Optional[EstimatorConfig] = None,
    geom: Optional[ArrayGeometry] = None,
) -> np.ndarray:
    """Per-element visibility of ``path`` in ``residual``.

    Each element's least-squares amplitude relative to the unweighted path
    model is moving-averaged (circularly on closed arrays), scaled so the
    visible plateau sits at 1, clamped to [0, 1] and zeroed below the
    threshold.
    """
    cfg = cfg or EstimatorConfig()
    geom = geom or residual.geometry
    if geom is None:
        raise ValueError("a geometry is required")
    if path.gain == 0:
        raise ValueError("path gain is zero; visibility is undefined")
    a = path_manifold(geom, residual.grid, path)
    g = a * (path.gain * np.exp(-2j * np.pi * residual.grid.frequencies * path.delay))[None, :]
    num = np.einsum("mn,mn->m", g.conj(), residual.data)
    den = np.einsum("mn,mn->m", g.conj(), g).real
    c = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    s = _smooth(np.abs(c), cfg.sns_smooth_window, geom.closed)
    # the gain absorbs any common scale, so normalize to the visible plateau
    # (mean of the elements above half the peak) rather than to the peak,
    # which noise would push above the plateau
    peak = s.max()
    if not peak > 0:
        return np.zeros_like(s)
    s = np.clip(s / s[s >= 0.5 * peak].mean(), 0.0, 1.0)
    s[s < cfg.sns_threshold] = 0.0
    return s


def refine_path(
    residual: ChannelTensor,
    seed: Candidate,
    cfg: Optional[EstimatorConfig] = None,
    geom: Optional[ArrayGeometry] = None,
    initial_sns: Optional[np.ndarray] = None,
) -> PathEstimate:
    """Maximum-likelihood refinement of one path by successive 1-D searches.

    The search runs in (azimuth, elevation, inverse distance, arrival time)
    where arrival time is the power-weighted mean delay over the array; the
    delay at the reference follows from it. This keeps the spatial axes
    nearly orthogonal to the delay axis. Each cycle does a golden-section
    search along every direction of a direction set (initially the four
    axes, one coarse cell either side), then along the cycle's net
    displacement, which replaces the direction that gained most (Powell's
    update). The learned directions follow the curved ridges that partial
    visibility arcs create between elevation and distance.

    The gain is the closed-form least-squares fit. The visibility vector is
    re-estimated after every cycle and kept only if it does not lower the
    objective, so the objective never decreases. Converged means two
    consecutive cycles moved every axis less than its tolerance.
    """
    cfg = cfg or EstimatorConfig()
    geom = geom or residual.geometry
    if geom is None:
        raise ValueError("a geometry is required")
    scan = seed.scan
    grid = residual.grid
    fold = scan.fold_elevation
    lik = _Likelihood(residual.data, geom, grid, horizontal_cosine=fold)
    m = geom.n_elements
    s = np.ones(m) if initial_sns is None else np.asarray(initial_sns, dtype=float).copy()
    period = grid.max_delay
    bin_ = scan.delay_step

    el0 = abs(seed.elevation) if fold else seed.elevation
    inv_floor = 1.0 / scan.max_finite_distance if math.isfinite(scan.max_finite_distance) else 0.0
    inv_cap = 0.9 / scan.max_radius
    el_lo, el_hi = scan.elevation_bracket(el0)
    inv0 = seed.inv_distance
    tol_el = math.radians(cfg.tol_angle_deg)
    if fold:
        # the objective is even in elevation, hence quartic-flat around 0 in
        # degrees but quadratic in the cosine; search the cosine instead
        cos0 = math.cos(math.radians(el0))
        el_unit = max(abs(cos0 - math.cos(math.radians(b))) for b in (el_lo, el_hi))
        el_tol = math.sin(math.radians(el0)) * tol_el + 0.5 * tol_el * tol_el
        x_el0 = cos0
    else:
        el_unit = max(el0 - el_lo, el_hi - el0)
        el_tol = cfg.tol_angle_deg
        x_el0 = el0
    unit = np.array([
        scan.azimuth_step,
        el_unit,
        inv0 * (scan.distance_ratio - 1.0) if inv0 > 0 else max(inv_floor, 1e-9),
        bin_,
    ])
    tol = np.array([cfg.tol_angle_deg, el_tol, cfg.tol_distance_rel, cfg.tol_delay_bins * bin_])

    def el_deg(v):
        return math.degrees(math.acos(min(v, 1.0))) if fold else v

    def tau_of(x):
        return (x[3] - lik.mean_excess(x[0], x[1], x[2], s) / SPEED_OF_LIGHT) % period

    def value(x):
        return lik.value(x[0], x[1], x[2], tau_of(x), s)

    def arrival(az_, el_, inv_, tau_):
        return tau_ + lik.mean_excess(az_, el_, inv_, s) / SPEED_OF_LIGHT

    def sns_update(x):
        tau = tau_of(x)
        gain = lik.gain(x[0], x[1], x[2], tau, s)
        if gain == 0:
            return None
        trial = PathParams(x[0], el_deg(x[1]), FAR_FIELD if x[2] <= 0 else 1.0 / x[2], tau, gain)
        s_new = estimate_sns_vector(residual, trial, cfg, geom)
        return s_new if s_new.any() else None

    x = np.array([seed.azimuth, x_el0, inv0, 0.0])
    x[3] = arrival(x[0], x[1], x[2], seed.delay % period)
    obj = value(x)
    if cfg.estimate_sns and initial_sns is None:
        # visibility seen from the coarse cell already narrows the aperture
        s_new = sns_update(x)
        if s_new is not None:
            tau = tau_of(x)
            v = lik.value(x[0], x[1], x[2], tau, s_new)
            if v > obj:
                s, obj = s_new, v
                x[3] = arrival(x[0], x[1], x[2], tau)

    def t_range(d):
        lo, hi = -1.0, 1.0
        for k, bound in ((2, inv_cap),) + (((1, 90.0),) if not fold else ()):
            step = d[k] * unit[k]
            if step == 0:
                continue
            # keep |x_k + t * step| <= bound
            a, b = sorted(((-bound - x[k]) / step, (bound - x[k]) / step))
            lo, hi = max(lo, a), min(hi, b)
        return lo, hi

    def line_search(d):
        nonlocal x, obj
        lo, hi = t_range(d)
        if not hi > lo:
            return 0.0
        xtol = _XTOL * float(np.min(tol / unit / np.maximum(np.abs(d), 1e-12)))
        if d[0] == d[1] == d[2] == 0:
            # arrival-time axis only: one spatial projection serves all delays
            z, norm = lik.spatial_projection(x[0], x[1], x[2], s)
            tau0 = tau_of(x)
            f = lambda t: lik.delay_value(z, norm, tau0 + t * d[3] * unit[3])
        else:
            f = lambda t: value(x + t * d * unit)
        t, v = golden_section_max(f, lo, hi, xtol)
        if v > obj:
            gained = v - obj
            x = x + t * d * unit
            obj = v
            return gained
        return 0.0

    directions = [np.eye(4)[k] for k in range(4)]
    history = [obj]
    converged = False
    quiet = False
    it = 0
    for it in range(1, cfg.max_refine_iter + 1):
        start = x.copy()
        gains = [line_search(d) for d in directions]
        net = (x - start) / unit
        norm = float(np.linalg.norm(net))
        if norm > 0:
            d_new = net / norm
            line_search(d_new)
            k = int(np.argmax(gains))
            directions.pop(k)
            directions.append(d_new)
        if abs(np.linalg.det(np.array(directions))) < 1e-3:
            # the set has collapsed onto fewer dimensions; start over from the axes
            directions = [np.eye(4)[k] for k in range(4)]

        if cfg.estimate_sns:
            s_new = sns_update(x)
            if s_new is not None:
                tau = tau_of(x)
                v = lik.value(x[0], x[1], x[2], tau, s_new)
                if v >= obj:
                    s, obj = s_new, v
                    x[3] = arrival(x[0], x[1], x[2], tau)
        history.append(obj)

        moved = np.abs(x - start)
        small = bool(
            moved[0] < tol[0]
            and moved[1] < tol[1]
            and moved[2] <= tol[2] * max(abs(x[2]), 1e-300)
            and moved[3] < tol[3]
        )
        # two quiet cycles in a row, so a single stalled cycle does not end it
        if small and quiet:
            converged = True
            break
        quiet = small

    az, inv_d = float(x[0]), max(float(x[2]), 0.0)
    x_el = min(float(x[1]), 1.0) if fold else float(x[1])
    el = el_deg(x_el)
    tau = lik.mean_excess(az, x_el, inv_d, s)
    tau = (x[3] - tau / SPEED_OF_LIGHT) % period
    gain = lik.gain(az, x_el, inv_d, tau, s)
    far = inv_d == 0.0 or 1.0 / inv_d > scan.max_finite_distance
    path = PathParams(
        azimuth=wrap_azimuth(az),
        elevation=el,
        distance=FAR_FIELD if far else 1.0 / inv_d,
        delay=tau,
        gain=gain,
        sns=s,
    )
    if not converged:
        log.debug("refinement hit %d iterations without converging", cfg.max_refine_iter)
    return PathEstimate(path=path, seed=seed, converged=converged, iterations=it, objective=history)


def path_model(geom: ArrayGeometry, grid: FrequencyGrid, path: PathParams) -> np.ndarray:
    return path_contribution(geom, grid, path, SynthesisMode.NF_SNS)


def _energy(x: np.ndarray) -> float:
    return float(np.vdot(x, x).real)


def estimate_paths(
    tensor: ChannelTensor,
    geom: Optional[ArrayGeometry] = None,
    grid: Optional[ScanGrid] = None,
    cfg: Optional[EstimatorConfig] = None,
) -> list[PathEstimate]:
    """Successive interference cancellation followed by re-estimation sweeps.

    Returns the paths sorted by descending array-averaged power. Stops when
    the coarse scan finds nothing above its noise-adaptive threshold, when
    the next refined path is more than ``dynamic_range_db`` below the
    strongest one, or at ``max_paths``.
    """
    geom = geom or tensor.geometry
    if geom is None:
        raise ValueError("a geometry is required")
    cfg = cfg or EstimatorConfig()
    scan = (grid or ScanGrid()).resolve(geom, tensor.grid)
    fgrid = tensor.grid
    residual = ChannelTensor(tensor.data.copy(), fgrid, geom)
    found: list[PathEstimate] = []
    strongest = 0.0

    while len(found) < cfg.max_paths:
        cands = coarse_scan(residual, geom, scan, cfg, limit=1)
        if not cands:
            break
        est = refine_path(residual, cands[0], cfg, geom)
        p = est.power
        if not p > 0:
            break
        if strongest > 0 and 10.0 * math.log10(strongest / p) > cfg.dynamic_range_db:
            break
        before = residual.energy
        residual.data -= path_model(geom, fgrid, est.path)
        after = residual.energy
        est.power_drop_db = 10.0 * math.log10(before / after) if after > 0 else math.inf
        found.append(est)
        strongest = max(strongest, p)
        log.info(
            "path %d: az %.3f el %.3f d %.3f tau %.4g ns power %.2f dB",
            len(found), est.path.azimuth, est.path.elevation, est.path.distance,
            est.path.delay * 1e9, 10 * math.log10(p),
        )

    for _ in range(cfg.sage_cycles):
        for i, est in enumerate(found):
            residual.data += path_model(geom, fgrid, est.path)
            before = residual.energy
            new = refine_path(residual, Candidate.from_path(est.path, scan), cfg, geom, initial_sns=est.path.sns)
            new.seed = est.seed
            residual.data -= path_model(geom, fgrid, new.path)
            after = residual.energy
            new.power_drop_db = 10.0 * math.log10(before / after) if after > 0 else math.inf
            found[i] = new

    found.sort(key=lambda e: -e.power)
    return found
