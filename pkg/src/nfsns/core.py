"""Array geometry, frequency grids, path parameters and the array manifolds.

Coordinate convention: azimuth is measured in the horizontal plane from +x
toward +y, elevation upward from the horizontal plane. Element positions are
in meters, frequencies in Hz, angles in degrees at the API boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# A path whose distance is infinite is a plane wave; FF manifolds apply.
FAR_FIELD = math.inf


@dataclass(frozen=True)
class ArrayGeometry:
    """Ordered 3-D element positions plus a reference point.

    ``closed`` marks arrays whose element order wraps around (a UCA), which
    matters for circular smoothing of visibility vectors.
    """

    positions: np.ndarray
    reference: np.ndarray = field(default_factory=lambda: np.zeros(3))
    closed: bool = False

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1 and pos.size == 3:
            pos = pos[None, :]
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"positions must be an (M, 3) array with M >= 1, got shape {pos.shape}")
        ref = np.array(self.reference, dtype=float).reshape(-1)
        if ref.size != 3:
            raise ValueError("reference must be a 3-vector")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(ref))):
            raise ValueError("geometry coordinates must be finite")
        pos.setflags(write=False)
        ref.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "reference", ref)

    @property
    def n_elements(self) -> int:
        return self.positions.shape[0]

    @property
    def relative(self) -> np.ndarray:
        """Element positions relative to the reference point, shape (M, 3)."""
        return self.positions - self.reference

    @property
    def max_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.relative, axis=1)))

    @property
    def aperture(self) -> float:
        """Largest pairwise element separation."""
        rel = self.relative
        if rel.shape[0] < 2:
            return 0.0
        # Bounding-sphere diameter is exact for the circular arrays used here
        # and an upper bound otherwise; pairwise distance is cheap enough below 4k.
        if rel.shape[0] <= 4096:
            diff = rel[:, None, :] - rel[None, :, :]
            return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))
        return 2.0 * self.max_radius

    @property
    def is_horizontal_planar(self) -> bool:
        """True when every element lies in the horizontal plane of the reference.

        Such arrays cannot tell elevation ``el`` from ``-el``.
        """
        return bool(np.all(self.relative[:, 2] == 0.0))


@dataclass(frozen=True)
class FrequencyGrid:
    f_start: float
    f_step: float
    n_freq: int

    def __post_init__(self):
        if not (self.f_step > 0 and math.isfinite(self.f_step)):
            raise ValueError("f_step must be positive")
        if int(self.n_freq) != self.n_freq or self.n_freq < 1:
            raise ValueError("n_freq must be an integer >= 1")
        if not self.f_start > 0:
            raise ValueError("all frequencies must be positive")
        object.__setattr__(self, "n_freq", int(self.n_freq))

    @classmethod
    def from_range(cls, f_start: float, f_stop: float, n_freq: int) -> "FrequencyGrid":
        step = (f_stop - f_start) / (n_freq - 1) if n_freq > 1 else 1.0
        return cls(f_start, step, n_freq)

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_start + self.f_step * np.arange(self.n_freq)

    @property
    def f_stop(self) -> float:
        return self.f_start + self.f_step * (self.n_freq - 1)

    @property
    def max_delay(self) -> float:
        """Unambiguous delay range, 1/f_step."""
        return 1.0 / self.f_step

    @property
    def delay_resolution(self) -> float:
        """Native delay bin of an unpadded transform."""
        return 1.0 / (self.n_freq * self.f_step)


def validate_sns(values, m: Optional[int] = None) -> np.ndarray:
    """Return ``values`` as a float vector after checking the [0, 1] bounds."""
    s = np.asarray(values, dtype=float).reshape(-1)
    if m is not None and s.size != m:
        raise ValueError(f"SnS vector has {s.size} entries, geometry has {m} elements")
    if not np.all((s >= 0.0) & (s <= 1.0)):
        raise ValueError("SnS entries must lie in [0, 1]")
    return s


@dataclass
class PathParams:
    """One propagation path.

    ``distance`` is the range from the array reference to the last-bounce
    scatterer; ``FAR_FIELD`` (infinity) selects a plane wave. ``sns`` is the
    per-element visibility vector, ``None`` meaning fully visible.
    """

    azimuth: float
    elevation: float
    distance: float
    delay: float
    gain: complex
    sns: Optional[np.ndarray] = None

    def __post_init__(self):
        self.azimuth = wrap_azimuth(float(self.azimuth))
        self.elevation = float(self.elevation)
        self.distance = float(self.distance)
        self.delay = float(self.delay)
        self.gain = complex(self.gain)
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if not self.delay >= 0:
            raise ValueError("delay must be non-negative")
        if self.sns is not None:
            self.sns = validate_sns(self.sns)

    @property
    def is_far_field(self) -> bool:
        return math.isinf(self.distance)

    @property
    def power(self) -> float:
        """Array-averaged path power |gain|^2 * mean(sns^2).

        Invariant to the gain/visibility scale ambiguity (sns*k, gain/k).
        """
        p = abs(self.gain) ** 2
        if self.sns is not None:
            p *= float(np.mean(self.sns**2))
        return p

    def sns_for(self, m: int) -> np.ndarray:
        if self.sns is None:
            return np.ones(m)
        return validate_sns(self.sns, m)

    def check_against(self, geom: ArrayGeometry, grid: FrequencyGrid) -> None:
        if self.delay >= grid.max_delay:
            raise ValueError(
                f"delay {self.delay:.4g} s aliases on a grid with 1/f_step = {grid.max_delay:.4g} s"
            )
        if not self.is_far_field and self.distance <= geom.max_radius:
            raise ValueError("path distance must exceed the largest element radius")
        if self.sns is not None:
            validate_sns(self.sns, geom.n_elements)


def wrap_azimuth(az: float) -> float:
    """Map an azimuth in degrees onto [-180, 180)."""
    return (az + 180.0) % 360.0 - 180.0


def build_uca(n_elements: int, radius: float, height: float = 0.0) -> ArrayGeometry:
    """Uniform circular array in the horizontal plane at ``height``.

    Element m sits at angle 2*pi*m/M counter-clockwise from +x, matching the
    order in which a turntable steps a single antenna round. The reference is
    the circle center.
    """
    if int(n_elements) != n_elements or n_elements < 1:
        raise ValueError("n_elements must be a positive integer")
    if not radius > 0:
        raise ValueError("radius must be positive")
    phi = 2.0 * np.pi * np.arange(n_elements) / n_elements
    pos = np.stack([radius * np.cos(phi), radius * np.sin(phi), np.full(n_elements, float(height))], axis=1)
    return ArrayGeometry(pos, np.array([0.0, 0.0, float(height)]), closed=True)


def direction(azimuth: float, elevation: float) -> np.ndarray:
    az, el = np.deg2rad(azimuth), np.deg2rad(elevation)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def source_point(
    azimuth: float, elevation: float, distance: float, reference: Sequence[float] = (0.0, 0.0, 0.0)
) -> np.ndarray:
    if not (distance > 0 and math.isfinite(distance)):
        raise ValueError("distance must be finite and positive")
    return np.asarray(reference, dtype=float) + distance * direction(azimuth, elevation)


def element_response(
    geom: ArrayGeometry, azimuth: float, elevation: float, inv_distance: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-element excess path length and spreading amplitude.

    Parametrized by inverse distance so that 0 is the plane-wave limit. The
    excess path d_m - d is computed in a cancellation-free form, which keeps
    an element at the reference at exactly zero and stays accurate for very
    large distances.
    """
    return direction_response(geom, direction(azimuth, elevation), inv_distance)


def direction_response(geom: ArrayGeometry, e: np.ndarray, inv_distance: float) -> tuple[np.ndarray, np.ndarray]:
    """``element_response`` for an explicit direction vector ``e``."""
    rel = geom.relative
    proj = rel @ e
    r2 = np.einsum("ij,ij->i", rel, rel)
    k = float(inv_distance)
    # (d_m/d)^2 = 1 + k^2 |r|^2 - 2 k e.r
    ratio2 = 1.0 + k * k * r2 - 2.0 * k * proj
    root = np.sqrt(ratio2)
    excess = (k * r2 - 2.0 * proj) / (root + 1.0)
    amp = 1.0 / root
    return excess, amp


def _manifold(excess: np.ndarray, amp: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    phase = (-2.0 * np.pi / SPEED_OF_LIGHT) * np.multiply.outer(excess, freqs)
    return amp[:, None] * np.exp(1j * phase)


def nearfield_manifold(
    geom: ArrayGeometry, grid: FrequencyGrid, azimuth: float, elevation: float, distance: float
) -> np.ndarray:
    """Spherical-wave manifold, shape (M, N), unity at the reference point.

    Entry (m, n) is (d/d_m) * exp(-j 2 pi f_n (d_m - d) / c).
    """
    if math.isinf(distance):
        return farfield_manifold(geom, grid, azimuth, elevation)
    if not distance > geom.max_radius:
        raise ValueError(
            f"source at {distance} m lies inside the array (max element radius {geom.max_radius:.4g} m)"
        )
    excess, amp = element_response(geom, azimuth, elevation, 1.0 / distance)
    return _manifold(excess, amp, grid.frequencies)


def farfield_manifold(geom: ArrayGeometry, grid: FrequencyGrid, azimuth: float, elevation: float) -> np.ndarray:
    """Plane-wave manifold exp(+j 2 pi f_n (p_m . u) / c); unit magnitude."""
    proj = geom.relative @ direction(azimuth, elevation)
    phase = (2.0 * np.pi / SPEED_OF_LIGHT) * np.multiply.outer(proj, grid.frequencies)
    return np.exp(1j * phase)


def path_manifold(geom: ArrayGeometry, grid: FrequencyGrid, path: PathParams, far_field: bool = False) -> np.ndarray:
    if far_field or path.is_far_field:
        return farfield_manifold(geom, grid, path.azimuth, path.elevation)
    return nearfield_manifold(geom, grid, path.azimuth, path.elevation, path.distance)


def fraunhofer_distance(aperture: float, frequency: float) -> float:
    """2 D^2 / lambda."""
    if aperture < 0:
        raise ValueError("aperture must be non-negative")
    if not frequency > 0:
        raise ValueError("frequency must be positive")
    return 2.0 * aperture**2 * frequency / SPEED_OF_LIGHT


@dataclass
class ChannelTensor:
    """M x N complex frequency response (elements x frequencies).

    The geometry is optional because the binary channel file only carries the
    frequency grid; estimation needs it supplied separately.
    """

    data: np.ndarray
    grid: FrequencyGrid
    geometry: Optional[ArrayGeometry] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 2:
            raise ValueError("channel data must be 2-D (elements x frequencies)")
        if self.data.shape[1] != self.grid.n_freq:
            raise ValueError(f"{self.data.shape[1]} frequency columns but grid has {self.grid.n_freq}")
        if self.geometry is not None and self.geometry.n_elements != self.data.shape[0]:
            raise ValueError(f"{self.data.shape[0]} rows but geometry has {self.geometry.n_elements} elements")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def energy(self) -> float:
        return float(np.vdot(self.data, self.data).real)

    def replace(self, data: np.ndarray) -> "ChannelTensor":
        return ChannelTensor(data, self.grid, self.geometry)
