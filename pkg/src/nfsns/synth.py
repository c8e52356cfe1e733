"""Ground-truth channel synthesis under the FF, NF-stationary and NF-SnS assumptions."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    ArrayGeometry,
    ChannelTensor,
    FrequencyGrid,
    PathParams,
    farfield_manifold,
    nearfield_manifold,
)


class SynthesisMode(enum.Enum):
    FF = "ff"
    NF_STATIONARY = "nf-stationary"
    NF_SNS = "nf-sns"

    @classmethod
    def parse(cls, text: str) -> "SynthesisMode":
        key = str(text).strip().lower().replace("_", "-")
        for mode in cls:
            if mode.value == key:
                return mode
        raise ValueError(f"unknown mode {text!r}; expected one of FF, nf-stationary, nf-sns")


@dataclass(frozen=True)
class VrSpec:
    """A single circular visibility arc with raised-cosine edges.

    The arc spans ``width`` elements; the outer ``taper_len`` elements on each
    side ramp from ``plateau_level`` down toward zero.
    """

    center_index: int
    width: int
    taper_len: int = 0
    plateau_level: float = 1.0

    def validate(self, m: int) -> None:
        if self.width < 0 or self.width > m:
            raise ValueError(f"VR width {self.width} must lie in [0, {m}]")
        if self.taper_len < 0 or 2 * self.taper_len > self.width:
            raise ValueError("taper_len must satisfy 0 <= taper_len <= width/2")
        if not 0.0 < self.plateau_level <= 1.0:
            raise ValueError("plateau_level must lie in (0, 1]")


def make_vr_arc(m: int, spec: VrSpec) -> np.ndarray:
    spec.validate(m)
    s = np.zeros(m)
    if spec.width == 0:
        return s
    start = spec.center_index - spec.width // 2
    profile = np.full(spec.width, spec.plateau_level)
    t = spec.taper_len
    if t:
        # half-sample offsets make each ramp sum to exactly t/2
        ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(t) + 0.5) / t))
        profile[:t] *= ramp
        profile[-t:] *= ramp[::-1]
    s[(start + np.arange(spec.width)) % m] = profile
    return s


def path_contribution(
    geom: ArrayGeometry, grid: FrequencyGrid, path: PathParams, mode: SynthesisMode
) -> np.ndarray:
    """S_l * A_l(f) * alpha_l * exp(-j 2 pi f tau_l) for one path, shape (M, N)."""
    path.check_against(geom, grid)
    freqs = grid.frequencies
    if mode is SynthesisMode.FF or path.is_far_field:
        a = farfield_manifold(geom, grid, path.azimuth, path.elevation)
    else:
        a = nearfield_manifold(geom, grid, path.azimuth, path.elevation, path.distance)
    h_ref = path.gain * np.exp(-2j * np.pi * freqs * path.delay)
    out = a * h_ref[None, :]
    if mode is SynthesisMode.NF_SNS:
        out *= path.sns_for(geom.n_elements)[:, None]
    return out


def synthesize_cfr(
    geom: ArrayGeometry, grid: FrequencyGrid, paths: Iterable[PathParams], mode: SynthesisMode
) -> ChannelTensor:
    mode = mode if isinstance(mode, SynthesisMode) else SynthesisMode.parse(mode)
    data = np.zeros((geom.n_elements, grid.n_freq), dtype=complex)
    for path in paths:
        data += path_contribution(geom, grid, path, mode)
    return ChannelTensor(data, grid, geom)


def add_noise(tensor: ChannelTensor, snr_db: float, seed: int) -> ChannelTensor:
    """Add circular complex white Gaussian noise at a tensor-wide SNR.

    Noise for element m comes from its own PCG64 stream, spawned from
    ``numpy.random.SeedSequence(seed)``, so rows can be generated in any
    order and the result depends only on (seed, shape).
    """
    energy = tensor.energy
    if not energy > 0:
        raise ValueError("cannot set an SNR on a zero-energy tensor")
    m, n = tensor.shape
    sigma2 = energy / (m * n) / 10.0 ** (snr_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)
    noise = np.empty((m, n), dtype=complex)
    for row, child in enumerate(np.random.SeedSequence(seed).spawn(m)):
        rng = np.random.Generator(np.random.PCG64(child))
        z = rng.standard_normal(2 * n)
        noise[row] = z[:n] + 1j * z[n:]
    return tensor.replace(tensor.data + scale * noise)
