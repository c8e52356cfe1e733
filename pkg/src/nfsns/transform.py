"""Frequency-to-delay processing: windowed IDFT, power-delay profiles, heatmaps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import ChannelTensor

AVERAGE = "average"

WINDOWS = ("rect", "hann", "hamming")


def window_taps(name: str, n: int) -> np.ndarray:
    if name == "rect":
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    if name == "hamming":
        return np.hamming(n)
    raise ValueError(f"unknown window {name!r}; expected one of {WINDOWS}")


@dataclass
class CirTensor:
    """Per-element impulse responses, M x K, with bin k at delay k * delay_step."""

    data: np.ndarray
    delay_step: float
    window: str
    zero_pad_factor: int

    @property
    def delays(self) -> np.ndarray:
        return self.delay_step * np.arange(self.data.shape[1])


def cfr_to_cir(tensor: ChannelTensor, window: str = "hann", zero_pad_factor: int = 4) -> CirTensor:
    """Window, zero-pad and inverse-DFT each element's frequency response.

    h_m[k] = sum_n w_n H_m(f_n) exp(+j 2 pi n k / K) / sum_n w_n, so an
    on-grid single path peaks at magnitude |gain| whatever the window.
    """
    if int(zero_pad_factor) != zero_pad_factor or zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be an integer >= 1")
    m, n = tensor.shape
    if n < 2:
        raise ValueError("need at least two frequency points")
    w = window_taps(window, n)
    if not w.sum() > 0:
        raise ValueError(f"{window} window of length {n} is identically zero")
    k = n * int(zero_pad_factor)
    h = np.fft.ifft(tensor.data * w[None, :], n=k, axis=1) * (k / w.sum())
    return CirTensor(h, 1.0 / (k * tensor.grid.f_step), window, int(zero_pad_factor))


def cfr_to_cir_direct(tensor: ChannelTensor, window: str = "hann", zero_pad_factor: int = 4) -> CirTensor:
    """O(N K) direct summation of the same transform; used as a test oracle."""
    m, n = tensor.shape
    w = window_taps(window, n)
    k = n * int(zero_pad_factor)
    kernel = np.exp(2j * np.pi * np.outer(np.arange(n), np.arange(k)) / k)
    h = (tensor.data * w[None, :]) @ kernel / w.sum()
    return CirTensor(h, 1.0 / (k * tensor.grid.f_step), window, int(zero_pad_factor))


def power_delay_profile(cir: CirTensor, element: Union[int, str] = AVERAGE) -> np.ndarray:
    power = np.abs(cir.data) ** 2
    if isinstance(element, str):
        if element.lower() != AVERAGE:
            raise ValueError(f"element must be an index or {AVERAGE!r}")
        p = power.mean(axis=0)
    else:
        if not 0 <= element < power.shape[0]:
            raise ValueError(f"element index {element} out of range [0, {power.shape[0]})")
        p = power[element]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p)


def cir_heatmap(cir: CirTensor, floor_db: float = -30.0) -> np.ndarray:
    """Element x delay magnitude in dB, peak at 0 dB, clipped at ``floor_db``."""
    if not floor_db < 0:
        raise ValueError("floor_db must be negative")
    mag = np.abs(cir.data)
    peak = mag.max()
    if not peak > 0:
        raise ValueError("CIR is identically zero")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak)
    return np.maximum(db, floor_db)
