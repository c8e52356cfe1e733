"""Reference scenes: the 720-element measurement replica and a desk-scale twin."""

from __future__ import annotations

import numpy as np

from .core import FAR_FIELD, ArrayGeometry, FrequencyGrid, PathParams, build_uca
from .synth import VrSpec, make_vr_arc

UCA_RADIUS = 0.5
ANTENNA_HEIGHT = 1.25
LOS_DISTANCE = 6.7


def paper_geometry() -> ArrayGeometry:
    """720-element virtual UCA, 0.5 m radius, 0.5 deg turntable step."""
    return build_uca(720, UCA_RADIUS, ANTENNA_HEIGHT)


def paper_grid() -> FrequencyGrid:
    return FrequencyGrid.from_range(16e9, 20e9, 2001)


def desk_geometry(n_elements: int = 180) -> ArrayGeometry:
    return build_uca(n_elements, UCA_RADIUS, ANTENNA_HEIGHT)


def desk_grid(n_freq: int = 201) -> FrequencyGrid:
    return FrequencyGrid.from_range(16e9, 20e9, n_freq)


def multipath_scene(m: int, grid: FrequencyGrid, sns: bool = False) -> list[PathParams]:
    """Ten well-separated paths whose powers span 25 dB.

    The first path is the line of sight at 6.7 m. With ``sns=True`` three of
    the scattered paths get partial visibility arcs.
    """
    # azimuth, elevation, distance, delay (ns), relative power (dB)
    table = [
        (12.0, 0.0, LOS_DISTANCE, 22.35, 0.0),
        (-101.3, 0.0, 4.1, 27.1, -3.0),
        (147.6, 10.0, 9.3, 31.7, -6.0),
        (63.2, 0.0, 3.2, 35.2, -9.0),
        (-38.5, 20.0, 14.8, 39.9, -12.0),
        (-167.1, 0.0, 5.6, 24.9, -15.0),
        (101.4, 10.0, 22.0, 43.3, -18.0),
        (-72.9, 0.0, FAR_FIELD, 29.4, -21.0),
        (171.3, 20.0, 7.7, 37.6, -23.0),
        (33.7, 0.0, 11.1, 46.2, -25.0),
    ]
    arcs = {
        1: VrSpec(center_index=int(0.20 * m), width=int(0.5 * m), taper_len=max(1, m // 36)),
        3: VrSpec(center_index=int(0.55 * m), width=int(0.3 * m), taper_len=max(1, m // 36), plateau_level=0.8),
        5: VrSpec(center_index=int(0.85 * m), width=int(0.4 * m), taper_len=0),
    }
    phases = np.linspace(0.3, 5.9, len(table))
    paths = []
    for i, (az, el, d, tau_ns, p_db) in enumerate(table):
        delay = tau_ns * 1e-9
        if delay >= grid.max_delay:
            raise ValueError("scene delays exceed the grid's unambiguous range")
        gain = 10 ** (p_db / 20) * np.exp(1j * phases[i])
        s = make_vr_arc(m, arcs[i]) if (sns and i in arcs) else None
        paths.append(PathParams(az, el, d, delay, gain, s))
    return paths
