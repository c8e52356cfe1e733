"""Channel files, path-list documents, configs and heatmap exports.

Channel tensors go to a small fixed-endian binary format::

    offset  size  field
    0       8     magic b"ELAACFR1"
    8       4     version (u32)
    12      4     number of elements M (u32)
    16      4     number of frequencies N (u32)
    20      8     first frequency in Hz (f64)
    28      8     frequency step in Hz (f64)
    36      16MN  samples, element-major, (f64 real, f64 imag) pairs

Everything is little-endian, so files are bit-exact across platforms. All
writers go through a temporary file in the target directory followed by an
atomic rename.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from .core import FAR_FIELD, ArrayGeometry, ChannelTensor, FrequencyGrid, PathParams, build_uca
from .estimator import EstimatorConfig, ScanGrid
from .synth import VrSpec, make_vr_arc

PathLike = Union[str, os.PathLike]

MAGIC = b"ELAACFR1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIIIdd")
SAMPLE_DTYPE = np.dtype("<c16")

SCHEMA_VERSION = 1


class FormatError(ValueError):
    """A file or document does not follow its declared format."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


# -- atomic writes -----------------------------------------------------------


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _atomic_write(path: PathLike, chunks: Sequence[bytes]) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
            fh.flush()
            os.fsync(fh.fileno())
        # mkstemp creates 0600; give the file the mode a plain open() would
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_bytes(path: PathLike, data: bytes) -> None:
    _atomic_write(path, [data])


def write_text(path: PathLike, text: str) -> None:
    _atomic_write(path, [text.encode("utf-8")])


def write_json(path: PathLike, obj: Any) -> None:
    write_text(path, dumps_json(obj))


def dumps_json(obj: Any) -> str:
    # no NaN/Infinity tokens: they are not JSON
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def load_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


# -- channel files -----------------------------------------------------------


@dataclass(frozen=True)
class ChannelFileHeader:
    m_elements: int
    n_freq: int
    f_start_hz: float
    f_step_hz: float
    version: int = FORMAT_VERSION

    @property
    def payload_bytes(self) -> int:
        return 16 * self.m_elements * self.n_freq

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.f_start_hz, self.f_step_hz, self.n_freq)

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.m_elements, self.n_freq, self.f_start_hz, self.f_step_hz)

    @classmethod
    def unpack(cls, raw: bytes) -> "ChannelFileHeader":
        if len(raw) >= len(MAGIC) and raw[: len(MAGIC)] != MAGIC:
            raise BadMagicError(f"bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}")
        if len(raw) < HEADER.size:
            if raw[: len(MAGIC)] != MAGIC[: len(raw)]:
                raise BadMagicError(f"bad magic {raw!r}, expected {MAGIC!r}")
            raise TruncatedError(f"header is {len(raw)} bytes, expected {HEADER.size}")
        _, version, m, n, f0, df = HEADER.unpack(raw[: HEADER.size])
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"format version {version} is not supported (expected {FORMAT_VERSION})")
        return cls(m, n, f0, df, version)


def write_channel(path: PathLike, tensor: ChannelTensor) -> ChannelFileHeader:
    m, n = tensor.shape
    grid = tensor.grid
    header = ChannelFileHeader(m, n, float(grid.f_start), float(grid.f_step))
    payload = np.ascontiguousarray(tensor.data, dtype=SAMPLE_DTYPE).tobytes()
    _atomic_write(path, [header.pack(), payload])
    return header


def read_header(path: PathLike) -> ChannelFileHeader:
    with open(path, "rb") as fh:
        return ChannelFileHeader.unpack(fh.read(HEADER.size))


def read_channel(path: PathLike, geometry: Optional[ArrayGeometry] = None) -> ChannelTensor:
    """Read a channel file; the header is validated before any payload is read."""
    with open(path, "rb") as fh:
        header = ChannelFileHeader.unpack(fh.read(HEADER.size))
        raw = fh.read(header.payload_bytes + 1)
    if len(raw) < header.payload_bytes:
        raise TruncatedError(f"payload is {len(raw)} bytes, header promises {header.payload_bytes}")
    if len(raw) > header.payload_bytes:
        raise FormatError("trailing bytes after the payload")
    if geometry is not None and geometry.n_elements != header.m_elements:
        raise FormatError(f"file has {header.m_elements} elements, geometry has {geometry.n_elements}")
    data = np.frombuffer(raw, dtype=SAMPLE_DTYPE).reshape(header.m_elements, header.n_freq)
    return ChannelTensor(data.astype(complex), header.grid, geometry)


# -- geometry and grid documents ---------------------------------------------


def geometry_to_json(geom: ArrayGeometry) -> dict:
    """Compact UCA description when the geometry is one, explicit positions otherwise."""
    uca = _as_uca(geom)
    if uca is not None:
        return uca
    return {
        "type": "positions",
        "positions": geom.positions.tolist(),
        "reference": geom.reference.tolist(),
        "closed": bool(geom.closed),
    }


def _as_uca(geom: ArrayGeometry) -> Optional[dict]:
    if not geom.closed:
        return None
    rel = geom.relative
    radius = float(np.hypot(rel[0, 0], rel[0, 1]))
    spec = {"type": "uca", "n_elements": geom.n_elements, "radius_m": radius, "height_m": float(geom.reference[2])}
    try:
        ref = geometry_from_json(spec)
    except ValueError:
        return None
    if np.array_equal(ref.positions, geom.positions) and np.array_equal(ref.reference, geom.reference):
        return spec
    return None


def geometry_from_json(obj: Any, base_dir: Optional[PathLike] = None) -> ArrayGeometry:
    if not isinstance(obj, dict):
        raise FormatError("geometry must be a JSON object")
    if "file" in obj:
        target = Path(obj["file"])
        if base_dir is not None and not target.is_absolute():
            target = Path(base_dir) / target
        doc = load_json(target)
        # a geometry file may hold the geometry itself or a document containing one
        return geometry_from_json(doc.get("geometry", doc), target.parent)
    kind = obj.get("type", "uca" if "n_elements" in obj else "positions")
    try:
        if kind == "uca":
            return build_uca(int(obj["n_elements"]), float(obj["radius_m"]), float(obj.get("height_m", 0.0)))
        if kind == "positions":
            pos = np.asarray(obj["positions"], dtype=float)
            ref = obj.get("reference")
            ref = pos.mean(axis=0) if ref is None else np.asarray(ref, dtype=float)
            return ArrayGeometry(pos, ref, bool(obj.get("closed", False)))
    except KeyError as exc:
        raise FormatError(f"geometry is missing field {exc}") from None
    raise FormatError(f"unknown geometry type {kind!r}")


def grid_to_json(grid: FrequencyGrid) -> dict:
    return {"f_start_hz": grid.f_start, "f_step_hz": grid.f_step, "n_freq": grid.n_freq}


def grid_from_json(obj: Any) -> FrequencyGrid:
    if not isinstance(obj, dict):
        raise FormatError("grid must be a JSON object")
    try:
        n = int(obj["n_freq"])
        if "f_step_hz" in obj:
            return FrequencyGrid(float(obj["f_start_hz"]), float(obj["f_step_hz"]), n)
        return FrequencyGrid.from_range(float(obj["f_start_hz"]), float(obj["f_stop_hz"]), n)
    except KeyError as exc:
        raise FormatError(f"grid is missing field {exc}") from None


# -- path lists --------------------------------------------------------------


def path_to_json(path: PathParams) -> dict:
    sns: Union[str, list] = "ones"
    if path.sns is not None and not np.all(path.sns == 1.0):
        sns = [float(v) for v in path.sns]
    return {
        "azimuth_deg": float(path.azimuth),
        "elevation_deg": float(path.elevation),
        "distance_m": "far_field" if math.isinf(path.distance) else float(path.distance),
        "delay_s": float(path.delay),
        "gain_re": float(path.gain.real),
        "gain_im": float(path.gain.imag),
        "sns": sns,
    }


def path_from_json(obj: Any, m: Optional[int] = None) -> PathParams:
    if not isinstance(obj, dict):
        raise FormatError("each path must be a JSON object")
    try:
        dist = obj["distance_m"]
        if dist == "far_field":
            dist = FAR_FIELD
        elif isinstance(dist, str):
            raise FormatError(f"distance_m must be a number or 'far_field', got {dist!r}")
        sns = obj.get("sns", "ones")
        if sns == "ones":
            sns = None
        elif isinstance(sns, dict):
            # an arc shorthand for hand-written configs
            if m is None:
                raise FormatError("an arc SnS needs the array size")
            sns = make_vr_arc(m, VrSpec(**sns))
        elif isinstance(sns, list):
            sns = np.asarray(sns, dtype=float)
            if m is not None and sns.shape != (m,):
                raise FormatError(f"sns has {sns.size} entries, the array has {m} elements")
        else:
            raise FormatError("sns must be 'ones', a list or an arc object")
        return PathParams(
            azimuth=float(obj["azimuth_deg"]),
            elevation=float(obj.get("elevation_deg", 0.0)),
            distance=float(dist),
            delay=float(obj["delay_s"]),
            gain=complex(float(obj.get("gain_re", 1.0)), float(obj.get("gain_im", 0.0))),
            sns=sns,
        )
    except KeyError as exc:
        raise FormatError(f"path is missing field {exc}") from None
    except TypeError as exc:
        raise FormatError(f"malformed path: {exc}") from None


@dataclass
class PathListDocument:
    geometry: ArrayGeometry
    paths: list[PathParams]
    grid: Optional[FrequencyGrid] = None
    extras: Optional[list[dict]] = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        entries = []
        for i, p in enumerate(self.paths):
            entry = path_to_json(p)
            if self.extras is not None:
                entry.update(self.extras[i])
            entries.append(entry)
        doc = {"schema_version": self.schema_version, "geometry": geometry_to_json(self.geometry)}
        if self.grid is not None:
            doc["grid"] = grid_to_json(self.grid)
        doc["paths"] = entries
        return doc

    @classmethod
    def from_json(cls, obj: Any, base_dir: Optional[PathLike] = None) -> "PathListDocument":
        if not isinstance(obj, dict):
            raise FormatError("a path list must be a JSON object")
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise VersionMismatchError(f"path-list schema version {version!r} is not supported")
        if "geometry" not in obj:
            raise FormatError("path list has no geometry")
        geom = geometry_from_json(obj["geometry"], base_dir)
        grid = grid_from_json(obj["grid"]) if obj.get("grid") is not None else None
        raw = obj.get("paths", [])
        if not isinstance(raw, list):
            raise FormatError("paths must be a list")
        paths = [path_from_json(p, geom.n_elements) for p in raw]
        return cls(geom, paths, grid, None, version)


def write_path_list(path: PathLike, doc: PathListDocument) -> None:
    write_json(path, doc.to_json())


def read_path_list(path: PathLike) -> PathListDocument:
    return PathListDocument.from_json(load_json(path), Path(path).parent)


# -- estimator configs -------------------------------------------------------


def _dataclass_from(cls, obj: Any, what: str):
    if obj is None:
        return cls()
    if not isinstance(obj, dict):
        raise FormatError(f"{what} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise FormatError(f"unknown {what} field(s): {', '.join(unknown)}")
    obj = {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid {what}: {exc}") from None


def estimator_config_from_json(obj: Any) -> tuple[EstimatorConfig, ScanGrid]:
    obj = obj or {}
    return (
        _dataclass_from(EstimatorConfig, obj.get("estimator"), "estimator config"),
        _dataclass_from(ScanGrid, obj.get("scan"), "scan config"),
    )


def estimator_config_to_json(cfg: EstimatorConfig, scan: ScanGrid) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v

    return {
        "estimator": {k: plain(v) for k, v in dataclasses.asdict(cfg).items()},
        "scan": {k: plain(v) for k, v in dataclasses.asdict(scan).items()},
    }


# -- heatmap exports ---------------------------------------------------------


def heatmap_csv(db: np.ndarray) -> str:
    """Rows are elements; '.' decimals and '\\n' line ends regardless of locale."""
    return "".join(",".join(format(float(v), ".4f") for v in row) + "\n" for row in np.asarray(db))


def heatmap_pgm(db: np.ndarray, floor_db: float) -> bytes:
    """8-bit binary PGM: ``floor_db`` maps to 0 and 0 dB to 255, clipped."""
    if not floor_db < 0:
        raise ValueError("floor_db must be negative")
    db = np.asarray(db, dtype=float)
    level = np.rint(255.0 * (db - floor_db) / (-floor_db))
    pixels = np.clip(level, 0, 255).astype(np.uint8)
    rows, cols = pixels.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError("not a binary PGM written by this package")
    cols, rows = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise FormatError("only maxval 255 is supported")
    data = parts[3]
    if len(data) != rows * cols:
        raise TruncatedError(f"PGM has {len(data)} pixel bytes, expected {rows * cols}")
    return np.frombuffer(data, dtype=np.uint8).reshape(rows, cols)
