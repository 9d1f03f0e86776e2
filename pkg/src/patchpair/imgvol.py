"""Image/volume data model, raw-volume file I/O, and patch addressing.

A 2D image is a plain ``(H, W)`` float ndarray. Volumes stack slices into a
``(S, H, W)`` float32 array, the canonical on-disk precision. All containers
are immutable after construction and safe to share between workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

VALID_LABELS = ("LR", "HR")


def require_image(img: np.ndarray) -> np.ndarray:
    """Validate a 2D image array: two dims, at least one pixel, all finite."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2D image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class Volume:
    """Ordered slices of one patient, stored as a read-only (S, H, W) float32 array."""

    patient_id: str
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"volume data must be (slices, height, width), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError(f"volume {self.patient_id!r} contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def slice(self, index: int) -> np.ndarray:
        return self.data[index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.patient_id == other.patient_id
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """One domain's worth of volumes (label "LR" or "HR"), unique patient ids."""

    label: str
    volumes: tuple

    def __post_init__(self):
        if self.label not in VALID_LABELS:
            raise ValueError(f"dataset label must be one of {VALID_LABELS}, got {self.label!r}")
        vols = tuple(self.volumes)
        ids = [v.patient_id for v in vols]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate patient ids in dataset")
        object.__setattr__(self, "volumes", vols)

    def volume(self, patient_id: str) -> Volume:
        for v in self.volumes:
            if v.patient_id == patient_id:
                return v
        raise KeyError(patient_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.label == other.label and self.volumes == other.volumes


@dataclass(frozen=True)
class PatchRef:
    """Addressable square patch: (patient, slice, top-left row/col, edge size)."""

    patient_id: str
    slice_index: int
    row: int
    col: int
    size: int

    def __post_init__(self):
        if self.slice_index < 0 or self.row < 0 or self.col < 0 or self.size < 1:
            raise ValueError(f"invalid patch reference {self}")

    def sort_key(self):
        return (self.patient_id, self.slice_index, self.row, self.col)


def extract_patch(img: np.ndarray, ref: PatchRef) -> np.ndarray:
    """Copy the ``ref.size`` x ``ref.size`` window at (ref.row, ref.col)."""
    arr = require_image(img)
    h, w = arr.shape
    if ref.row + ref.size > h or ref.col + ref.size > w:
        raise ValueError(
            f"patch ({ref.row},{ref.col},size={ref.size}) out of bounds for {h}x{w} image"
        )
    return arr[ref.row : ref.row + ref.size, ref.col : ref.col + ref.size].copy()


def normalize_volume(v: Volume) -> Volume:
    """Affine min-max rescale of the whole volume to [0, 1]; constant volumes map to zeros."""
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi == lo:
        return Volume(v.patient_id, np.zeros_like(v.data))
    out = (v.data.astype(np.float64) - lo) / (hi - lo)
    return Volume(v.patient_id, out)


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_volume(v: Volume, path) -> None:
    """Write ``<path>`` (little-endian float32 payload) plus the ``<path>.json`` sidecar."""
    path = Path(path)
    header = {
        "patient_id": v.patient_id,
        "height": v.height,
        "width": v.width,
        "slices": v.n_slices,
    }
    path.write_bytes(v.data.astype("<f4").tobytes())
    _header_path(path).write_text(json.dumps(header, sort_keys=True) + "\n")


def load_volume(path) -> Volume:
    """Read a raw volume file and its sidecar header; inverse of save_volume, bit-exact."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"volume file not found: {path}")
    hpath = _header_path(path)
    if not hpath.exists():
        raise FileNotFoundError(f"missing sidecar header: {hpath}")
    try:
        header = json.loads(hpath.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"unreadable sidecar header {hpath}: {e}") from e
    try:
        pid = header["patient_id"]
        h, w, s = int(header["height"]), int(header["width"]), int(header["slices"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"contradictory or incomplete header {hpath}: {e}") from e
    if h < 1 or w < 1 or s < 1:
        raise ValueError(f"contradictory header {hpath}: non-positive dimensions")
    raw = path.read_bytes()
    expected = h * w * s * 4
    if len(raw) != expected:
        raise ValueError(
            f"length mismatch for {path}: payload {len(raw)} bytes, header implies {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(s, h, w)
    if not np.isfinite(data).all():
        raise ValueError(f"volume {path} contains non-finite values")
    return Volume(pid, data)


def load_dataset(dir_path, label: str) -> Dataset:
    """Load every ``*.vol`` under a directory (sorted by filename) as one dataset."""
    dir_path = Path(dir_path)
    paths = sorted(dir_path.glob("*.vol"))
    if not paths:
        raise ValueError(f"no *.vol files in {dir_path}")
    return Dataset(label, tuple(load_volume(p) for p in paths))


def save_dataset(ds: Dataset, dir_path) -> None:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for v in ds.volumes:
        save_volume(v, dir_path / f"{v.patient_id}.vol")


def write_pgm(img: np.ndarray, path) -> None:
    """Export one slice as 16-bit binary PGM, mapping [0, 1] linearly onto [0, 65535]."""
    arr = require_image(img)
    q = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = arr.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + q.tobytes())
