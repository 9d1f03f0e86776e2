"""Three-level LR/HR patch matching, manifests, and weight statistics.

Matching proceeds patient -> slice -> patch, each level an argmax of the
configured similarity metric; the patient and/or slice levels can be dropped,
down to the exhaustive search over every candidate patch. All ties break
lexicographically by (patient_id, slice, row, col) so repeated runs produce
byte-identical manifests regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from .imgvol import Dataset, PatchRef, Volume
from .similarity import (
    HistogramSpec,
    RbfParams,
    SimilarityKind,
    ZeroVarianceError,
    similarity,
    to_weight,
)

MANIFEST_FORMAT = "patchpair-manifest/1"


class MatchLevels(Enum):
    HIERARCHICAL = "hierarchical"
    SLICE_AND_PATCH = "slice-patch"
    PATCH_ONLY = "patch-only"


class FingerprintMismatchWarning(UserWarning):
    """A manifest was recorded against different dataset content."""


@dataclass(frozen=True)
class MatchConfig:
    patch_size: int = 128
    stride: int = 64
    metric: SimilarityKind = SimilarityKind.NMI
    hist: HistogramSpec = HistogramSpec()
    rbf: RbfParams = RbfParams()
    threshold: float = 0.4
    levels: MatchLevels = MatchLevels.HIERARCHICAL

    def __post_init__(self):
        if not 0 < self.stride <= self.patch_size:
            raise ValueError("need 0 < stride <= patch_size")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "stride": self.stride,
            "metric": self.metric.value,
            "bins": self.hist.bins,
            "value_range": list(self.hist.value_range),
            "gamma": self.rbf.gamma,
            "threshold": self.threshold,
            "levels": self.levels.value,
        }

    @staticmethod
    def from_dict(d: dict) -> "MatchConfig":
        return MatchConfig(
            patch_size=int(d["patch_size"]),
            stride=int(d["stride"]),
            metric=SimilarityKind(d["metric"]),
            hist=HistogramSpec(bins=int(d["bins"]), value_range=tuple(d["value_range"])),
            rbf=RbfParams(gamma=d["gamma"]),
            threshold=float(d["threshold"]),
            levels=MatchLevels(d["levels"]),
        )


@dataclass(frozen=True)
class MatchRecord:
    lr: PatchRef
    hr: PatchRef
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight {self.weight} outside [0, 1]")


@dataclass(eq=False)
class Manifest:
    records: list
    config: MatchConfig
    lr_fingerprint: str
    hr_fingerprint: str
    created: str = field(default="", compare=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Manifest):
            return NotImplemented
        return (
            self.records == other.records
            and self.config == other.config
            and self.lr_fingerprint == other.lr_fingerprint
            and self.hr_fingerprint == other.hr_fingerprint
        )


@dataclass(frozen=True, eq=False)
class MatchStats:
    bin_edges: np.ndarray  # (bins + 1,)
    counts: np.ndarray  # (bins,)
    mean: float
    weights: np.ndarray

    def fraction_in(self, lo: float, hi: float) -> float:
        """Fraction of weights in the closed interval [lo, hi]."""
        return float(((self.weights >= lo) & (self.weights <= hi)).mean())


def dataset_fingerprint(ds: Dataset) -> str:
    """Content hash over label, patient ids, dimensions and raw pixel bytes."""
    h = hashlib.sha256()
    h.update(ds.label.encode())
    for v in sorted(ds.volumes, key=lambda v: v.patient_id):
        h.update(v.patient_id.encode())
        h.update(np.int64(v.data.shape).tobytes())
        h.update(v.data.astype("<f4").tobytes())
    return "sha256:" + h.hexdigest()


def patch_grid(h: int, w: int, size: int, stride: int):
    """Top-left corners covering the image: stride multiples plus a final
    flush-to-border position on each axis, deduplicated and sorted."""
    if size > h or size > w:
        raise ValueError(f"patch size {size} exceeds image dims {h}x{w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = sorted(set(range(0, h - size + 1, stride)) | {h - size})
    cols = sorted(set(range(0, w - size + 1, stride)) | {w - size})
    return [(r, c) for r in rows for c in cols]


def _score(metric: SimilarityKind, x: np.ndarray, y: np.ndarray, cfg: MatchConfig) -> float:
    try:
        return float(similarity(metric, x, y, hist=cfg.hist, rbf_params=cfg.rbf))
    except ZeroVarianceError:
        # degenerate PCC candidates rank below every valid correlation
        return -1.0


def _mean_image(vol: Volume) -> np.ndarray:
    return vol.data.mean(axis=0, dtype=np.float64)


def match_patient(lr_vol: Volume, hr_set: Dataset, cfg: MatchConfig) -> str:
    """HR patient whose mean image (pixel-wise over slices) is most similar to
    the LR volume's mean image; ties go to the smallest patient_id."""
    if not hr_set.volumes:
        raise ValueError("empty HR set")
    lr_mean = _mean_image(lr_vol)
    best_pid = None
    best = -np.inf
    for v in sorted(hr_set.volumes, key=lambda v: v.patient_id):
        s = _score(cfg.metric, lr_mean, _mean_image(v), cfg)
        if s > best:
            best, best_pid = s, v.patient_id
    return best_pid


def _best_slice(lr_slice: np.ndarray, hr_vol: Volume, cfg: MatchConfig):
    best_idx = None
    best = -np.inf
    for idx in range(hr_vol.n_slices):
        s = _score(cfg.metric, lr_slice, hr_vol.data[idx], cfg)
        if s > best:
            best, best_idx = s, idx
    return best, best_idx


def match_slice(lr_slice: np.ndarray, hr_vol: Volume, cfg: MatchConfig) -> int:
    """Index of the most similar slice in the HR volume; ties go to the smallest index."""
    if hr_vol.n_slices < 1:
        raise ValueError("empty HR volume")
    return _best_slice(lr_slice, hr_vol, cfg)[1]


def match_patch(
    lr_patch: np.ndarray,
    hr_slice: np.ndarray,
    cfg: MatchConfig,
    *,
    patient_id: str = "",
    slice_index: int = 0,
):
    """Best grid-position window of hr_slice for the query patch.

    Returns (PatchRef, weight) with ties broken by smallest (row, col).
    """
    size = lr_patch.shape[0]
    if lr_patch.shape[0] != lr_patch.shape[1]:
        raise ValueError("query patch must be square")
    h, w = hr_slice.shape
    best = -np.inf
    best_pos = None
    for r, c in patch_grid(h, w, size, cfg.stride):
        s = _score(cfg.metric, lr_patch, hr_slice[r : r + size, c : c + size], cfg)
        if s > best:
            best, best_pos = s, (r, c)
    ref = PatchRef(patient_id, slice_index, best_pos[0], best_pos[1], size)
    return ref, to_weight(cfg.metric, best)


def _validate_sets(lr_set: Dataset, hr_set: Dataset, cfg: MatchConfig):
    if not lr_set.volumes or not hr_set.volumes:
        raise ValueError("both datasets must be non-empty")
    dims = {(v.height, v.width) for v in lr_set.volumes} | {(v.height, v.width) for v in hr_set.volumes}
    if len(dims) != 1:
        raise ValueError(f"datasets must have uniform dimensions, got {sorted(dims)}")
    (h, w) = next(iter(dims))
    if cfg.patch_size > h or cfg.patch_size > w:
        raise ValueError(f"patch size {cfg.patch_size} exceeds image dims {h}x{w}")
    return h, w


def _run_tasks(tasks, fn, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _finish(records, cfg, lr_set, hr_set) -> Manifest:
    records.sort(key=lambda r: r.lr.sort_key())
    seen = set()
    unique = []
    for r in records:
        if r.lr not in seen:
            seen.add(r.lr)
            unique.append(r)
    return Manifest(
        records=unique,
        config=cfg,
        lr_fingerprint=dataset_fingerprint(lr_set),
        hr_fingerprint=dataset_fingerprint(hr_set),
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def match_hierarchical(lr_set: Dataset, hr_set: Dataset, cfg: MatchConfig, *, workers: int = 1) -> Manifest:
    """Run the matching workflow at the configured levels and collect all
    pre-threshold records, sorted by LR patch reference."""
    h, w = _validate_sets(lr_set, hr_set, cfg)
    if cfg.levels is MatchLevels.PATCH_ONLY:
        return match_exhaustive(lr_set, hr_set, cfg, workers=workers)
    grid = patch_grid(h, w, cfg.patch_size, cfg.stride)

    tasks = []
    for lr_vol in sorted(lr_set.volumes, key=lambda v: v.patient_id):
        hr_vol = None
        if cfg.levels is MatchLevels.HIERARCHICAL:
            hr_vol = hr_set.volume(match_patient(lr_vol, hr_set, cfg))
        for s_idx in range(lr_vol.n_slices):
            lr_slice = lr_vol.data[s_idx]
            if cfg.levels is MatchLevels.HIERARCHICAL:
                h_idx = match_slice(lr_slice, hr_vol, cfg)
                target_vol, target_idx = hr_vol, h_idx
            else:  # SLICE_AND_PATCH: best slice across every HR patient
                best = -np.inf
                target_vol, target_idx = None, None
                for v in sorted(hr_set.volumes, key=lambda v: v.patient_id):
                    s, idx = _best_slice(lr_slice, v, cfg)
                    if s > best:
                        best, target_vol, target_idx = s, v, idx
            tasks.append((lr_vol.patient_id, s_idx, lr_slice, target_vol.patient_id, target_idx, target_vol.data[target_idx]))

    def run(task):
        l_pid, s_idx, lr_slice, h_pid, h_idx, hr_slice = task
        out = []
        for r, c in grid:
            patch = lr_slice[r : r + cfg.patch_size, c : c + cfg.patch_size]
            ref, weight = match_patch(patch, hr_slice, cfg, patient_id=h_pid, slice_index=h_idx)
            out.append(MatchRecord(PatchRef(l_pid, s_idx, r, c, cfg.patch_size), ref, weight))
        return out

    records = [rec for chunk in _run_tasks(tasks, run, workers) for rec in chunk]
    return _finish(records, cfg, lr_set, hr_set)


def match_exhaustive(lr_set: Dataset, hr_set: Dataset, cfg: MatchConfig, *, workers: int = 1) -> Manifest:
    """Argmax over every HR patient, slice and grid position for each LR patch."""
    h, w = _validate_sets(lr_set, hr_set, cfg)
    grid = patch_grid(h, w, cfg.patch_size, cfg.stride)
    hr_vols = sorted(hr_set.volumes, key=lambda v: v.patient_id)

    tasks = []
    for lr_vol in sorted(lr_set.volumes, key=lambda v: v.patient_id):
        for s_idx in range(lr_vol.n_slices):
            tasks.append((lr_vol.patient_id, s_idx, lr_vol.data[s_idx]))

    def run(task):
        l_pid, s_idx, lr_slice = task
        out = []
        for r, c in grid:
            patch = lr_slice[r : r + cfg.patch_size, c : c + cfg.patch_size]
            best = -np.inf
            best_ref = None
            for hv in hr_vols:
                for h_idx in range(hv.n_slices):
                    hr_slice = hv.data[h_idx]
                    for hr_r, hr_c in grid:
                        s = _score(
                            cfg.metric,
                            patch,
                            hr_slice[hr_r : hr_r + cfg.patch_size, hr_c : hr_c + cfg.patch_size],
                            cfg,
                        )
                        if s > best:
                            best = s
                            best_ref = PatchRef(hv.patient_id, h_idx, hr_r, hr_c, cfg.patch_size)
            out.append(
                MatchRecord(
                    PatchRef(l_pid, s_idx, r, c, cfg.patch_size),
                    best_ref,
                    to_weight(cfg.metric, best),
                )
            )
        return out

    records = [rec for chunk in _run_tasks(tasks, run, workers) for rec in chunk]
    return _finish(records, cfg, lr_set, hr_set)


def filter_threshold(m: Manifest, tau: float) -> Manifest:
    """Keep records with weight strictly greater than tau; order preserved."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    return Manifest(
        records=[r for r in m.records if r.weight > tau],
        config=dataclasses.replace(m.config, threshold=tau),
        lr_fingerprint=m.lr_fingerprint,
        hr_fingerprint=m.hr_fingerprint,
        created=m.created,
    )


def weight_stats(m: Manifest, bins: int = 20) -> MatchStats:
    """Uniform weight histogram over [0, 1] plus the mean and range queries."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not m.records:
        raise ValueError("no records")
    w = np.array([r.weight for r in m.records], dtype=np.float64)
    w.setflags(write=False)
    counts, edges = np.histogram(w, bins=bins, range=(0.0, 1.0))
    return MatchStats(bin_edges=edges, counts=counts, mean=float(w.mean()), weights=w)


def _ref_to_json(ref: PatchRef) -> str:
    return '{"patient": %s, "slice": %d, "row": %d, "col": %d, "size": %d}' % (
        json.dumps(ref.patient_id),
        ref.slice_index,
        ref.row,
        ref.col,
        ref.size,
    )


def _ref_from_obj(obj: dict) -> PatchRef:
    return PatchRef(
        patient_id=obj["patient"],
        slice_index=int(obj["slice"]),
        row=int(obj["row"]),
        col=int(obj["col"]),
        size=int(obj["size"]),
    )


def manifest_to_bytes(m: Manifest) -> bytes:
    """Line-delimited serialization: one header line, then one record per line.

    Weights carry 17 significant digits so every float64 round-trips bit-exactly.
    The creation timestamp is deliberately not serialized: identical inputs must
    produce byte-identical manifests.
    """
    header = {
        "format": MANIFEST_FORMAT,
        "config": m.config.to_dict(),
        "lr_fingerprint": m.lr_fingerprint,
        "hr_fingerprint": m.hr_fingerprint,
    }
    lines = [json.dumps(header)]
    for r in m.records:
        lines.append(
            '{"lr": %s, "hr": %s, "weight": %s}'
            % (_ref_to_json(r.lr), _ref_to_json(r.hr), format(r.weight, ".17g"))
        )
    return ("\n".join(lines) + "\n").encode("ascii")


def write_manifest(m: Manifest, path) -> None:
    Path(path).write_bytes(manifest_to_bytes(m))


def read_manifest(path, *, lr_fingerprint: str = None, hr_fingerprint: str = None) -> Manifest:
    """Parse a manifest file; malformed lines raise with their line number.

    When expected fingerprints are supplied, a mismatch emits
    FingerprintMismatchWarning rather than failing.
    """
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: parse error at line 1: empty manifest file")
    try:
        header = json.loads(lines[0])
        config = MatchConfig.from_dict(header["config"])
        lr_fp = header["lr_fingerprint"]
        hr_fp = header["hr_fingerprint"]
        if header.get("format") != MANIFEST_FORMAT:
            raise KeyError("format")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ValueError(f"{path}: parse error at line 1: bad header ({e})") from e
    records = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            rec = MatchRecord(
                lr=_ref_from_obj(obj["lr"]),
                hr=_ref_from_obj(obj["hr"]),
                weight=float(obj["weight"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ValueError(f"{path}: parse error at line {n}: {e}") from e
        records.append(rec)
    if lr_fingerprint is not None and lr_fingerprint != lr_fp:
        warnings.warn(f"{path}: LR dataset fingerprint mismatch", FingerprintMismatchWarning)
    if hr_fingerprint is not None and hr_fingerprint != hr_fp:
        warnings.warn(f"{path}: HR dataset fingerprint mismatch", FingerprintMismatchWarning)
    return Manifest(records=records, config=config, lr_fingerprint=lr_fp, hr_fingerprint=hr_fp)
