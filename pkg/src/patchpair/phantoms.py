"""Synthetic head-like phantoms: smooth elliptical blobs inside a skull-like ring.

Every draw is a pure function of the spec seed, so datasets are bit-reproducible.
Blob parameters are interpolated between two per-patient keyframes across the
slice index, giving smoothly varying slices that make slice-level matching
meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgvol import Dataset, Volume

_BASE_STREAM = 1
_JITTER_STREAM = 2


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    patients: int = 2
    slices_per_patient: int = 4
    size: int = 64
    min_blobs: int = 2
    max_blobs: int = 5
    radius_range: tuple = (0.06, 0.18)  # blob semi-axes, fraction of image size
    intensity_range: tuple = (0.35, 0.9)

    def __post_init__(self):
        if self.patients < 1 or self.slices_per_patient < 1:
            raise ValueError("patients and slices_per_patient must be >= 1")
        if self.size < 32:
            raise ValueError("size must be >= 32")
        if not (1 <= self.min_blobs <= self.max_blobs):
            raise ValueError("need 1 <= min_blobs <= max_blobs")
        lo, hi = self.radius_range
        if not (0 < lo <= hi):
            raise ValueError("bad radius_range")
        lo, hi = self.intensity_range
        if not (0 < lo <= hi <= 1):
            raise ValueError("bad intensity_range")


@dataclass
class _PatientParams:
    ring: np.ndarray  # (3,): radius, sigma, amplitude
    blobs_start: np.ndarray  # (n, 5): ci, cj, ri, rj, amplitude
    blobs_end: np.ndarray  # (n, 5)


def _sample_patient_params(spec: PhantomSpec, idx: int) -> _PatientParams:
    rng = np.random.default_rng([spec.seed, _BASE_STREAM, idx])
    size = float(spec.size)
    n = int(rng.integers(spec.min_blobs, spec.max_blobs + 1))
    ring = np.array(
        [
            size * rng.uniform(0.38, 0.46),
            size * rng.uniform(0.03, 0.05),
            rng.uniform(0.35, 0.6),
        ]
    )
    centre = (size - 1) / 2.0
    keyframes = []
    for _ in range(2):
        kf = np.empty((n, 5))
        kf[:, 0] = centre + size * rng.uniform(-0.22, 0.22, size=n)
        kf[:, 1] = centre + size * rng.uniform(-0.22, 0.22, size=n)
        kf[:, 2] = size * rng.uniform(*spec.radius_range, size=n)
        kf[:, 3] = size * rng.uniform(*spec.radius_range, size=n)
        kf[:, 4] = rng.uniform(*spec.intensity_range, size=n)
        keyframes.append(kf)
    return _PatientParams(ring, keyframes[0], keyframes[1])


def _jitter_params(params: _PatientParams, perturbation: float, spec: PhantomSpec, idx: int) -> _PatientParams:
    rng = np.random.default_rng([spec.seed, _JITTER_STREAM, idx])
    size = float(spec.size)
    n = params.blobs_start.shape[0]
    u_ring = rng.uniform(-1.0, 1.0, size=3)
    u_blob = rng.uniform(-1.0, 1.0, size=(n, 5))
    ring = params.ring * (1.0 + perturbation * np.array([0.1, 0.3, 0.3]) * u_ring)
    ring[1] = max(ring[1], 0.8)
    ring[2] = min(max(ring[2], 0.05), 1.0)

    def jitter_blobs(kf):
        out = kf.copy()
        out[:, 0:2] = out[:, 0:2] + perturbation * 0.15 * size * u_blob[:, 0:2]
        out[:, 2:4] = np.maximum(out[:, 2:4] * (1.0 + perturbation * 0.5 * u_blob[:, 2:4]), 1.5)
        out[:, 4] = np.clip(out[:, 4] * (1.0 + perturbation * 0.4 * u_blob[:, 4]), 0.05, 1.0)
        return out

    return _PatientParams(ring, jitter_blobs(params.blobs_start), jitter_blobs(params.blobs_end))


def _render_slice(spec: PhantomSpec, params: _PatientParams, t: float) -> np.ndarray:
    size = spec.size
    centre = (size - 1) / 2.0
    ii, jj = np.meshgrid(
        np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij"
    )
    d = np.hypot(ii - centre, jj - centre)
    r0, sg, amp = params.ring
    img = amp * np.exp(-0.5 * ((d - r0) / sg) ** 2)
    blobs = params.blobs_start + (params.blobs_end - params.blobs_start) * t
    for ci, cj, ri, rj, a in blobs:
        img += a * np.exp(-0.5 * (((ii - ci) / ri) ** 2 + ((jj - cj) / rj) ** 2))
    return np.clip(img, 0.0, 1.0)


def _render_volume(spec: PhantomSpec, params: _PatientParams, patient_id: str) -> Volume:
    s = spec.slices_per_patient
    ts = [k / (s - 1) if s > 1 else 0.0 for k in range(s)]
    return Volume(patient_id, np.stack([_render_slice(spec, params, t) for t in ts]))


def generate_dataset(spec: PhantomSpec, label: str = "HR") -> Dataset:
    """Render one phantom dataset, deterministic in spec.seed."""
    vols = [
        _render_volume(spec, _sample_patient_params(spec, p), f"P{p:03d}")
        for p in range(spec.patients)
    ]
    return Dataset(label, tuple(vols))


def generate_similar_pair(spec: PhantomSpec, perturbation: float):
    """Return (base, jittered) datasets labeled (HR, LR).

    The second dataset re-renders the first one's anatomy with every blob/ring
    parameter jittered by the given perturbation fraction; perturbation 0 gives
    a pixel-identical copy.
    """
    if not 0.0 <= perturbation <= 1.0:
        raise ValueError("perturbation must be in [0, 1]")
    base_vols = []
    jit_vols = []
    for p in range(spec.patients):
        pid = f"P{p:03d}"
        params = _sample_patient_params(spec, p)
        base_vols.append(_render_volume(spec, params, pid))
        jit_vols.append(_render_volume(spec, _jitter_params(params, perturbation, spec, p), pid))
    return Dataset("HR", tuple(base_vols)), Dataset("LR", tuple(jit_vols))
