"""Preprocessing (resize, rotation correction, re-centering) and the LR degradation model.

Resampling is cubic convolution with the Keys parameter a = -0.5 and the
half-pixel-centred coordinate mapping src = (dst + 0.5) * in/out - 0.5,
clamped at the borders. Blur is a separable truncated Gaussian with reflect
padding. The degradation model is blur -> bicubic down -> bicubic up, clamped
to [0, 1].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imgvol import Volume, normalize_volume, require_image

_KEYS_A = -0.5


class DegenerateImageWarning(UserWarning):
    """Signals a best-effort geometric correction that was skipped."""


@dataclass(frozen=True)
class DegradeParams:
    sigma: float = 3.0
    scale_factor: int = 4

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.scale_factor < 1:
            raise ValueError("scale_factor must be >= 1")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps over [-ceil(3*sigma), ceil(3*sigma)]."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    r = math.ceil(3.0 * sigma)
    i = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-(i * i) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _correlate_axis(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    r = taps.size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    win = sliding_window_view(padded, taps.size, axis=axis)
    return win @ taps  # taps are symmetric, so correlation == convolution


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; output has the input's size."""
    arr = require_image(img).astype(np.float64)
    taps = gaussian_kernel(sigma)
    return _correlate_axis(_correlate_axis(arr, taps, 0), taps, 1)


def _keys(s: np.ndarray) -> np.ndarray:
    s = np.abs(s)
    a = _KEYS_A
    near = ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0
    far = ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a
    return np.where(s <= 1.0, near, np.where(s < 2.0, far, 0.0))


def _resize_axis(arr: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = arr.shape[axis]
    dst = np.arange(out_len, dtype=np.float64)
    src = (dst + 0.5) * (in_len / out_len) - 0.5
    base = np.floor(src)
    t = src - base
    m = base.astype(np.int64)
    w = np.stack([_keys(1.0 + t), _keys(t), _keys(1.0 - t), _keys(2.0 - t)], axis=-1)
    idx = np.clip(np.stack([m - 1, m, m + 1, m + 2], axis=-1), 0, in_len - 1)
    g = np.take(arr, idx, axis=axis)
    if axis == 0:
        return np.einsum("okw,ok->ow", g, w)
    return np.einsum("hok,ok->ho", g, w)


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Cubic-convolution resize; bit-exact identity when output dims equal input dims."""
    arr = require_image(img).astype(np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    return _resize_axis(_resize_axis(arr, out_h, 0), out_w, 1)


def degrade(img: np.ndarray, params: DegradeParams = DegradeParams()) -> np.ndarray:
    """Resolution-degradation model: Gaussian blur, bicubic down by the scale
    factor, bicubic back up to the original size, clamped to [0, 1]."""
    arr = require_image(img)
    h, w = arr.shape
    f = params.scale_factor
    if h % f != 0 or w % f != 0:
        raise ValueError(f"image dims {h}x{w} not divisible by scale factor {f}")
    out = gaussian_blur(arr, params.sigma)
    out = bicubic_resize(out, h // f, w // f)
    out = bicubic_resize(out, h, w)
    return np.clip(out, 0.0, 1.0)


def _bicubic_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample arbitrary (row, col) points with the Keys kernel; points more than
    half a pixel outside the grid read as 0."""
    h, w = img.shape
    mr = np.floor(rows)
    tr = rows - mr
    mc = np.floor(cols)
    tc = cols - mc
    wr = np.stack([_keys(1.0 + tr), _keys(tr), _keys(1.0 - tr), _keys(2.0 - tr)], axis=-1)
    wc = np.stack([_keys(1.0 + tc), _keys(tc), _keys(1.0 - tc), _keys(2.0 - tc)], axis=-1)
    ri = np.clip(mr.astype(np.int64)[:, None] + np.arange(-1, 3), 0, h - 1)
    ci = np.clip(mc.astype(np.int64)[:, None] + np.arange(-1, 3), 0, w - 1)
    g = img[ri[:, :, None], ci[:, None, :]]
    vals = np.einsum("nab,na,nb->n", g, wr, wc)
    outside = (rows < -0.5) | (rows > h - 0.5) | (cols < -0.5) | (cols > w - 0.5)
    vals[outside] = 0.0
    return vals


def _centroid(arr: np.ndarray):
    total = float(arr.sum())
    i = np.arange(arr.shape[0], dtype=np.float64)
    j = np.arange(arr.shape[1], dtype=np.float64)
    ci = float(arr.sum(axis=1) @ i) / total
    cj = float(arr.sum(axis=0) @ j) / total
    return ci, cj


def recenter(img: np.ndarray) -> np.ndarray:
    """Integer-pixel shift placing the intensity centroid at the grid centre;
    vacated pixels are zero-filled. Constant images pass through with a warning."""
    arr = require_image(img).astype(np.float64)
    if float(arr.max()) == float(arr.min()):
        warnings.warn("constant image: centroid undefined, recenter skipped", DegenerateImageWarning)
        return arr.copy()
    h, w = arr.shape
    ci, cj = _centroid(arr)
    dr = int(np.round((h - 1) / 2.0 - ci))
    dc = int(np.round((w - 1) / 2.0 - cj))
    out = np.zeros_like(arr)
    r0s, r0d = max(0, -dr), max(0, dr)
    c0s, c0d = max(0, -dc), max(0, dc)
    nr, nc = h - abs(dr), w - abs(dc)
    if nr > 0 and nc > 0:
        out[r0d : r0d + nr, c0d : c0d + nc] = arr[r0s : r0s + nr, c0s : c0s + nc]
    return out


def _principal_angle(arr: np.ndarray):
    """Angle of the principal intensity axis measured from the vertical (row) axis,
    plus the mass-normalized second central moments."""
    total = float(arr.sum())
    ci, cj = _centroid(arr)
    di = np.arange(arr.shape[0], dtype=np.float64) - ci
    dj = np.arange(arr.shape[1], dtype=np.float64) - cj
    mu_rr = float((arr * (di * di)[:, None]).sum()) / total
    mu_cc = float((arr * (dj * dj)[None, :]).sum()) / total
    mu_rc = float((arr * di[:, None] * dj[None, :]).sum()) / total
    theta = 0.5 * math.atan2(2.0 * mu_rc, mu_rr - mu_cc)
    return theta, mu_rr, mu_cc, mu_rc


def rotation_correct(img: np.ndarray) -> np.ndarray:
    """Rotate (bicubic, about the centroid) so the principal intensity axis is
    vertical. Nearly isotropic or constant images pass through with a warning."""
    arr = require_image(img).astype(np.float64)
    if float(arr.max()) == float(arr.min()):
        warnings.warn("constant image: rotation correction skipped", DegenerateImageWarning)
        return arr.copy()
    theta, mu_rr, mu_cc, mu_rc = _principal_angle(arr)
    if abs(mu_rr - mu_cc) < 1e-9 and abs(mu_rc) < 1e-9:
        warnings.warn("nearly isotropic image: rotation correction skipped", DegenerateImageWarning)
        return arr.copy()
    if theta == 0.0:
        return arr.copy()
    h, w = arr.shape
    ci, cj = _centroid(arr)
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    di = ii.ravel() - ci
    dj = jj.ravel() - cj
    c, s = math.cos(theta), math.sin(theta)
    src_r = ci + c * di - s * dj
    src_c = cj + s * di + c * dj
    return _bicubic_sample(arr, src_r, src_c).reshape(h, w)


def preprocess(v: Volume, target: int) -> Volume:
    """Per slice: resize to target x target, rotation-correct, recenter; then
    min-max normalize the whole volume to [0, 1]."""
    if target < 1:
        raise ValueError("target size must be >= 1")
    slices = []
    for k in range(v.n_slices):
        s = bicubic_resize(v.data[k], target, target)
        s = rotation_correct(s)
        s = recenter(s)
        slices.append(s)
    return normalize_volume(Volume(v.patient_id, np.stack(slices)))
