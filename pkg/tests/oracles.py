"""Independent brute-force oracles the fast implementations are checked against.

Everything here favors obviousness over speed: explicit nested loops, no
shared code paths with the library internals being verified.
"""

import dataclasses
import math

import numpy as np

from patchpair import AdvKind, LossBatch, LossWeights, total_loss
from patchpair.similarity import ZeroVarianceError, similarity, to_weight


def direct_conv2d_reflect(img, taps):
    """Full 2D convolution with the separable kernel's outer product, reflect padding."""
    taps = np.asarray(taps, dtype=np.float64)
    r = taps.size // 2
    padded = np.pad(np.asarray(img, dtype=np.float64), r, mode="reflect")
    k2 = np.outer(taps, taps)
    h, w = img.shape
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = float((padded[i : i + 2 * r + 1, j : j + 2 * r + 1] * k2).sum())
    return out


def mi_double_loop(counts):
    """Plug-in mutual information via an explicit double loop over histogram cells."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    p = counts / total
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mi = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if p[i, j] > 0:
                mi += p[i, j] * math.log(p[i, j] / (px[i] * py[j]))
    return mi


def grid_positions(length, size, stride):
    """Stride multiples plus the flush-to-border start, recoded from scratch."""
    pos = []
    r = 0
    while r + size <= length:
        pos.append(r)
        r += stride
    if pos[-1] != length - size:
        pos.append(length - size)
    return pos


def _score(metric, a, b, cfg):
    try:
        return float(similarity(metric, a, b, hist=cfg.hist, rbf_params=cfg.rbf))
    except ZeroVarianceError:
        return -1.0


def triple_loop_exhaustive(lr_set, hr_set, cfg):
    """Exhaustive matcher as four explicit nested loops.

    Returns a list of (lr_patient, lr_slice, lr_row, lr_col,
    (hr_patient, hr_slice, hr_row, hr_col), weight) in LR reference order.
    """
    size, stride = cfg.patch_size, cfg.stride
    h, w = lr_set.volumes[0].height, lr_set.volumes[0].width
    rows = grid_positions(h, size, stride)
    cols = grid_positions(w, size, stride)
    hr_vols = sorted(hr_set.volumes, key=lambda v: v.patient_id)
    out = []
    for lv in sorted(lr_set.volumes, key=lambda v: v.patient_id):
        for si in range(lv.n_slices):
            for r in rows:
                for c in cols:
                    query = lv.data[si][r : r + size, c : c + size]
                    best = None
                    best_key = None
                    for hv in hr_vols:
                        for hsi in range(hv.n_slices):
                            for hr_r in rows:
                                for hr_c in cols:
                                    cand = hv.data[hsi][hr_r : hr_r + size, hr_c : hr_c + size]
                                    s = _score(cfg.metric, query, cand, cfg)
                                    if best is None or s > best:
                                        best = s
                                        best_key = (hv.patient_id, hsi, hr_r, hr_c)
                    out.append((lv.patient_id, si, r, c, best_key, to_weight(cfg.metric, best)))
    return out


def manifest_tuples(manifest):
    """Flatten manifest records into the oracle's tuple form for comparison."""
    return [
        (r.lr.patient_id, r.lr.slice_index, r.lr.row, r.lr.col,
         (r.hr.patient_id, r.hr.slice_index, r.hr.row, r.hr.col), r.weight)
        for r in manifest.records
    ]


def principal_axis_angle(img):
    """Orientation of the brightest axis from vertical, via an eigendecomposition
    of the second-moment matrix (independent of the library's atan2 route)."""
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape
    ii, jj = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    m = arr.sum()
    ci = (arr * ii).sum() / m
    cj = (arr * jj).sum() / m
    di, dj = ii - ci, jj - cj
    cov = np.array(
        [
            [(arr * di * di).sum(), (arr * di * dj).sum()],
            [(arr * di * dj).sum(), (arr * dj * dj).sum()],
        ]
    ) / m
    vals, vecs = np.linalg.eigh(cov)
    v = vecs[:, np.argmax(vals)]  # (row, col) direction of the major axis
    ang = math.atan2(v[1], v[0])
    if ang > math.pi / 2:
        ang -= math.pi
    elif ang <= -math.pi / 2:
        ang += math.pi
    return ang


_L1_RESIDUALS = {
    "gx": "y",
    "fy": "x",
    "fgx": "x",
    "gfy": "y",
    "fx": "x",
    "gy": "y",
}


def fd_check_gradients(batch: LossBatch, weights: LossWeights, kind: AdvKind, grads,
                       eps=1e-4, residual_floor=1e-6):
    """Compare analytic gradients with central finite differences of total_loss.

    Entries whose L1 residual sits within residual_floor of the kink are
    excluded. Returns the worst relative error over all checked entries.
    """

    def fd(role, index):
        arr = getattr(batch, role)
        plus, minus = arr.copy(), arr.copy()
        plus[index] += eps
        minus[index] -= eps
        hi = total_loss(dataclasses.replace(batch, **{role: plus}), weights, kind).total
        lo = total_loss(dataclasses.replace(batch, **{role: minus}), weights, kind).total
        return (hi - lo) / (2.0 * eps)

    worst = 0.0
    for role, other in _L1_RESIDUALS.items():
        arr = getattr(batch, role)
        residual = np.abs(arr - getattr(batch, other))
        analytic = getattr(grads, role)
        for index in np.ndindex(arr.shape):
            if residual[index] < residual_floor:
                continue
            est = fd(role, index)
            denom = max(abs(est), abs(analytic[index]), 1e-12)
            worst = max(worst, abs(est - analytic[index]) / denom)
    for role in ("dy_y", "dy_gx", "dx_x", "dx_fy"):
        arr = getattr(batch, role)
        analytic = getattr(grads, role)
        for i in range(arr.size):
            est = fd(role, (i,))
            denom = max(abs(est), abs(analytic[i]), 1e-12)
            worst = max(worst, abs(est - analytic[i]) / denom)
    return worst


def make_fd_safe_batch(rng, batch_size=4, side=8):
    """LossBatch whose L1 residuals and D outputs stay away from kinks/clamps,
    so central differences with eps=1e-4 are valid everywhere."""

    def img():
        return rng.random((batch_size, side, side))

    def offset_from(ref):
        signs = np.where(rng.random(ref.shape) < 0.5, -1.0, 1.0)
        return ref + signs * rng.uniform(0.01, 0.4, ref.shape)

    def d_out():
        return rng.uniform(0.15, 0.85, batch_size)

    x = img()
    y = img()
    return LossBatch(
        x=x, y=y,
        gx=offset_from(y), fy=offset_from(x),
        fgx=offset_from(x), gfy=offset_from(y),
        fx=offset_from(x), gy=offset_from(y),
        dy_y=d_out(), dy_gx=d_out(), dx_x=d_out(), dx_fy=d_out(),
        w=rng.uniform(0.0, 1.0, batch_size),
    )
