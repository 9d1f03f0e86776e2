"""Reference computation of the two-generator GAN loss family and its gradients.

Operates on externally supplied network evaluations only; there are no
networks here. Expectations are batch means, per-pixel L1 terms are
normalized by pixel count so magnitudes are resolution-independent, and
discriminator outputs are one scalar per item.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .imgvol import Volume, load_volume, save_volume

CLAMP_EPS = 1e-7

IMAGE_ROLES = ("x", "y", "gx", "fy", "fgx", "gfy", "fx", "gy")
SCALAR_ROLES = ("dy_y", "dy_gx", "dx_x", "dx_fy")


class AdvKind(Enum):
    LOG = "log"
    LEAST_SQUARES = "least-squares"


class DistKind(Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 256.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True, eq=False)
class LossBatch:
    """One batch of externally computed evaluations.

    Image fields are (B, H, W): inputs x (LR) and y (HR), generator outputs
    gx = G(x), fy = F(y), cycle outputs fgx = F(G(x)), gfy = G(F(y)), identity
    outputs fx = F(x), gy = G(y). Scalar fields are (B,): discriminator outputs
    and the per-pair similarity weights w in [0, 1].
    """

    x: np.ndarray
    y: np.ndarray
    gx: np.ndarray
    fy: np.ndarray
    fgx: np.ndarray
    gfy: np.ndarray
    fx: np.ndarray
    gy: np.ndarray
    dy_y: np.ndarray
    dy_gx: np.ndarray
    dx_x: np.ndarray
    dx_fy: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in IMAGE_ROLES:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 3:
                raise ValueError(f"{name} must be (batch, h, w), got {arr.shape}")
            object.__setattr__(self, name, arr)
        shape = self.x.shape
        if shape[0] < 1:
            raise ValueError("empty batch")
        for name in IMAGE_ROLES:
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {shape}")
        for name in SCALAR_ROLES + ("w",):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if arr.shape != (shape[0],):
                raise ValueError(f"{name} must have one value per batch item")
            object.__setattr__(self, name, arr)
        if (self.w < 0).any() or (self.w > 1).any():
            raise ValueError("weights must lie in [0, 1]")

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]

    @property
    def pixels(self) -> int:
        return self.x.shape[1] * self.x.shape[2]


def _mean_abs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-item mean absolute difference, shape (B,)."""
    return np.abs(a - b).mean(axis=(1, 2))


def adversarial_loss(batch: LossBatch, kind: AdvKind = AdvKind.LEAST_SQUARES) -> float:
    """Both generators' adversarial terms combined.

    Log form: E[ln D_Y(y)] + E[ln(1 - D_Y(G(x)))] + E[ln D_X(x)] + E[ln(1 - D_X(F(y)))]
    with outputs clamped into [1e-7, 1 - 1e-7]. Least-squares form targets 1 on
    real and 0 on generated outputs.
    """
    if kind is AdvKind.LOG:
        c = lambda v: np.clip(v, CLAMP_EPS, 1.0 - CLAMP_EPS)
        return float(
            np.log(c(batch.dy_y)).mean()
            + np.log(1.0 - c(batch.dy_gx)).mean()
            + np.log(c(batch.dx_x)).mean()
            + np.log(1.0 - c(batch.dx_fy)).mean()
        )
    return float(
        ((batch.dy_y - 1.0) ** 2).mean()
        + (batch.dy_gx**2).mean()
        + ((batch.dx_x - 1.0) ** 2).mean()
        + (batch.dx_fy**2).mean()
    )


def cycle_loss(batch: LossBatch) -> float:
    """Mean per-pixel L1 of the forward and backward reconstruction residuals."""
    return float((_mean_abs(batch.fgx, batch.x) + _mean_abs(batch.gfy, batch.y)).mean())


def identity_loss(batch: LossBatch) -> float:
    """Mean per-pixel L1 penalty for generators acting on their own target domain."""
    return float((_mean_abs(batch.fx, batch.x) + _mean_abs(batch.gy, batch.y)).mean())


def matched_pair_loss(batch: LossBatch) -> float:
    """Similarity-weighted paired L1: mean_i w_i * (|G(x)-y|_mean + |F(y)-x|_mean).

    With all weights 1 this reduces exactly to the supervised paired L1 loss.
    """
    per_item = _mean_abs(batch.gx, batch.y) + _mean_abs(batch.fy, batch.x)
    return float((batch.w * per_item).mean())


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    adv: float
    cyc: float
    idt: float
    pair: float


def total_loss(
    batch: LossBatch,
    weights: LossWeights = LossWeights(),
    kind: AdvKind = AdvKind.LEAST_SQUARES,
) -> LossBreakdown:
    """Overall objective adv + l1*cyc + l2*idt + l3*pair with its components."""
    adv = adversarial_loss(batch, kind)
    cyc = cycle_loss(batch)
    idt = identity_loss(batch)
    pair = matched_pair_loss(batch)
    total = adv + weights.lambda1 * cyc + weights.lambda2 * idt + weights.lambda3 * pair
    return LossBreakdown(total=total, adv=adv, cyc=cyc, idt=idt, pair=pair)


def weighted_supervised_loss(preds, targets, weights, dist: DistKind = DistKind.L1) -> float:
    """Sum_i w_i * Dist(pred_i, target_i) with Dist a per-pixel mean (L1 or squared L2).

    Generic weighted wrapper that turns any paired objective into its
    similarity-weighted form; unit weights recover the unweighted sum.
    """
    if not (len(preds) == len(targets) == len(weights)):
        raise ValueError("preds, targets and weights must have equal lengths")
    total = 0.0
    for p, t, w in zip(preds, targets, weights):
        if not 0.0 <= w <= 1.0:
            raise ValueError("weights must lie in [0, 1]")
        p = np.asarray(p, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if p.shape != t.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
        d = p - t
        if dist is DistKind.L1:
            total += w * float(np.abs(d).mean())
        else:
            total += w * float((d * d).mean())
    return total


@dataclass(frozen=True, eq=False)
class LossGradients:
    """Gradients of the overall objective with respect to every supplied evaluation."""

    gx: np.ndarray
    fy: np.ndarray
    fgx: np.ndarray
    gfy: np.ndarray
    fx: np.ndarray
    gy: np.ndarray
    dy_y: np.ndarray
    dy_gx: np.ndarray
    dx_x: np.ndarray
    dx_fy: np.ndarray


def loss_grad(
    batch: LossBatch,
    weights: LossWeights = LossWeights(),
    kind: AdvKind = AdvKind.LEAST_SQUARES,
) -> LossGradients:
    """Analytic gradients of total_loss; L1 subgradients use sign(0) = 0."""
    b = batch.batch_size
    scale = 1.0 / (b * batch.pixels)
    w3 = weights.lambda3 * batch.w[:, None, None] * scale
    g_gx = w3 * np.sign(batch.gx - batch.y)
    g_fy = w3 * np.sign(batch.fy - batch.x)
    g_fgx = weights.lambda1 * scale * np.sign(batch.fgx - batch.x)
    g_gfy = weights.lambda1 * scale * np.sign(batch.gfy - batch.y)
    g_fx = weights.lambda2 * scale * np.sign(batch.fx - batch.x)
    g_gy = weights.lambda2 * scale * np.sign(batch.gy - batch.y)
    if kind is AdvKind.LOG:
        c = lambda v: np.clip(v, CLAMP_EPS, 1.0 - CLAMP_EPS)
        g_dy_y = 1.0 / (b * c(batch.dy_y))
        g_dy_gx = -1.0 / (b * (1.0 - c(batch.dy_gx)))
        g_dx_x = 1.0 / (b * c(batch.dx_x))
        g_dx_fy = -1.0 / (b * (1.0 - c(batch.dx_fy)))
    else:
        g_dy_y = 2.0 * (batch.dy_y - 1.0) / b
        g_dy_gx = 2.0 * batch.dy_gx / b
        g_dx_x = 2.0 * (batch.dx_x - 1.0) / b
        g_dx_fy = 2.0 * batch.dx_fy / b
    return LossGradients(
        gx=g_gx, fy=g_fy, fgx=g_fgx, gfy=g_gfy, fx=g_fx, gy=g_gy,
        dy_y=g_dy_y, dy_gx=g_dy_gx, dx_x=g_dx_x, dx_fy=g_dx_fy,
    )


def write_loss_batch(batch: LossBatch, dir_path) -> None:
    """Persist a batch as one volume per image role plus a values.json file."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for role in IMAGE_ROLES:
        save_volume(Volume(role, getattr(batch, role)), dir_path / f"{role}.vol")
    values = {role: [float(v) for v in getattr(batch, role)] for role in SCALAR_ROLES}
    values["w"] = [float(v) for v in batch.w]
    (dir_path / "values.json").write_text(json.dumps(values, sort_keys=True) + "\n")


def read_loss_batch(dir_path) -> LossBatch:
    """Load a batch directory written by write_loss_batch (or produced externally)."""
    dir_path = Path(dir_path)
    images = {}
    for role in IMAGE_ROLES:
        images[role] = load_volume(dir_path / f"{role}.vol").data
    vpath = dir_path / "values.json"
    if not vpath.exists():
        raise FileNotFoundError(f"missing values file: {vpath}")
    values = json.loads(vpath.read_text())
    scalars = {}
    for role in SCALAR_ROLES + ("w",):
        if role not in values:
            raise ValueError(f"values.json missing field {role!r}")
        scalars[role] = np.asarray(values[role], dtype=np.float64)
    return LossBatch(**images, **scalars)
