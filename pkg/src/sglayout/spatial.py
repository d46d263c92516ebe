"""Relative scale / relative distance of related box pairs and the two layout losses.

Scale of a box is its diagonal length. For a subject box j and object box k:

    scale_ratio = diag_j / diag_k
    distance    = [|x_j - x_k|, y_j - y_k] / (diag_j + diag_k)

The x offset is unsigned so mirrored layouts agree; dividing by the summed
diagonals cancels uniform zoom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from . import _kernels
from . import ndgrad as nd
from .graph import BoundingBox, SceneGraph

DEGENERATE_EPS = 1e-6

BoxLike = Union[BoundingBox, Sequence[float]]


class DegenerateBoxError(ValueError):
    pass


@dataclass(frozen=True)
class RelativeGeometry:
    scale_ratio: float
    distance: Tuple[float, float]

    def __post_init__(self):
        if not self.scale_ratio > 0.0:
            raise ValueError(f"scale_ratio must be positive, got {self.scale_ratio}")
        if not self.distance[0] >= 0.0:
            raise ValueError(f"horizontal distance must be non-negative, got {self.distance[0]}")


@dataclass(frozen=True)
class LossWeights:
    lambda_box: float = 1.0
    lambda_scm: float = 1.0
    lambda_obj: float = 0.0
    lambda_sg: float = 0.0
    lambda_img: float = 0.0

    def __post_init__(self):
        for name in ("lambda_box", "lambda_scm", "lambda_obj", "lambda_sg", "lambda_img"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("lambda_obj", "lambda_sg", "lambda_img"):
            if getattr(self, name) != 0:
                raise ValueError(f"{name} weights a loss term that is not implemented; it must be 0")


def _xywh(box: BoxLike) -> Tuple[float, float, float, float]:
    if isinstance(box, BoundingBox):
        return box.as_tuple()
    x, y, w, h = box
    return float(x), float(y), float(w), float(h)


def diag(box: BoxLike) -> float:
    _, _, w, h = _xywh(box)
    return math.sqrt(w * w + h * h)


def relative_scale(b_j: BoxLike, b_k: BoxLike) -> float:
    dk = diag(b_k)
    if dk < DEGENERATE_EPS:
        raise DegenerateBoxError(f"object box diagonal {dk!r} below {DEGENERATE_EPS}")
    return diag(b_j) / dk


def relative_distance(b_j: BoxLike, b_k: BoxLike) -> np.ndarray:
    xj, yj, _, _ = _xywh(b_j)
    xk, yk, _, _ = _xywh(b_k)
    den = diag(b_j) + diag(b_k)
    if den < DEGENERATE_EPS:
        raise DegenerateBoxError(f"summed diagonals {den!r} below {DEGENERATE_EPS}")
    return np.array([abs(xj - xk) / den, (yj - yk) / den])


def relative_geometry(b_j: BoxLike, b_k: BoxLike) -> RelativeGeometry:
    dx, dy = relative_distance(b_j, b_k)
    return RelativeGeometry(relative_scale(b_j, b_k), (float(dx), float(dy)))


def pair_geometry(boxes: np.ndarray, subj: np.ndarray, obj: np.ndarray, eps: float = 0.0):
    """Vectorized (scale_ratio, distance) for rows ``subj`` vs ``obj`` of an (n, 4) box array."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return _kernels.relative_geometry(boxes[subj], boxes[obj], eps)


def pair_geometry_tensor(boxes: nd.Tensor, subj, obj, eps: float = DEGENERATE_EPS):
    """Differentiable scale (m, 1) and distance (m, 2) with ``eps`` added to every diagonal."""
    bj = nd.gather_rows(boxes, subj)
    bk = nd.gather_rows(boxes, obj)
    dj = nd.l2norm(bj[:, 2:4], axis=1, keepdims=True) + eps
    dk = nd.l2norm(bk[:, 2:4], axis=1, keepdims=True) + eps
    den = dj + dk
    scale = dj / dk
    dx = nd.abs(bj[:, 0:1] - bk[:, 0:1]) / den
    dy = (bj[:, 1:2] - bk[:, 1:2]) / den
    return scale, nd.concat([dx, dy], axis=1)


def box_loss(gt, pred) -> nd.Tensor:
    """Sum over objects of the L2 distance between ground-truth and predicted 4-vectors."""
    gt = nd.as_tensor(np.asarray(gt.data if isinstance(gt, nd.Tensor) else gt, dtype=np.float64).reshape(-1, 4))
    pred = _as_box_tensor(pred)
    if gt.shape != pred.shape:
        raise nd.ShapeError(f"box_loss: {gt.shape[0]} ground-truth boxes vs {pred.shape[0]} predicted")
    return nd.sum(nd.l2norm(gt - pred, axis=1))


def _as_box_tensor(boxes) -> nd.Tensor:
    if isinstance(boxes, nd.Tensor):
        return boxes if boxes.data.ndim == 2 else nd.reshape(boxes, (-1, 4))
    return nd.Tensor(np.asarray([_xywh(b) for b in boxes], dtype=np.float64).reshape(-1, 4))


def _triplet_index(graph: SceneGraph):
    t = np.asarray(graph.triplets, dtype=np.int64).reshape(-1, 3)
    return t[:, 0], t[:, 2]


def scm_loss(graph: SceneGraph, gt, pred) -> nd.Tensor:
    """Relative scale + relative distance mismatch summed over the graph's triplets only."""
    subj, obj = _triplet_index(graph)
    gt_arr = _as_box_tensor(gt).data
    scale, dist = pair_geometry(gt_arr, subj, obj, DEGENERATE_EPS)
    return scm_loss_pairs(subj, obj, scale, dist, _as_box_tensor(pred))


def scm_loss_pairs(subj, obj, target_scale, target_dist, pred: nd.Tensor) -> nd.Tensor:
    """Constraint loss against explicit per-pair targets (ground truth or corpus statistics)."""
    if len(subj) == 0:
        return nd.Tensor(0.0)
    s_hat, d_hat = pair_geometry_tensor(pred, subj, obj)
    target_scale = np.asarray(target_scale, dtype=np.float64).reshape(-1, 1)
    target_dist = np.asarray(target_dist, dtype=np.float64).reshape(-1, 2)
    scale_term = nd.sum(nd.abs(s_hat - target_scale))
    dist_term = nd.sum(nd.l2norm(d_hat - target_dist, axis=1))
    return scale_term + dist_term


def total_loss(weights: LossWeights, l_box, l_scm):
    """Weighted layout objective; works on floats and on tensors."""
    if not isinstance(weights, LossWeights):
        raise TypeError("weights must be LossWeights")
    return l_box * weights.lambda_box + l_scm * weights.lambda_scm


def flip_horizontal(box: BoxLike) -> Tuple[float, float, float, float]:
    x, y, w, h = _xywh(box)
    return (1.0 - x, y, w, h)


def zoom(box: BoxLike, alpha: float) -> Tuple[float, float, float, float]:
    x, y, w, h = _xywh(box)
    return (alpha * x, alpha * y, alpha * w, alpha * h)

