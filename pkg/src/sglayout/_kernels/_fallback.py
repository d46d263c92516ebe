"""Pure numpy implementations of the hot kernels.

Each function must produce bit-identical results to its compiled twin in
``_ckernels.pyx``; both accumulate in ascending row order.
"""

import numpy as np


def segment_sum(values, index, n):
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros((n,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, np.asarray(index, dtype=np.int64), values)
    return out


def relative_geometry(bj, bk, eps=0.0):
    bj = np.ascontiguousarray(bj, dtype=np.float64)
    bk = np.ascontiguousarray(bk, dtype=np.float64)
    dj = np.sqrt(bj[:, 2] * bj[:, 2] + bj[:, 3] * bj[:, 3]) + eps
    dk = np.sqrt(bk[:, 2] * bk[:, 2] + bk[:, 3] * bk[:, 3]) + eps
    den = dj + dk
    scale = dj / dk
    dist = np.empty((bj.shape[0], 2), dtype=np.float64)
    dist[:, 0] = np.abs(bj[:, 0] - bk[:, 0]) / den
    dist[:, 1] = (bj[:, 1] - bk[:, 1]) / den
    return scale, dist


def box_iou(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ax0 = a[:, 0] - a[:, 2] * 0.5
    ax1 = a[:, 0] + a[:, 2] * 0.5
    ay0 = a[:, 1] - a[:, 3] * 0.5
    ay1 = a[:, 1] + a[:, 3] * 0.5
    bx0 = b[:, 0] - b[:, 2] * 0.5
    bx1 = b[:, 0] + b[:, 2] * 0.5
    by0 = b[:, 1] - b[:, 3] * 0.5
    by1 = b[:, 1] + b[:, 3] * 0.5
    iw = np.maximum(np.minimum(ax1, bx1) - np.maximum(ax0, bx0), 0.0)
    ih = np.maximum(np.minimum(ay1, by1) - np.maximum(ay0, by0), 0.0)
    inter = iw * ih
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
    safe = np.where(union > 0.0, union, 1.0)
    return np.where(union > 0.0, inter / safe, 0.0)
