"""Training loop for the layout generator, layout metrics, and the relation probe."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _kernels
from . import ndgrad as nd
from .encoder import GraphBatch, LayoutModel, checkpoint_json, encode_batch, predict_boxes
from .graph import LayoutSample, boxes_array, dumps_samples
from .spatial import DEGENERATE_EPS, LossWeights, box_loss, pair_geometry, scm_loss_pairs
from .stats import TripletStatTable

SCM_TARGET_MODES = ("per-sample", "corpus-stat")
EVAL_CHUNK = 256


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    scm_target_mode: str = "per-sample"
    max_steps: Optional[int] = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.scm_target_mode not in SCM_TARGET_MODES:
            raise ValueError(f"scm_target_mode must be one of {SCM_TARGET_MODES}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


@dataclass(frozen=True)
class LossRecord:
    step: int
    epoch: int
    l_box: float
    l_scm: float
    total: float


@dataclass
class TrainResult:
    model: LayoutModel
    history: List[LossRecord]


class _Prepared:
    """Per-sample arrays reused every epoch."""

    def __init__(self, corpus: Sequence[LayoutSample], cfg: TrainConfig, stats: Optional[TripletStatTable]):
        self.graphs = [s.graph for s in corpus]
        self.boxes = [boxes_array(s.boxes) for s in corpus]
        self.target_scale = []
        self.target_dist = []
        for sample, boxes in zip(corpus, self.boxes):
            t = np.asarray(sample.graph.triplets, dtype=np.int64).reshape(-1, 3)
            scale, dist = pair_geometry(boxes, t[:, 0], t[:, 2], DEGENERATE_EPS)
            if cfg.scm_target_mode == "corpus-stat":
                cats = sample.graph.object_categories
                for e, (s, p, o) in enumerate(sample.graph.triplets):
                    entry = stats.get((cats[s], p, cats[o]))
                    if entry is not None:
                        scale[e] = entry.mean_s
                        dist[e] = (entry.mean_dx, entry.mean_dy)
            self.target_scale.append(scale)
            self.target_dist.append(dist)

    def batch(self, idx):
        gb = GraphBatch.from_graphs([self.graphs[i] for i in idx])
        gt = np.concatenate([self.boxes[i] for i in idx])
        ts = np.concatenate([self.target_scale[i] for i in idx])
        td = np.concatenate([self.target_dist[i] for i in idx])
        return gb, gt, ts, td


def train(
    model: LayoutModel,
    corpus: Sequence[LayoutSample],
    cfg: TrainConfig,
    stats: Optional[TripletStatTable] = None,
) -> TrainResult:
    """Adam on lambda_box * L_box + lambda_scm * L_scm, both averaged over the batch.

    The model is updated in place. History rows carry the unweighted batch
    losses, so ``l_scm`` is logged even when its weight is 0.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    if cfg.scm_target_mode == "corpus-stat" and stats is None:
        raise ValueError("corpus-stat target mode needs a TripletStatTable")
    prep = _Prepared(corpus, cfg, stats)
    params = model.parameters()
    state = nd.AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    w = cfg.weights
    history: List[LossRecord] = []
    step = 0
    n = len(corpus)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                return TrainResult(model, history)
            idx = order[start : start + cfg.batch_size]
            gb, gt, ts, td = prep.batch(idx)
            pred = predict_boxes(model, encode_batch(model, gb))
            detached = nd.Tensor(pred.data)
            bsz = float(len(idx))
            l_box = box_loss(gt, pred if w.lambda_box else detached) / bsz
            l_scm = scm_loss_pairs(gb.subj, gb.obj, ts, td, pred if w.lambda_scm else detached) / bsz
            total = l_box * w.lambda_box + l_scm * w.lambda_scm
            value = total.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at step {step} (epoch {epoch}, batch {b})")
            if total.requires_grad:
                total.backward()
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            nd.adam_step(params, state)
            history.append(LossRecord(step, epoch, l_box.item(), l_scm.item(), value))
            step += 1
    return TrainResult(model, history)


def history_csv(history: Sequence[LossRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "epoch", "l_box", "l_scm", "total"])
    for r in history:
        writer.writerow([r.step, r.epoch, repr(r.l_box), repr(r.l_scm), repr(r.total)])
    return buf.getvalue()


def predict_corpus(
    model: LayoutModel,
    samples: Sequence[LayoutSample],
    noise_rng: Optional[np.random.Generator] = None,
    noise_scale: float = 0.0,
) -> List[np.ndarray]:
    """Box predictions batched in fixed chunks, so repeated calls are bit-identical.

    Noise is standard normal times ``noise_scale``, added to the object
    embeddings; with no generator the prediction is noise-free.
    """
    out = []
    with nd.no_grad():
        for start in range(0, len(samples), EVAL_CHUNK):
            chunk = samples[start : start + EVAL_CHUNK]
            gb = GraphBatch.from_graphs([s.graph for s in chunk])
            noise = None
            if noise_rng is not None:
                noise = noise_scale * noise_rng.standard_normal((gb.num_objects, model.dims.d1))
            boxes = predict_boxes(model, encode_batch(model, gb, noise)).data
            for i in range(len(chunk)):
                out.append(boxes[gb.object_offsets[i] : gb.object_offsets[i + 1]].copy())
    return out


@dataclass
class EvalReport:
    mean_iou: float
    mean_abs_scale_error: float
    mean_distance_error: float
    per_predicate: Dict[str, dict]
    probe_accuracy: Optional[float]
    num_samples: int = 0
    num_objects: int = 0
    num_triplets: int = 0
    stat_scale_error: Optional[float] = None
    stat_distance_error: Optional[float] = None
    metadata: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def corpus_fingerprint(samples: Sequence[LayoutSample], vocab) -> str:
    return hashlib.sha256(dumps_samples(samples, vocab).encode("utf-8")).hexdigest()


def model_fingerprint(model: LayoutModel) -> str:
    return hashlib.sha256(checkpoint_json(model).encode("utf-8")).hexdigest()


def _mean(values) -> float:
    return math.fsum(values) / len(values) if len(values) else math.nan


def evaluate(
    model: LayoutModel,
    corpus: Sequence[LayoutSample],
    stats: Optional[TripletStatTable] = None,
    probe_seed: int = 0,
) -> EvalReport:
    """IoU against ground truth plus relative-geometry errors on every triplet.

    ``corpus`` must not overlap the training set; that is the caller's duty.
    """
    vocab = model.vocab
    preds = predict_corpus(model, corpus)
    ious, scale_err, dist_err, pred_ids = [], [], [], []
    stat_s, stat_d = [], []
    for sample, pb in zip(corpus, preds):
        gt = boxes_array(sample.boxes)
        ious.extend(_kernels.box_iou(gt, pb).tolist())
        if not sample.graph.triplets:
            continue
        t = np.asarray(sample.graph.triplets, dtype=np.int64)
        s_gt, d_gt = pair_geometry(gt, t[:, 0], t[:, 2])
        s_hat, d_hat = pair_geometry(pb, t[:, 0], t[:, 2])
        scale_err.extend(np.abs(s_gt - s_hat).tolist())
        dist_err.extend(np.sqrt(((d_gt - d_hat) ** 2).sum(axis=1)).tolist())
        pred_ids.extend(t[:, 1].tolist())
        if stats is not None:
            cats = sample.graph.object_categories
            for e, (s, p, o) in enumerate(sample.graph.triplets):
                entry = stats.get((cats[s], p, cats[o]))
                if entry is not None:
                    stat_s.append(abs(entry.mean_s - s_hat[e]))
                    stat_d.append(math.hypot(entry.mean_dx - d_hat[e, 0], entry.mean_dy - d_hat[e, 1]))

    per_predicate = {}
    pred_arr = np.asarray(pred_ids, dtype=np.int64)
    for p in sorted(set(pred_ids)):
        sel = np.flatnonzero(pred_arr == p)
        per_predicate[vocab.predicates[p]] = {
            "count": int(sel.size),
            "mean_abs_scale_error": _mean([scale_err[i] for i in sel]),
            "mean_distance_error": _mean([dist_err[i] for i in sel]),
        }
    probe = None
    if len(per_predicate) >= 2:
        probe = relation_probe(corpus, "predicted", probe_seed, model=model, predictions=preds)
    return EvalReport(
        mean_iou=_mean(ious),
        mean_abs_scale_error=_mean(scale_err),
        mean_distance_error=_mean(dist_err),
        per_predicate=per_predicate,
        probe_accuracy=probe,
        num_samples=len(corpus),
        num_objects=len(ious),
        num_triplets=len(scale_err),
        stat_scale_error=_mean(stat_s) if stat_s else None,
        stat_distance_error=_mean(stat_d) if stat_d else None,
        metadata={
            "corpus_fingerprint": corpus_fingerprint(corpus, vocab),
            "model_fingerprint": model_fingerprint(model),
            "note": "evaluation corpus must be disjoint from the training corpus (not checked)",
        },
    )


def probe_features(corpus: Sequence[LayoutSample], boxes: Sequence[np.ndarray]):
    """Per-triplet features [log s, dx, dy, log diag_subj, log diag_obj] and predicate labels."""
    feats, labels = [], []
    for sample, b in zip(corpus, boxes):
        if not sample.graph.triplets:
            continue
        t = np.asarray(sample.graph.triplets, dtype=np.int64)
        scale, dist = pair_geometry(b, t[:, 0], t[:, 2])
        diags = np.sqrt(b[:, 2] ** 2 + b[:, 3] ** 2)
        feats.append(np.column_stack([np.log(scale), dist, np.log(diags[t[:, 0]]), np.log(diags[t[:, 2]])]))
        labels.append(t[:, 1])
    if not feats:
        return np.zeros((0, 5)), np.zeros(0, dtype=np.int64)
    return np.concatenate(feats), np.concatenate(labels)


def fit_softmax(x: np.ndarray, y: np.ndarray, num_classes: int, iters: int = 500, lr: float = 0.5):
    """Full-batch gradient descent on multinomial cross-entropy; returns (weights, bias)."""
    n, d = x.shape
    W = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    onehot = np.eye(num_classes)[y]
    for _ in range(iters):
        logits = x @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        prob = np.exp(logits)
        prob /= prob.sum(axis=1, keepdims=True)
        g = (prob - onehot) / n
        W -= lr * (x.T @ g)
        b -= lr * g.sum(axis=0)
    return W, b


def relation_probe(
    corpus: Sequence[LayoutSample],
    geometry_source: str = "gt",
    seed: int = 0,
    model: Optional[LayoutModel] = None,
    predictions: Optional[List[np.ndarray]] = None,
) -> float:
    """Held-out accuracy of a linear softmax classifier predicting a triplet's predicate from geometry.

    Geometry comes from ground-truth boxes or from ``model``'s zero-noise
    predictions. Triplets are split 80/20 by a seeded shuffle.
    """
    if geometry_source == "gt":
        boxes = [boxes_array(s.boxes) for s in corpus]
    elif geometry_source == "predicted":
        if predictions is None:
            if model is None:
                raise ValueError("geometry_source='predicted' needs a model")
            predictions = predict_corpus(model, corpus)
        boxes = predictions
    else:
        raise ValueError(f"geometry_source must be 'gt' or 'predicted', got {geometry_source!r}")
    x, labels = probe_features(corpus, boxes)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError(f"relation probe needs at least 2 predicate classes, found {classes.size}")
    y = np.searchsorted(classes, labels)
    perm = np.random.default_rng(seed).permutation(len(y))
    cut = int(round(0.8 * len(y)))
    train_idx, test_idx = perm[:cut], perm[cut:]
    if test_idx.size == 0:
        raise ValueError("too few triplets for a held-out split")
    mu = x[train_idx].mean(axis=0)
    sd = x[train_idx].std(axis=0)
    sd[sd == 0] = 1.0
    xs = (x - mu) / sd
    W, b = fit_softmax(xs[train_idx], y[train_idx], classes.size)
    guess = np.argmax(xs[test_idx] @ W + b, axis=1)
    return float(np.mean(guess == y[test_idx]))
