"""Finite-difference verification of every autodiff op and of the full layout objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import ndgrad as nd
from .encoder import ModelDims, encode, init_model, predict_boxes
from .graph import SceneGraph, Vocab
from .spatial import LossWeights, box_loss, scm_loss, total_loss

TOLERANCE = 1e-4


def _away_from_zero(rng, shape, lo=0.2, hi=1.5):
    return rng.uniform(lo, hi, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _weighted(out: nd.Tensor, rng) -> Callable[[nd.Tensor], nd.Tensor]:
    # random projection so every output entry gets a distinct cotangent
    w = rng.normal(size=out.shape)
    return lambda t: nd.sum(t * w)


def _op_cases(rng) -> Dict[str, List[Tuple[Callable, List[np.ndarray]]]]:
    """op name -> (function of operand tensors, operand arrays)."""
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    return {
        "add": [(lambda x, y: x + y, [a, b]), (lambda x, y: x + y, [a, rng.normal(size=(4,))])],
        "subtract": [(lambda x, y: x - y, [a, b])],
        "multiply": [(lambda x, y: x * y, [a, b])],
        "divide": [(lambda x, y: x / y, [a, _away_from_zero(rng, (3, 4))])],
        "matmul": [(lambda x, y: x @ y, [a, rng.normal(size=(4, 2))])],
        "concat": [(lambda x, y: nd.concat([x, y], axis=-1), [a, rng.normal(size=(3, 2))]),
                   (lambda x, y: nd.concat([x, y], axis=0), [a, b])],
        "mean": [(lambda x: nd.mean(x, axis=0), [a]), (lambda x: nd.mean(x, axis=1), [a]), (lambda x: nd.mean(x), [a])],
        "sum": [(lambda x: nd.sum(x, axis=1), [a]), (lambda x: nd.sum(x), [a])],
        "relu": [(lambda x: nd.relu(x), [_away_from_zero(rng, (3, 4), 0.05)])],
        "sigmoid": [(lambda x: nd.sigmoid(x), [rng.normal(scale=3.0, size=(3, 4))])],
        "sqrt": [(lambda x: nd.sqrt(x), [rng.uniform(0.2, 2.0, size=(3, 4))])],
        "l2norm": [(lambda x: nd.l2norm(x, axis=1), [a]), (lambda x: nd.l2norm(x, axis=0, keepdims=True), [a])],
        "abs": [(lambda x: nd.abs(x), [_away_from_zero(rng, (3, 4), 0.05)])],
        "scalar": [(lambda x: 2.5 * x + 1.0 - x / 4.0, [a]), (lambda x: 1.0 / x, [_away_from_zero(rng, (3, 4))])],
        "getitem": [(lambda x: x[:, 1:3], [a])],
        "gather_rows": [(lambda x: nd.gather_rows(x, [2, 0, 2, 1]), [a])],
        "segment_sum": [(lambda x: nd.segment_sum(x, [1, 0, 1], 2), [a])],
    }


def check_op(name: str, seed: int) -> float:
    """Worst relative error over every case and operand of op ``name``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for fn, arrays in _op_cases(rng)[name]:
        probe = fn(*[nd.Tensor(x) for x in arrays])
        project = _weighted(probe, rng)
        for k in range(len(arrays)):
            consts = [nd.Tensor(x) for x in arrays]

            def f(t, k=k, consts=consts):
                args = list(consts)
                args[k] = t
                return project(fn(*args))

            worst = max(worst, nd.grad_check(f, nd.Tensor(arrays[k].copy(), requires_grad=True)))
    return worst


OP_NAMES = tuple(_op_cases(np.random.default_rng(0)))


def end_to_end_fixture(seed: int):
    """A 3-object, 2-triplet graph, its ground truth, and a small model with O(1) embeddings."""
    vocab = Vocab(("person", "board", "bench"), ("riding", "near"))
    graph = SceneGraph((0, 1, 2), ((0, 0, 1), (0, 1, 2)))
    rng = np.random.default_rng(seed)
    gt = np.column_stack([
        rng.uniform(0.15, 0.85, 3), rng.uniform(0.15, 0.85, 3), rng.uniform(0.1, 0.5, 3), rng.uniform(0.1, 0.5, 3)
    ])
    model = init_model(vocab, ModelDims(d1=6, d2=5, hidden=8, layers=2), seed=seed)
    for name in ("category_embeddings", "predicate_embeddings"):
        model.params[name].data = rng.normal(size=model.params[name].shape)
    return model, graph, gt


def check_end_to_end(seed: int, weights: LossWeights = LossWeights(1.0, 1.0), floor: float = 1e-8) -> Dict[str, float]:
    """Gradient of lambda_box * L_box + lambda_scm * L_scm w.r.t. embeddings and selected weights."""
    model, graph, gt = end_to_end_fixture(seed)
    out = {}
    for pname in ("category_embeddings", "predicate_embeddings", "gcn.0.edge1.w", "box.2.w"):
        original = model.params[pname]

        def f(t, pname=pname):
            model.params[pname] = t
            pred = predict_boxes(model, encode(model, graph))
            return total_loss(weights, box_loss(gt, pred), scm_loss(graph, gt, pred))

        out[pname] = nd.grad_check(f, nd.Tensor(original.data.copy(), requires_grad=True), floor=floor)
        model.params[pname] = original
    return out


@dataclass
class GradcheckReport:
    results: Dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.results.values())

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE

    def lines(self) -> List[str]:
        rows = [f"{name:<28} {err:.3e}  {'ok' if err < TOLERANCE else 'FAIL'}" for name, err in self.results.items()]
        rows.append(f"max relative error {self.max_error:.3e} (tolerance {TOLERANCE:g})")
        return rows


def run_gradcheck(seed: int = 0) -> GradcheckReport:
    results = {f"op:{name}": check_op(name, seed) for name in OP_NAMES}
    for pname, err in check_end_to_end(seed).items():
        results[f"objective:{pname}"] = err
    return GradcheckReport(results)
