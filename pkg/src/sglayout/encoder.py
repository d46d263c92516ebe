"""Learnable layout generator: embeddings, triplet graph convolution, and the box regressor.

One convolution layer, for every triplet (s, r, o):

    (cand_s, r', cand_o) = edge_mlp([h_s, h_r, h_o])      # 2 layers, relu
    h_i' = node_mlp(mean of cand over edges touching i)   # 1 layer, relu

Nodes without edges feed their own vector to ``node_mlp``. Candidates are
summed in ascending edge order (subject before object within an edge), so
relabeling objects permutes outputs bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import ndgrad as nd
from .graph import BoundingBox, SceneGraph, Vocab

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class ModelDims:
    d1: int = 64
    d2: int = 64
    hidden: int = 128
    layers: int = 3

    def __post_init__(self):
        for name in ("d1", "d2", "hidden", "layers"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"dims.{name} must be positive, got {getattr(self, name)}")


@dataclass
class LayoutModel:
    vocab: Vocab
    dims: ModelDims
    params: Dict[str, nd.Tensor] = field(default_factory=dict)

    @property
    def category_embeddings(self) -> nd.Tensor:
        return self.params["category_embeddings"]

    @property
    def predicate_embeddings(self) -> nd.Tensor:
        return self.params["predicate_embeddings"]

    @property
    def gcn_layers(self) -> List[Dict[str, nd.Tensor]]:
        return [
            {k.split(".", 2)[2]: v for k, v in self.params.items() if k.startswith(f"gcn.{i}.")}
            for i in range(self.dims.layers)
        ]

    @property
    def box_head(self) -> Dict[str, nd.Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith("box.")}

    def parameters(self) -> List[nd.Tensor]:
        return list(self.params.values())

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}


@dataclass
class EncodedGraph:
    object_vectors: nd.Tensor
    relation_vectors: nd.Tensor


def _param_shapes(vocab: Vocab, dims: ModelDims):
    H = dims.hidden
    shapes = [
        ("category_embeddings", (vocab.num_categories, dims.d1)),
        ("predicate_embeddings", (vocab.num_predicates, dims.d2)),
        ("object_in.w", (dims.d1, H)),
        ("object_in.b", (H,)),
        ("predicate_in.w", (dims.d2, H)),
        ("predicate_in.b", (H,)),
    ]
    for i in range(dims.layers):
        shapes += [
            (f"gcn.{i}.edge1.w", (3 * H, H)),
            (f"gcn.{i}.edge1.b", (H,)),
            (f"gcn.{i}.edge2.w", (H, 3 * H)),
            (f"gcn.{i}.edge2.b", (3 * H,)),
            (f"gcn.{i}.node.w", (H, H)),
            (f"gcn.{i}.node.b", (H,)),
        ]
    shapes += [
        ("box.0.w", (H, H)),
        ("box.0.b", (H,)),
        ("box.1.w", (H, H)),
        ("box.1.b", (H,)),
        ("box.2.w", (H, 4)),
        ("box.2.b", (4,)),
    ]
    return shapes


def init_model(vocab: Vocab, dims: Optional[ModelDims] = None, seed: int = 0) -> LayoutModel:
    """Glorot-uniform weights, zero biases, N(0, 0.01) embeddings; deterministic in ``seed``."""
    dims = dims or ModelDims()
    if vocab.num_categories == 0 or vocab.num_predicates == 0:
        raise ValueError("vocab needs at least one category and one predicate")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _param_shapes(vocab, dims):
        if name.endswith("embeddings"):
            data = rng.normal(0.0, 0.01, size=shape)
        elif name.endswith(".b"):
            data = np.zeros(shape)
        else:
            a = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-a, a, size=shape)
        params[name] = nd.Tensor(data, requires_grad=True, name=name)
    return LayoutModel(vocab, dims, params)


@dataclass
class GraphBatch:
    """Disjoint union of scene graphs with object/edge indices offset per graph."""

    categories: np.ndarray
    subj: np.ndarray
    pred: np.ndarray
    obj: np.ndarray
    object_offsets: np.ndarray
    edge_offsets: np.ndarray

    @property
    def num_objects(self) -> int:
        return len(self.categories)

    @property
    def num_edges(self) -> int:
        return len(self.subj)

    @classmethod
    def from_graphs(cls, graphs: Sequence[SceneGraph]) -> "GraphBatch":
        cats, subj, pred, obj = [], [], [], []
        obj_off, edge_off = [0], [0]
        for g in graphs:
            base = obj_off[-1]
            cats.extend(g.object_categories)
            for s, p, o in g.triplets:
                subj.append(s + base)
                pred.append(p)
                obj.append(o + base)
            obj_off.append(base + g.n)
            edge_off.append(edge_off[-1] + g.m)
        as_idx = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
        return cls(as_idx(cats), as_idx(subj), as_idx(pred), as_idx(obj), as_idx(obj_off), as_idx(edge_off))


def _check_ids(model: LayoutModel, batch: GraphBatch):
    C, P = model.vocab.num_categories, model.vocab.num_predicates
    if batch.categories.size and (batch.categories.min() < 0 or batch.categories.max() >= C):
        raise IndexError(f"category id out of range for {C} categories")
    if batch.pred.size and (batch.pred.min() < 0 or batch.pred.max() >= P):
        raise IndexError(f"predicate id out of range for {P} predicates")


def encode_batch(model: LayoutModel, batch: GraphBatch, noise: Optional[np.ndarray] = None) -> EncodedGraph:
    """Run the graph convolution over a batch; ``noise`` (n, d1) is added to object embeddings."""
    _check_ids(model, batch)
    p = model.params
    n, m = batch.num_objects, batch.num_edges
    x = nd.gather_rows(p["category_embeddings"], batch.categories)
    if noise is not None:
        x = x + np.asarray(noise, dtype=np.float64).reshape(n, model.dims.d1)
    h = nd.linear(x, p["object_in.w"], p["object_in.b"])
    r = nd.linear(nd.gather_rows(p["predicate_embeddings"], batch.pred), p["predicate_in.w"], p["predicate_in.b"])

    H = model.dims.hidden
    counts = np.bincount(np.concatenate([batch.subj, batch.obj]), minlength=n).astype(np.float64)
    isolated = (counts == 0).astype(np.float64).reshape(n, 1)
    divisor = np.maximum(counts, 1.0).reshape(n, 1)
    # candidate rows [cand_s; cand_o] reordered to e0.s, e0.o, e1.s, ...
    order = np.empty(2 * m, dtype=np.int64)
    order[0::2] = np.arange(m)
    order[1::2] = m + np.arange(m)
    targets = np.empty(2 * m, dtype=np.int64)
    targets[0::2] = batch.subj
    targets[1::2] = batch.obj

    for i in range(model.dims.layers):
        pre = f"gcn.{i}."
        if m:
            t = nd.concat([nd.gather_rows(h, batch.subj), r, nd.gather_rows(h, batch.obj)])
            t = nd.relu(nd.linear(t, p[pre + "edge1.w"], p[pre + "edge1.b"]))
            t = nd.relu(nd.linear(t, p[pre + "edge2.w"], p[pre + "edge2.b"]))
            cand = nd.concat([t[:, :H], t[:, 2 * H :]], axis=0)
            pooled = nd.segment_sum(nd.gather_rows(cand, order), targets, n) / divisor
            pooled = pooled + h * isolated
            r = t[:, H : 2 * H]
        else:
            pooled = h
        h = nd.relu(nd.linear(pooled, p[pre + "node.w"], p[pre + "node.b"]))
    return EncodedGraph(h, r)


def encode(model: LayoutModel, graph: SceneGraph, noise: Optional[np.ndarray] = None) -> EncodedGraph:
    return encode_batch(model, GraphBatch.from_graphs([graph]), noise)


def predict_boxes(model: LayoutModel, encoded: EncodedGraph) -> nd.Tensor:
    """(n, 4) tensor of (x, y, w, h), every entry squashed into (0, 1)."""
    p = model.params
    z = nd.relu(nd.linear(encoded.object_vectors, p["box.0.w"], p["box.0.b"]))
    z = nd.relu(nd.linear(z, p["box.1.w"], p["box.1.b"]))
    return nd.sigmoid(nd.linear(z, p["box.2.w"], p["box.2.b"]))


def to_boxes(pred: nd.Tensor) -> List[BoundingBox]:
    return [BoundingBox(*map(float, row)) for row in pred.data]


def combined_vector(model: LayoutModel, graph: SceneGraph, object_index: int, noise) -> np.ndarray:
    """Object embedding joined with the mean embedding of the relations it is the subject of, plus noise.

    An object heading no triplet gets a zero relation part.
    """
    if not 0 <= object_index < graph.n:
        raise IndexError(f"object index {object_index} out of range for {graph.n} objects")
    c = model.category_embeddings.data[graph.object_categories[object_index]]
    rel_ids = [p for s, p, _ in graph.triplets if s == object_index]
    if rel_ids:
        rel = model.predicate_embeddings.data[rel_ids].sum(axis=0) / len(rel_ids)
    else:
        rel = np.zeros(model.dims.d2)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (model.dims.d1 + model.dims.d2,):
        raise ValueError(f"noise must have length {model.dims.d1 + model.dims.d2}, got shape {noise.shape}")
    return np.concatenate([c, rel]) + noise


def save_checkpoint(model: LayoutModel, path) -> None:
    Path(path).write_text(checkpoint_json(model), encoding="utf-8")


def checkpoint_json(model: LayoutModel) -> str:
    doc = {
        "format_version": CHECKPOINT_FORMAT,
        "dims": {"d1": model.dims.d1, "d2": model.dims.d2, "hidden": model.dims.hidden, "layers": model.dims.layers},
        "vocab_hash": model.vocab.content_hash(),
        "arrays": {
            name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()} for name, t in model.params.items()
        },
    }
    # float repr is the shortest string that round-trips
    return json.dumps(doc, separators=(",", ":")) + "\n"


def load_checkpoint(path, vocab: Vocab) -> LayoutModel:
    """Rebuild a model; raises ValueError when ``vocab`` does not hash to the stored value."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    if doc["vocab_hash"] != vocab.content_hash():
        raise ValueError("vocab does not match the checkpoint (hash mismatch)")
    dims = ModelDims(**doc["dims"])
    expected = dict(_param_shapes(vocab, dims))
    params = {}
    for name, shape in expected.items():
        entry = doc["arrays"][name]
        if tuple(entry["shape"]) != shape:
            raise ValueError(f"array {name} has shape {entry['shape']}, expected {list(shape)}")
        data = np.array(entry["values"], dtype=np.float64).reshape(shape)
        params[name] = nd.Tensor(data, requires_grad=True, name=name)
    return LayoutModel(vocab, dims, params)
