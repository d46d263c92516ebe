"""Corpus filtering, per-triplet relative geometry statistics, and a seeded synthetic corpus."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .graph import BoundingBox, LayoutSample, SceneGraph, Vocab, boxes_array
from .spatial import DEGENERATE_EPS

TripletKey = Tuple[int, int, int]


@dataclass(frozen=True)
class FilterConfig:
    min_object_pixels: float = 32
    min_objects_per_image: int = 2
    max_objects_per_image: int = 10
    min_category_count: int = 0
    min_predicate_count: int = 0

    def __post_init__(self):
        for name in ("min_object_pixels", "min_objects_per_image", "max_objects_per_image",
                     "min_category_count", "min_predicate_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.min_objects_per_image > self.max_objects_per_image:
            raise ValueError("min_objects_per_image exceeds max_objects_per_image")


@dataclass
class FilterResult:
    kept: List[LayoutSample]
    report: Dict[str, int] = field(default_factory=dict)


def _drop_objects(sample: LayoutSample, keep: Sequence[bool]) -> LayoutSample:
    new_index = {}
    for i, k in enumerate(keep):
        if k:
            new_index[i] = len(new_index)
    triplets = tuple(
        (new_index[s], p, new_index[o]) for s, p, o in sample.graph.triplets if s in new_index and o in new_index
    )
    cats = tuple(c for c, k in zip(sample.graph.object_categories, keep) if k)
    boxes = tuple(b for b, k in zip(sample.boxes, keep) if k)
    return LayoutSample(sample.id, sample.image_width, sample.image_height, SceneGraph(cats, triplets), boxes)


def _filter_pass(samples: List[LayoutSample], cfg: FilterConfig, report: Counter) -> List[LayoutSample]:
    cat_counts = Counter(c for s in samples for c in s.graph.object_categories)
    pred_counts = Counter(p for s in samples for _, p, _ in s.graph.triplets)

    def bounds_ok(sample):
        n = sample.graph.n
        if n < cfg.min_objects_per_image:
            report["too_few_objects"] += 1
            return False
        if n > cfg.max_objects_per_image:
            report["too_many_objects"] += 1
            return False
        return True

    kept = []
    for sample in samples:
        if any(cat_counts[c] < cfg.min_category_count for c in sample.graph.object_categories):
            report["rare_category"] += 1
            continue
        if any(pred_counts[p] < cfg.min_predicate_count for _, p, _ in sample.graph.triplets):
            report["rare_predicate"] += 1
            continue
        if not bounds_ok(sample):
            continue
        # relative tolerance keeps e.g. 0.32 * 100 on the right side of 32
        big = [
            b.w * sample.image_width * (1 + 1e-12) >= cfg.min_object_pixels
            and b.h * sample.image_height * (1 + 1e-12) >= cfg.min_object_pixels
            for b in sample.boxes
        ]
        if not all(big):
            report["small_object"] += big.count(False)
            sample = _drop_objects(sample, big)
            if not bounds_ok(sample):
                continue
        kept.append(sample)
    return kept


def filter_corpus(samples: Sequence[LayoutSample], cfg: FilterConfig = FilterConfig()) -> FilterResult:
    """Apply the dataset rules in order, repeating until nothing changes.

    Per pass: drop images holding a rare category or predicate (counted over
    the whole corpus), enforce the per-image object-count bounds, drop
    objects smaller than ``min_object_pixels`` on either side, re-check the
    bounds. Repeating to a fixed point makes the filter idempotent. The
    report counts rejected images per rule and dropped objects under
    ``small_object``; rules that never fired are absent.
    """
    report: Counter = Counter()
    current = list(samples)
    while True:
        nxt = _filter_pass(current, cfg, report)
        if nxt == current:
            break
        current = nxt
    return FilterResult(current, {k: v for k, v in sorted(report.items()) if v})


@dataclass(frozen=True)
class TripletStats:
    count: int
    mean_s: float
    std_s: float
    mean_dx: float
    std_dx: float
    mean_dy: float
    std_dy: float


@dataclass
class TripletStatTable:
    entries: Dict[TripletKey, TripletStats] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def get(self, key: TripletKey) -> Optional[TripletStats]:
        return self.entries.get(key)

    def by_predicate(self) -> Dict[int, TripletStats]:
        """Pool entries per predicate (weighted by count) for coarse summaries."""
        out = {}
        for p in sorted({k[1] for k in self.entries}):
            rows = [(k, v) for k, v in self.entries.items() if k[1] == p]
            n = sum(v.count for _, v in rows)
            out[p] = TripletStats(
                n,
                math.fsum(v.mean_s * v.count for _, v in rows) / n,
                math.nan,
                math.fsum(v.mean_dx * v.count for _, v in rows) / n,
                math.nan,
                math.fsum(v.mean_dy * v.count for _, v in rows) / n,
                math.nan,
            )
        return out

    def to_records(self, vocab: Vocab) -> List[dict]:
        records = []
        for (c_s, p, c_o), st in self.entries.items():
            records.append({
                "triplet": f"{vocab.categories[c_s]}|{vocab.predicates[p]}|{vocab.categories[c_o]}",
                "count": st.count,
                "mean_s": st.mean_s,
                "std_s": st.std_s,
                "mean_dx": st.mean_dx,
                "std_dx": st.std_dx,
                "mean_dy": st.mean_dy,
                "std_dy": st.std_dy,
            })
        records.sort(key=lambda r: r["triplet"])
        return records

    def dumps(self, vocab: Vocab) -> str:
        return json.dumps(self.to_records(vocab), indent=1) + "\n"

    @classmethod
    def from_records(cls, records: Sequence[dict], vocab: Vocab) -> "TripletStatTable":
        table = cls()
        for r in records:
            s, p, o = r["triplet"].split("|")
            key = (vocab.category_id(s), vocab.predicate_id(p), vocab.category_id(o))
            table.entries[key] = TripletStats(
                int(r["count"]), r["mean_s"], r["std_s"], r["mean_dx"], r["std_dx"], r["mean_dy"], r["std_dy"]
            )
        return table


def _mean_std(values: List[float]) -> Tuple[float, float]:
    n = len(values)
    if min(values) == max(values):
        # fsum(n * v) / n can miss v by an ulp; a constant sample has no spread
        return values[0], 0.0
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def compute_stats(samples: Sequence[LayoutSample]) -> TripletStatTable:
    """Mean and sample standard deviation of (scale, dx, dy) per triplet type.

    Accumulation runs over samples sorted by id with correctly rounded sums,
    so the table does not depend on input order.
    """
    table = TripletStatTable()
    subj_boxes, obj_boxes, keys = [], [], []
    for sample in sorted(samples, key=lambda s: s.id):
        if not sample.graph.triplets:
            continue
        boxes = boxes_array(sample.boxes)
        diags = np.sqrt(boxes[:, 2] * boxes[:, 2] + boxes[:, 3] * boxes[:, 3])
        t = np.asarray(sample.graph.triplets, dtype=np.int64)
        if np.any(diags[t[:, 0]] < DEGENERATE_EPS) or np.any(diags[t[:, 2]] < DEGENERATE_EPS):
            table.warnings.append(f"sample {sample.id!r} skipped: degenerate box")
            continue
        cats = sample.graph.object_categories
        subj_boxes.append(boxes[t[:, 0]])
        obj_boxes.append(boxes[t[:, 2]])
        keys.extend((cats[s], p, cats[o]) for s, p, o in sample.graph.triplets)
    if not keys:
        return table
    scale, dist = _kernels.relative_geometry(np.concatenate(subj_boxes), np.concatenate(obj_boxes), 0.0)
    groups: Dict[TripletKey, List[int]] = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    for key in sorted(groups):
        idx = groups[key]
        ms, ss = _mean_std(scale[idx].tolist())
        mx, sx = _mean_std(dist[idx, 0].tolist())
        my, sy = _mean_std(dist[idx, 1].tolist())
        table.entries[key] = TripletStats(len(idx), ms, ss, mx, sx, my, sy)
    return table


@dataclass(frozen=True)
class PredicateParams:
    mu_log_s: float = 0.0
    sigma_log_s: float = 0.0
    mu_dx: float = 0.0
    sigma_dx: float = 0.0
    mu_dy: float = 0.0
    sigma_dy: float = 0.0

    def __post_init__(self):
        for name in ("sigma_log_s", "sigma_dx", "sigma_dy"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    """Generative parameters of a synthetic layout corpus.

    Every scene is a tree: object 0 (the anchor) is placed at random, and
    each later object is attached as the object of one triplet whose subject
    is a random earlier object. Predicates are dealt in shuffled rounds so
    each appears equally often.
    """

    categories: Tuple[str, ...]
    predicates: Dict[str, PredicateParams]
    scenes: int
    objects_per_scene: Tuple[int, int] = (2, 2)
    seed: int = 0
    anchor_size: Tuple[float, float] = (0.15, 0.3)
    anchor_center: Tuple[float, float] = (0.3, 0.7)
    image_size: Tuple[int, int] = (512, 512)

    def __post_init__(self):
        if self.scenes < 1:
            raise ValueError("scenes must be >= 1")
        lo, hi = self.objects_per_scene
        if lo < 1 or hi < lo:
            raise ValueError(f"bad objects_per_scene {self.objects_per_scene}")
        if not self.categories or not self.predicates:
            raise ValueError("need at least one category and one predicate")
        a0, a1 = self.anchor_size
        if not 0 < a0 <= a1 <= 1:
            raise ValueError(f"bad anchor_size {self.anchor_size}")
        c0, c1 = self.anchor_center
        if not 0 <= c0 <= c1 <= 1:
            raise ValueError(f"bad anchor_center {self.anchor_center}")

    @property
    def vocab(self) -> Vocab:
        return Vocab(tuple(self.categories), tuple(self.predicates))

    @classmethod
    def from_json(cls, doc: dict) -> "SynthSpec":
        preds = {name: PredicateParams(**params) for name, params in doc["predicates"].items()}
        kwargs = {k: tuple(doc[k]) for k in ("objects_per_scene", "anchor_size", "anchor_center", "image_size") if k in doc}
        return cls(
            categories=tuple(doc["categories"]),
            predicates=preds,
            scenes=int(doc["scenes"]),
            seed=int(doc.get("seed", 0)),
            **kwargs,
        )

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {
            "categories": list(self.categories),
            "predicates": {k: vars(v).copy() for k, v in self.predicates.items()},
            "scenes": self.scenes,
            "objects_per_scene": list(self.objects_per_scene),
            "seed": self.seed,
            "anchor_size": list(self.anchor_size),
            "anchor_center": list(self.anchor_center),
            "image_size": list(self.image_size),
        }


MAX_TRIES = 100


def _valid(x, y, w, h) -> bool:
    return 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0 and 0.0 < w <= 1.0 and 0.0 < h <= 1.0


def synth_corpus(spec: SynthSpec) -> List[LayoutSample]:
    """Deterministic corpus whose related pairs have exactly the sampled geometry.

    Per triplet: scale ~ LogNormal(mu_log_s, sigma_log_s), dx and dy ~ Normal,
    a fair coin for the side. The new object keeps its subject's aspect ratio
    and is solved from those values; placements leaving the unit square are
    resampled (subject included) up to 100 times.
    """
    rng = np.random.default_rng(spec.seed)
    vocab = spec.vocab
    params = [spec.predicates[name] for name in vocab.predicates]
    n_pred = len(params)
    deck: List[int] = []
    width, height = spec.image_size
    samples = []
    for scene in range(spec.scenes):
        k = int(rng.integers(spec.objects_per_scene[0], spec.objects_per_scene[1] + 1))
        cats = [int(c) for c in rng.integers(len(spec.categories), size=k)]
        w0, h0 = rng.uniform(*spec.anchor_size, size=2)
        x0, y0 = rng.uniform(*spec.anchor_center, size=2)
        boxes = [(float(x0), float(y0), float(w0), float(h0))]
        triplets = []
        for j in range(1, k):
            if not deck:
                deck = [int(p) for p in rng.permutation(n_pred)][::-1]
            p = deck.pop()
            pp = params[p]
            for _ in range(MAX_TRIES):
                a = int(rng.integers(j))
                xa, ya, wa, ha = boxes[a]
                diag_a = math.sqrt(wa * wa + ha * ha)
                s = math.exp(rng.normal(pp.mu_log_s, pp.sigma_log_s))
                dx = float(rng.normal(pp.mu_dx, pp.sigma_dx))
                dy = float(rng.normal(pp.mu_dy, pp.sigma_dy))
                side = 1.0 if rng.random() < 0.5 else -1.0
                wk, hk = wa / s, ha / s
                den = diag_a + math.sqrt(wk * wk + hk * hk)
                xk = xa + side * dx * den
                yk = ya - dy * den
                if _valid(xk, yk, wk, hk):
                    break
            else:
                raise SynthError(
                    f"scene {scene}: could not place object {j} ({vocab.predicates[p]}) in {MAX_TRIES} tries"
                )
            boxes.append((xk, yk, wk, hk))
            triplets.append((a, p, j))
        samples.append(
            LayoutSample(
                id=f"synth-{spec.seed}-{scene:06d}",
                image_width=int(width),
                image_height=int(height),
                graph=SceneGraph(tuple(cats), tuple(triplets)),
                boxes=tuple(BoundingBox(*b) for b in boxes),
            )
        )
    return samples
