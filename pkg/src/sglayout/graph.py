"""Scene graphs, boxes and layout-annotated samples, plus their JSON file formats."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

PathLike = Union[str, Path]

Triplet = Tuple[int, int, int]


class ParseError(ValueError):
    """Raised for malformed input files; the message names the offending line or sample."""


@dataclass(frozen=True)
class Vocab:
    categories: Tuple[str, ...]
    predicates: Tuple[str, ...]

    def __post_init__(self):
        for kind, names in (("category", self.categories), ("predicate", self.predicates)):
            seen = set()
            for name in names:
                if name in seen:
                    raise ValueError(f"duplicate {kind} name {name!r}")
                seen.add(name)

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)

    def category_id(self, name: str) -> int:
        try:
            return self.categories.index(name)
        except ValueError:
            raise KeyError(f"unknown category {name!r}") from None

    def predicate_id(self, name: str) -> int:
        try:
            return self.predicates.index(name)
        except ValueError:
            raise KeyError(f"unknown predicate {name!r}") from None

    def to_json(self) -> dict:
        return {"categories": list(self.categories), "predicates": list(self.predicates)}

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BoundingBox:
    """Normalized center-format box; y grows downward."""

    x: float
    y: float
    w: float
    h: float

    def violations(self) -> List[str]:
        out = []
        for name in ("x", "y"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name}={v!r} outside [0, 1]")
        for name in ("w", "h"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                out.append(f"{name}={v!r} outside (0, 1]")
        return out

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class SceneGraph:
    object_categories: Tuple[int, ...]
    triplets: Tuple[Triplet, ...]

    @property
    def object_count(self) -> int:
        return len(self.object_categories)

    @property
    def n(self) -> int:
        return len(self.object_categories)

    @property
    def m(self) -> int:
        return len(self.triplets)

    def violations(self, vocab: Vocab | None = None) -> List[str]:
        out = []
        n = self.n
        seen = set()
        for e, (s, p, o) in enumerate(self.triplets):
            if not (0 <= s < n and 0 <= o < n):
                out.append(f"triplet {e} index out of range for {n} objects")
            if s == o:
                out.append(f"triplet {e} relates object {s} to itself")
            if (s, p, o) in seen:
                out.append(f"triplet {e} duplicates ({s}, {p}, {o})")
            seen.add((s, p, o))
            if vocab is not None and not 0 <= p < vocab.num_predicates:
                out.append(f"triplet {e} predicate id {p} out of range")
        if vocab is not None:
            for i, c in enumerate(self.object_categories):
                if not 0 <= c < vocab.num_categories:
                    out.append(f"object {i} category id {c} out of range")
        return out


@dataclass(frozen=True)
class LayoutSample:
    id: str
    image_width: int
    image_height: int
    graph: SceneGraph
    boxes: Tuple[BoundingBox, ...]


def validate_sample(sample: LayoutSample, vocab: Vocab | None = None) -> List[str]:
    """Return every violated invariant of ``sample``; an empty list means valid."""
    out = list(sample.graph.violations(vocab))
    if len(sample.boxes) != sample.graph.object_count:
        out.append(f"{len(sample.boxes)} boxes for {sample.graph.object_count} objects")
    for i, box in enumerate(sample.boxes):
        out.extend(f"box {i}: {msg}" for msg in box.violations())
    if sample.image_width <= 0 or sample.image_height <= 0:
        out.append(f"image size {sample.image_width}x{sample.image_height} not positive")
    return out


def parse_vocab(path: PathLike) -> Vocab:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: line 1: expected a JSON object")
    lists = []
    for key, kind in (("categories", "category"), ("predicates", "predicate")):
        names = doc.get(key)
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise ParseError(f"{path}: line 1: {key!r} must be a list of strings")
        seen = set()
        for name in names:
            if name in seen:
                raise ParseError(f"{path}: line {_line_of(text, name)}: duplicate {kind} {name!r}")
            seen.add(name)
        lists.append(tuple(names))
    return Vocab(*lists)


def _line_of(text: str, name: str) -> int:
    needle = json.dumps(name)
    first = text.find(needle)
    pos = text.find(needle, first + 1)
    if pos < 0:
        pos = first
    return text.count("\n", 0, max(pos, 0)) + 1


def sample_from_record(record: dict, vocab: Vocab, require_boxes: bool = True) -> LayoutSample:
    """Build a sample from one decoded JSON Lines record; raises ValueError/KeyError/TypeError."""
    sid = record["id"]
    if not isinstance(sid, str):
        raise TypeError("'id' must be a string")
    objects = record["objects"]
    cats = []
    boxes = []
    for obj in objects:
        cats.append(vocab.category_id(obj["category"]))
        if "box" in obj:
            x, y, w, h = (float(v) for v in obj["box"])
            boxes.append(BoundingBox(x, y, w, h))
        elif require_boxes:
            raise KeyError("object without 'box'")
    triplets = []
    for t in record.get("triplets", []):
        s, p, o = t
        if not (isinstance(s, int) and isinstance(o, int)):
            raise TypeError("triplet indices must be integers")
        triplets.append((s, vocab.predicate_id(p), o))
    return LayoutSample(
        id=sid,
        image_width=int(record.get("width", 1)),
        image_height=int(record.get("height", 1)),
        graph=SceneGraph(tuple(cats), tuple(triplets)),
        boxes=tuple(boxes),
    )


def parse_samples(path: PathLike, vocab: Vocab, require_boxes: bool = True) -> List[LayoutSample]:
    """Read a JSON Lines sample file. Blank lines are skipped.

    With ``require_boxes=False`` objects may omit their box (scene graphs to be
    laid out); box-count validation is then skipped for box-less samples.
    """
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sample = sample_from_record(record, vocab, require_boxes=require_boxes)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc.msg}") from None
            except (KeyError, TypeError, ValueError) as exc:
                msg = exc.args[0] if exc.args else type(exc).__name__
                raise ParseError(f"{path}: line {lineno}: {msg}") from None
            problems = validate_sample(sample, vocab)
            if not sample.boxes and not require_boxes:
                problems = [p for p in problems if "boxes for" not in p]
            if problems:
                raise ParseError(f"{path}: line {lineno}: sample {sample.id!r}: " + "; ".join(problems))
            samples.append(sample)
    return samples


def sample_to_record(sample: LayoutSample, vocab: Vocab) -> dict:
    objects = []
    for i, c in enumerate(sample.graph.object_categories):
        obj = {"category": vocab.categories[c]}
        if sample.boxes:
            obj["box"] = list(sample.boxes[i].as_tuple())
        objects.append(obj)
    return {
        "id": sample.id,
        "width": sample.image_width,
        "height": sample.image_height,
        "objects": objects,
        "triplets": [[s, vocab.predicates[p], o] for s, p, o in sample.graph.triplets],
    }


def dumps_samples(samples: Iterable[LayoutSample], vocab: Vocab) -> str:
    return "".join(json.dumps(sample_to_record(s, vocab)) + "\n" for s in samples)


def write_samples(path: PathLike, samples: Iterable[LayoutSample], vocab: Vocab) -> None:
    Path(path).write_text(dumps_samples(samples, vocab), encoding="utf-8")


def write_vocab(path: PathLike, vocab: Vocab) -> None:
    Path(path).write_text(json.dumps(vocab.to_json(), indent=2) + "\n", encoding="utf-8")


def boxes_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(len(boxes), 4)
