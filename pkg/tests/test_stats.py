import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sglayout.graph import BoundingBox, LayoutSample, SceneGraph, Vocab, parse_samples
from sglayout.spatial import relative_scale
from sglayout.stats import (
    FilterConfig,
    PredicateParams,
    SynthError,
    SynthSpec,
    TripletStatTable,
    compute_stats,
    filter_corpus,
    synth_corpus,
)
from oracles import sample_std

BIG = BoundingBox(0.5, 0.5, 0.4, 0.4)


def sample(sid, n, triplets=(), boxes=None, size=100, cats=None):
    cats = tuple(cats) if cats is not None else tuple(i % 2 for i in range(n))
    boxes = tuple(boxes) if boxes is not None else (BIG,) * n
    return LayoutSample(sid, size, size, SceneGraph(cats, tuple(triplets)), boxes)


def test_one_object_image_rejected():
    res = filter_corpus([sample("a", 1)])
    assert res.kept == [] and res.report == {"too_few_objects": 1}


def test_too_many_objects_rejected():
    res = filter_corpus([sample("a", 11)])
    assert res.kept == [] and res.report == {"too_many_objects": 1}


def test_small_object_dropped_and_triplets_remapped():
    small = BoundingBox(0.5, 0.5, 0.2, 0.2)
    s = sample("a", 3, triplets=[(0, 0, 2), (1, 0, 2), (0, 0, 1)], boxes=[small, BIG, BIG])
    res = filter_corpus([s])
    (kept,) = res.kept
    assert kept.graph.n == 2
    assert kept.graph.triplets == ((0, 0, 1),)
    assert res.report == {"small_object": 1}


def test_exactly_32_pixels_kept():
    edge = BoundingBox(0.5, 0.5, 0.32, 0.32)
    res = filter_corpus([sample("a", 2, boxes=[edge, edge])])
    assert len(res.kept) == 1


def test_all_pass_unchanged(vocab, fixture_corpus_path):
    corpus = parse_samples(fixture_corpus_path, vocab)
    res = filter_corpus(corpus)
    assert res.kept == corpus and res.report == {}


def test_rare_predicate_rejects_image():
    common = [sample(f"c{i}", 2, triplets=[(0, 0, 1)]) for i in range(3)]
    rare = sample("r", 2, triplets=[(0, 1, 1)])
    res = filter_corpus(common + [rare], FilterConfig(min_predicate_count=2))
    assert [s.id for s in res.kept] == ["c0", "c1", "c2"]
    assert res.report == {"rare_predicate": 1}


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(min_objects_per_image=11, max_objects_per_image=10)


@st.composite
def corpora(draw):
    out = []
    for i in range(draw(st.integers(0, 8))):
        n = draw(st.integers(1, 12))
        sides = draw(st.lists(st.sampled_from([0.2, 0.3, 0.4]), min_size=n, max_size=n))
        cats = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
        pairs = [(s, p, o) for s in range(n) for p in range(2) for o in range(n) if s != o]
        trip = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=4)) if pairs else []
        out.append(sample(f"s{i}", n, trip, [BoundingBox(0.5, 0.5, w, w) for w in sides], cats=cats))
    return out


@settings(max_examples=150, deadline=None)
@given(corpora(), st.integers(0, 3), st.integers(0, 3))
def test_filter_idempotent(corpus, min_cat, min_pred):
    cfg = FilterConfig(min_category_count=min_cat, min_predicate_count=min_pred)
    once = filter_corpus(corpus, cfg).kept
    twice = filter_corpus(once, cfg)
    assert twice.kept == once
    assert twice.report == {}


def pair_with_scale(sid, s):
    # subject diagonal s * 0.5, object diagonal 0.5
    return sample(sid, 2, [(0, 0, 1)], [BoundingBox(0.3, 0.5, 0.3 * s, 0.4 * s), BoundingBox(0.7, 0.5, 0.3, 0.4)])


def test_stats_two_instances():
    table = compute_stats([pair_with_scale("a", 0.5), pair_with_scale("b", 0.7)])
    e = table.get((0, 0, 1))
    assert e.count == 2
    assert e.mean_s == pytest.approx(0.6, abs=1e-12)
    assert e.std_s == pytest.approx(math.sqrt(0.02), abs=1e-12)


def test_stats_single_instance_zero_std():
    e = compute_stats([pair_with_scale("a", 0.5)]).get((0, 0, 1))
    assert (e.std_s, e.std_dx, e.std_dy) == (0.0, 0.0, 0.0)


def test_stats_empty():
    assert len(compute_stats([])) == 0


def test_stats_degenerate_sample_skipped():
    bad = sample("bad", 2, [(0, 0, 1)], [BoundingBox(0.5, 0.5, 0.0, 0.0), BIG])
    table = compute_stats([bad, pair_with_scale("a", 0.5)])
    assert table.get((0, 0, 1)).count == 1
    assert "bad" in table.warnings[0]


def test_stats_match_oracle_and_ignore_order():
    rng = np.random.default_rng(3)
    corpus = [pair_with_scale(f"p{i:03d}", float(s)) for i, s in enumerate(rng.uniform(0.3, 2.0, 50))]
    e = compute_stats(corpus).get((0, 0, 1))
    scales = [relative_scale(s.boxes[0], s.boxes[1]) for s in corpus]
    assert e.std_s == pytest.approx(sample_std(scales), rel=1e-12)
    vocab = Vocab(("a", "b"), ("p",))
    shuffled = [corpus[i] for i in rng.permutation(len(corpus))]
    assert compute_stats(shuffled).dumps(vocab) == compute_stats(corpus).dumps(vocab)


def test_stat_table_round_trip():
    vocab = Vocab(("a", "b"), ("p",))
    table = compute_stats([pair_with_scale("a", 0.5), pair_with_scale("b", 0.7)])
    back = TripletStatTable.from_records(json.loads(table.dumps(vocab)), vocab)
    assert back.entries == table.entries


def spec(**over):
    base = dict(
        categories=("thing", "other"),
        predicates={"up": PredicateParams(0.0, 0.1, 0.2, 0.05, -0.3, 0.05),
                    "side": PredicateParams(0.4, 0.1, 0.4, 0.05, 0.0, 0.05)},
        scenes=200,
        objects_per_scene=(2, 3),
        seed=5,
        anchor_size=(0.1, 0.2),
        anchor_center=(0.35, 0.65),
    )
    base.update(over)
    return SynthSpec(**base)


def test_synth_deterministic():
    assert synth_corpus(spec()) == synth_corpus(spec())
    assert synth_corpus(spec()) != synth_corpus(spec(seed=6))


def test_synth_valid_and_balanced():
    corpus = synth_corpus(spec())
    assert all(s.boxes and not [v for b in s.boxes for v in b.violations()] for s in corpus)
    counts = np.bincount([p for s in corpus for _, p, _ in s.graph.triplets])
    assert counts.max() - counts.min() <= 1


def test_synth_zero_sigma_unit_scale_exact():
    preds = {"a": PredicateParams(0.0, 0.0, 0.3, 0.0, 0.2, 0.0), "b": PredicateParams(0.0, 0.0, 0.1, 0.0, -0.3, 0.0)}
    corpus = synth_corpus(spec(predicates=preds))
    for s in corpus:
        for j, _, k in s.graph.triplets:
            assert relative_scale(s.boxes[j], s.boxes[k]) == 1.0
    assert all(e.std_s == 0.0 for e in compute_stats(corpus).entries.values())


def test_synth_unsatisfiable():
    preds = {"far": PredicateParams(0.0, 0.0, 5.0, 0.0, 5.0, 0.0)}
    with pytest.raises(SynthError, match="could not place"):
        synth_corpus(spec(predicates=preds))


def test_synth_spec_json_round_trip(synth_spec_doc):
    s = SynthSpec.from_json(synth_spec_doc)
    assert SynthSpec.from_json(json.loads(json.dumps(s.to_json()))) == s
