import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sglayout.graph import (
    BoundingBox,
    LayoutSample,
    ParseError,
    SceneGraph,
    Vocab,
    dumps_samples,
    parse_samples,
    parse_vocab,
    validate_sample,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_vocab_dense_ids(tmp_path):
    p = write(tmp_path, "v.json", json.dumps({"categories": ["man", "skateboard"], "predicates": ["riding"]}))
    v = parse_vocab(p)
    assert v.categories == ("man", "skateboard")
    assert v.category_id("skateboard") == 1
    assert v.predicate_id("riding") == 0


def test_parse_vocab_duplicate_names_line(tmp_path):
    text = '{\n "categories": [\n  "man",\n  "man"\n ],\n "predicates": []\n}\n'
    with pytest.raises(ParseError, match="line 4.*duplicate category 'man'"):
        parse_vocab(write(tmp_path, "v.json", text))


def test_parse_vocab_empty_predicates(tmp_path):
    v = parse_vocab(write(tmp_path, "v.json", '{"categories": ["a"], "predicates": []}'))
    assert v.num_predicates == 0


def test_parse_vocab_malformed(tmp_path):
    with pytest.raises(ParseError, match="line 1"):
        parse_vocab(write(tmp_path, "v.json", '{"categories": '))


VOCAB = Vocab(("man", "skateboard", "street"), ("riding", "above"))


def record(**over):
    rec = {
        "id": "s1",
        "width": 640,
        "height": 480,
        "objects": [
            {"category": "man", "box": [0.5, 0.4, 0.2, 0.5]},
            {"category": "skateboard", "box": [0.5, 0.7, 0.2, 0.1]},
        ],
        "triplets": [[0, "riding", 1]],
    }
    rec.update(over)
    return rec


def test_parse_samples_one_line(tmp_path):
    p = write(tmp_path, "s.jsonl", json.dumps(record()) + "\n")
    samples = parse_samples(p, VOCAB)
    assert len(samples) == 1
    assert samples[0].graph.m == 1
    assert samples[0].graph.object_categories == (0, 1)
    assert samples[0].boxes[1] == BoundingBox(0.5, 0.7, 0.2, 0.1)


def test_parse_samples_zero_width_names_sample(tmp_path):
    rec = record(id="bad-box")
    rec["objects"][1]["box"] = [0.5, 0.7, 0.0, 0.1]
    p = write(tmp_path, "s.jsonl", json.dumps(record(id="ok")) + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(ParseError, match="line 2.*'bad-box'"):
        parse_samples(p, VOCAB)


def test_parse_samples_self_loop(tmp_path):
    p = write(tmp_path, "s.jsonl", json.dumps(record(triplets=[[0, "riding", 0]])) + "\n")
    with pytest.raises(ParseError, match="itself"):
        parse_samples(p, VOCAB)


def test_parse_samples_duplicate_triplet(tmp_path):
    p = write(tmp_path, "s.jsonl", json.dumps(record(triplets=[[0, "riding", 1], [0, "riding", 1]])) + "\n")
    with pytest.raises(ParseError, match="duplicates"):
        parse_samples(p, VOCAB)


@pytest.mark.parametrize("field,value,msg", [
    ("objects", [{"category": "cat", "box": [0.5, 0.5, 0.1, 0.1]}], "unknown category 'cat'"),
    ("triplets", [[0, "kicking", 1]], "unknown predicate 'kicking'"),
])
def test_parse_samples_unknown_names(tmp_path, field, value, msg):
    p = write(tmp_path, "s.jsonl", json.dumps(record(**{field: value})) + "\n")
    with pytest.raises(ParseError, match=msg):
        parse_samples(p, VOCAB)


def test_parse_samples_bad_json_line_number(tmp_path):
    p = write(tmp_path, "s.jsonl", json.dumps(record()) + "\n{nope\n")
    with pytest.raises(ParseError, match="line 2"):
        parse_samples(p, VOCAB)


def test_parse_samples_graphs_without_boxes(tmp_path):
    rec = record()
    for obj in rec["objects"]:
        del obj["box"]
    p = write(tmp_path, "g.jsonl", json.dumps(rec) + "\n")
    with pytest.raises(ParseError):
        parse_samples(p, VOCAB)
    (sample,) = parse_samples(p, VOCAB, require_boxes=False)
    assert sample.boxes == () and sample.graph.n == 2


def make_sample(boxes, triplets=((0, 0, 1),), cats=(0, 1)):
    return LayoutSample("x", 100, 100, SceneGraph(tuple(cats), tuple(triplets)), tuple(boxes))


def test_validate_valid():
    assert validate_sample(make_sample([BoundingBox(0.5, 0.5, 0.2, 0.2)] * 2)) == []


def test_validate_x_out_of_range():
    v = validate_sample(make_sample([BoundingBox(1.5, 0.5, 0.2, 0.2), BoundingBox(0.5, 0.5, 0.2, 0.2)]))
    assert len(v) == 1 and "x=1.5" in v[0]


def test_validate_box_count():
    v = validate_sample(make_sample([BoundingBox(0.5, 0.5, 0.2, 0.2)]))
    assert len(v) == 1 and "1 boxes for 2 objects" in v[0]


unit = st.floats(0.0, 1.0, allow_nan=False)
extent = st.floats(1e-6, 1.0, allow_nan=False)


@st.composite
def samples(draw):
    n = draw(st.integers(1, 6))
    cats = tuple(draw(st.lists(st.integers(0, 2), min_size=n, max_size=n)))
    boxes = tuple(BoundingBox(draw(unit), draw(unit), draw(extent), draw(extent)) for _ in range(n))
    pairs = [(s, p, o) for s in range(n) for p in range(2) for o in range(n) if s != o]
    triplets = tuple(draw(st.lists(st.sampled_from(pairs), unique=True, max_size=6))) if pairs else ()
    sid = draw(st.text(min_size=1, max_size=8))
    return LayoutSample(sid, draw(st.integers(1, 4000)), draw(st.integers(1, 4000)), SceneGraph(cats, triplets), boxes)


@settings(max_examples=100, deadline=None)
@given(st.lists(samples(), min_size=1, max_size=4))
def test_round_trip_identity(tmp_path_factory, batch):
    p = tmp_path_factory.mktemp("rt") / "s.jsonl"
    p.write_text(dumps_samples(batch, VOCAB), encoding="utf-8")
    parsed = parse_samples(p, VOCAB)
    assert parsed == batch
    assert all(validate_sample(s) == [] for s in parsed)
