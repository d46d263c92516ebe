import numpy as np
import pytest

from sglayout import ndgrad as nd
from sglayout.encoder import (
    ModelDims,
    checkpoint_json,
    combined_vector,
    encode,
    init_model,
    load_checkpoint,
    predict_boxes,
    save_checkpoint,
    to_boxes,
)
from sglayout.graph import SceneGraph, Vocab

VOCAB = Vocab(("man", "board", "bench", "dog"), ("riding", "near", "above"))
DIMS = ModelDims(d1=8, d2=6, hidden=16, layers=2)


def model(seed=0):
    return init_model(VOCAB, DIMS, seed)


def test_same_seed_bit_identical():
    assert checkpoint_json(model(3)) == checkpoint_json(model(3))


def test_different_seed_differs():
    assert checkpoint_json(model(3)) != checkpoint_json(model(4))


def test_zero_hidden_rejected():
    with pytest.raises(ValueError, match="hidden"):
        ModelDims(hidden=0)


def test_empty_vocab_rejected():
    with pytest.raises(ValueError):
        init_model(Vocab((), ("riding",)), DIMS)


def test_single_object_shape():
    enc = encode(model(), SceneGraph((2,), ()))
    assert enc.object_vectors.shape == (1, DIMS.hidden)


def test_out_of_range_ids():
    with pytest.raises(IndexError, match="category"):
        encode(model(), SceneGraph((9,), ()))
    with pytest.raises(IndexError, match="predicate"):
        encode(model(), SceneGraph((0, 1), ((0, 7, 1),)))


GRAPH = SceneGraph((0, 1, 2, 3, 1), ((0, 0, 1), (0, 1, 2), (3, 2, 2), (4, 1, 0), (2, 1, 4)))


def permute(graph, perm):
    """Object i of the result is object perm[i] of ``graph``; triplet order unchanged."""
    where = {old: new for new, old in enumerate(perm)}
    cats = tuple(graph.object_categories[old] for old in perm)
    triplets = tuple((where[s], p, where[o]) for s, p, o in graph.triplets)
    return SceneGraph(cats, triplets)


@pytest.mark.parametrize("seed", range(5))
def test_permutation_equivariance_exact(seed):
    m = model(seed)
    perm = np.random.default_rng(seed).permutation(GRAPH.n)
    a = encode(m, GRAPH).object_vectors.data
    b = encode(m, permute(GRAPH, perm)).object_vectors.data
    assert a[perm].tobytes() == b.tobytes()
    pa = predict_boxes(m, encode(m, GRAPH)).data
    pb = predict_boxes(m, encode(m, permute(GRAPH, perm))).data
    assert pa[perm].tobytes() == pb.tobytes()


def test_predicate_changes_output():
    m = model(1)
    a = encode(m, SceneGraph((0, 1), ((0, 0, 1),))).object_vectors.data
    b = encode(m, SceneGraph((0, 1), ((0, 2, 1),))).object_vectors.data
    assert not np.array_equal(a, b)


def test_identical_objects_identical_boxes():
    m = model(2)
    g = SceneGraph((1, 0, 0), ((1, 0, 0), (2, 0, 0)))
    boxes = predict_boxes(m, encode(m, g)).data
    assert boxes[1].tobytes() == boxes[2].tobytes()


def test_boxes_satisfy_invariants():
    boxes = to_boxes(predict_boxes(model(), encode(model(), GRAPH)))
    assert len(boxes) == GRAPH.n
    assert all(b.violations() == [] for b in boxes)


def test_box_sum_gradient_wrt_embedding_row():
    m = model(5)
    m.params["category_embeddings"].data = np.random.default_rng(5).normal(size=(4, DIMS.d1))
    original = m.params["category_embeddings"]

    def f(t):
        m.params["category_embeddings"] = t
        return nd.sum(predict_boxes(m, encode(m, GRAPH)))

    assert nd.grad_check(f, nd.Tensor(original.data.copy())) < 1e-4


def vec_model():
    m = init_model(Vocab(("a", "b"), ("p", "q", "r")), ModelDims(d1=2, d2=2, hidden=4, layers=1), 0)
    m.params["category_embeddings"].data = np.array([[1.0, 2.0], [5.0, 5.0]])
    m.params["predicate_embeddings"].data = np.array([[0.0, 2.0], [2.0, 0.0], [9.0, 9.0]])
    return m


def test_combined_vector_example():
    g = SceneGraph((0, 1, 1), ((0, 0, 1), (0, 1, 2), (1, 2, 0)))
    np.testing.assert_array_equal(combined_vector(vec_model(), g, 0, np.zeros(4)), [1.0, 2.0, 1.0, 1.0])


def test_combined_vector_without_subject_triplets():
    g = SceneGraph((0, 1), ((1, 2, 0),))
    np.testing.assert_array_equal(combined_vector(vec_model(), g, 0, np.zeros(4)), [1.0, 2.0, 0.0, 0.0])


def test_combined_vector_noise_additive_exact_dyadic():
    g = SceneGraph((0, 1, 1), ((0, 0, 1), (0, 1, 2)))
    z = np.array([0.25, -0.5, 0.125, 3.0])
    base = combined_vector(vec_model(), g, 0, np.zeros(4))
    assert (combined_vector(vec_model(), g, 0, z) - z).tobytes() == base.tobytes()


def test_combined_vector_noise_length_checked():
    with pytest.raises(ValueError, match="length 4"):
        combined_vector(vec_model(), SceneGraph((0,), ()), 0, np.zeros(3))


def test_checkpoint_round_trip(tmp_path):
    m = model(9)
    path = tmp_path / "m.json"
    save_checkpoint(m, path)
    back = load_checkpoint(path, VOCAB)
    for name, t in m.params.items():
        assert back.params[name].data.tobytes() == t.data.tobytes()
    a = predict_boxes(m, encode(m, GRAPH)).data
    b = predict_boxes(back, encode(back, GRAPH)).data
    assert a.tobytes() == b.tobytes()


def test_checkpoint_vocab_mismatch(tmp_path):
    path = tmp_path / "m.json"
    save_checkpoint(model(), path)
    with pytest.raises(ValueError, match="hash"):
        load_checkpoint(path, Vocab(("man",), ("riding",)))
