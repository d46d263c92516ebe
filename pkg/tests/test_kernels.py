import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sglayout import _kernels
from sglayout._kernels import _fallback
from oracles import raster_iou

native = pytest.importorskip("sglayout._kernels._ckernels", reason="compiled kernels not built")

boxes = arrays(np.float64, st.tuples(st.integers(0, 20), st.just(4)),
               elements=st.floats(0.01, 1.0, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(boxes, st.data())
def test_relative_geometry_bit_equal(bj, data):
    bk = data.draw(arrays(np.float64, bj.shape, elements=st.floats(0.01, 1.0)))
    for eps in (0.0, 1e-6):
        s1, d1 = native.relative_geometry(bj, bk, eps)
        s2, d2 = _fallback.relative_geometry(bj, bk, eps)
        assert s1.tobytes() == s2.tobytes()
        assert d1.tobytes() == d2.tobytes()


@settings(max_examples=200, deadline=None)
@given(boxes, st.data())
def test_box_iou_bit_equal(a, data):
    b = data.draw(arrays(np.float64, a.shape, elements=st.floats(0.0, 1.0)))
    assert native.box_iou(a, b).tobytes() == _fallback.box_iou(a, b).tobytes()


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 30), st.integers(1, 6), st.integers(1, 5), st.data())
def test_segment_sum_bit_equal(rows, cols, n, data):
    values = data.draw(arrays(np.float64, (rows, cols), elements=st.floats(-10, 10)))
    index = data.draw(arrays(np.int64, (rows,), elements=st.integers(0, n - 1)))
    assert native.segment_sum(values, index, n).tobytes() == _fallback.segment_sum(values, index, n).tobytes()


def test_segment_sum_rejects_out_of_range(backend):
    with pytest.raises((IndexError, ValueError)):
        _kernels.segment_sum(np.ones((2, 2)), np.array([0, 5]), 2)


def test_iou_example(backend):
    got = _kernels.box_iou(np.array([[0.25, 0.5, 0.5, 0.5]]), np.array([[0.5, 0.5, 0.5, 0.5]]))
    assert got[0] == pytest.approx(1 / 3, abs=1e-12)


def test_iou_against_raster_oracle(backend):
    rng = np.random.default_rng(4)
    a = np.column_stack([rng.uniform(0.3, 0.7, 10), rng.uniform(0.3, 0.7, 10), rng.uniform(0.1, 0.5, (10, 2))])
    b = np.column_stack([rng.uniform(0.3, 0.7, 10), rng.uniform(0.3, 0.7, 10), rng.uniform(0.1, 0.5, (10, 2))])
    got = _kernels.box_iou(a, b)
    for i in range(10):
        # grid of 400 cells per side: area error is O(perimeter / 400)
        assert got[i] == pytest.approx(raster_iou(a[i], b[i]), abs=0.02)


def test_use_backend_switches():
    previous = _kernels.backend
    try:
        _kernels.use_backend("python")
        assert _kernels.segment_sum is _fallback.segment_sum
        with pytest.raises(ValueError):
            _kernels.use_backend("fortran")
    finally:
        _kernels.use_backend(previous)
