"""Backend parity: the compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from coherank._kernels import _pykernels

try:
    from coherank._kernels import _cykernels
except ImportError:
    _cykernels = None

BACKENDS = [_pykernels] + ([_cykernels] if _cykernels is not None else [])


def _reference_fnv1a(data: bytes) -> int:
    # independent re-statement of the FNV-1a recurrence
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) % 2**64
    return h


@pytest.mark.parametrize("impl", BACKENDS)
def test_fnv1a_against_reference(impl):
    for token in (b"a", b"hello", b"", b"C-3PO", "日本語".encode("utf-8")):
        assert impl.fnv1a64(token) == _reference_fnv1a(token)


@pytest.mark.parametrize("impl", BACKENDS)
def test_hash_buckets_matches_scalar_hash(impl):
    tokens = [f"tok{i}".encode() for i in range(200)]
    got = impl.hash_buckets(tokens, 97)
    want = [impl.fnv1a64(t) % 97 for t in tokens]
    assert got.tolist() == want


def test_backends_agree_on_hashing():
    if _cykernels is None:
        pytest.skip("compiled kernels unavailable")
    tokens = [f"w{i}x".encode() for i in range(500)]
    assert _pykernels.hash_buckets(tokens, 1024).tolist() == \
        _cykernels.hash_buckets(tokens, 1024).tolist()


@pytest.mark.parametrize("impl", BACKENDS)
def test_bag_mean_forward_small(impl):
    w = np.arange(12, dtype=np.float64).reshape(4, 3)
    indices = np.array([0, 1, 2, 2, 3], dtype=np.int64)
    offsets = np.array([0, 2, 5], dtype=np.int64)
    out = impl.bag_mean_forward(w, indices, offsets)
    np.testing.assert_allclose(out[0], (w[0] + w[1]) / 2)
    np.testing.assert_allclose(out[1], (w[2] + w[2] + w[3]) / 3)


@pytest.mark.parametrize("impl", BACKENDS)
def test_bag_mean_forward_rejects_empty_group(impl):
    w = np.ones((2, 2))
    with pytest.raises(ValueError):
        impl.bag_mean_forward(w, np.array([0], dtype=np.int64),
                              np.array([0, 1, 1], dtype=np.int64))


@pytest.mark.parametrize("impl", BACKENDS)
def test_bag_mean_backward_scatters_with_multiplicity(impl):
    grad = np.array([[3.0, 6.0]])
    indices = np.array([1, 1, 2], dtype=np.int64)
    offsets = np.array([0, 3], dtype=np.int64)
    out = impl.bag_mean_backward(grad, indices, offsets, 4)
    np.testing.assert_allclose(out[1], [2.0, 4.0])  # two mentions of row 1
    np.testing.assert_allclose(out[2], [1.0, 2.0])
    np.testing.assert_allclose(out[0], [0.0, 0.0])


def test_bag_kernels_backend_parity(rng):
    if _cykernels is None:
        pytest.skip("compiled kernels unavailable")
    w = rng.normal(size=(50, 8))
    lengths = rng.integers(1, 7, size=30)
    offsets = np.zeros(31, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    indices = rng.integers(0, 50, size=int(offsets[-1])).astype(np.int64)
    f_py = _pykernels.bag_mean_forward(w, indices, offsets)
    f_cy = _cykernels.bag_mean_forward(w, indices, offsets)
    np.testing.assert_allclose(f_py, f_cy, rtol=1e-13, atol=1e-15)
    g = rng.normal(size=f_py.shape)
    b_py = _pykernels.bag_mean_backward(g, indices, offsets, 50)
    b_cy = _cykernels.bag_mean_backward(g, indices, offsets, 50)
    np.testing.assert_allclose(b_py, b_cy, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("impl", BACKENDS)
def test_topk_orders_by_score_then_index(impl):
    scores = np.array([0.5, 0.9, 0.5, 0.1, 0.9])
    assert impl.topk_indices(scores, 3).tolist() == [1, 4, 0]
    assert impl.topk_indices(scores, 10).tolist() == [1, 4, 0, 2, 3]
    assert impl.topk_indices(scores, 0).tolist() == []


def test_topk_backend_parity_with_ties(rng):
    if _cykernels is None:
        pytest.skip("compiled kernels unavailable")
    for _ in range(50):
        m = int(rng.integers(1, 300))
        scores = np.round(rng.normal(size=m), 1)  # quantized: plenty of ties
        k = int(rng.integers(1, m + 1))
        assert _pykernels.topk_indices(scores, k).tolist() == \
            _cykernels.topk_indices(scores, k).tolist()
