import numpy as np
import pytest

from coherank import _kernels
from coherank.autodiff import Tape, grad_check, rowwise_dot, sum_squares, tensor
from coherank.encoder import (
    EncoderParams,
    TokenizerConfig,
    encode,
    encode_bags,
    hash_token,
    init_params,
    load_params,
    params_digest,
    params_from_bytes,
    params_to_bytes,
    save_params,
    text_feature_indices,
    tokenize,
)
from coherank.errors import DegenerateRowError, EmptyTextError, FormatError, InvalidTokenError


def test_tokenize_examples():
    assert tokenize("What is DNA?") == ["what", "is", "dna"]
    assert tokenize("") == []
    assert tokenize("C-3PO unit") == ["c", "3po", "unit"]


def test_tokenize_min_length_filter():
    cfg = TokenizerConfig(min_token_len=3)
    assert tokenize("a bb ccc dddd", cfg) == ["ccc", "dddd"]


def test_tokenize_case_preservation_flag():
    cfg = TokenizerConfig(lowercase=False)
    assert tokenize("Big DNA", cfg) == ["Big", "DNA"]


def test_hash_token_deterministic():
    assert hash_token("apple", 1024) == hash_token("apple", 1024)


def test_hash_token_reference_value():
    # FNV-1a("a") is a published constant
    assert _kernels.fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert hash_token("a", 64) == 0xAF63DC4C8601EC8C % 64


def test_hash_token_empty_rejected():
    with pytest.raises(InvalidTokenError):
        hash_token("", 16)


def test_hash_distribution_balanced(rng):
    f = 1024
    tokens = ["".join(chr(97 + int(c)) for c in rng.integers(0, 26, size=8))
              for _ in range(10_000)]
    counts = np.bincount([hash_token(t, f) for t in tokens], minlength=f)
    assert counts.max() < 4 * counts.mean()


def test_text_feature_indices_multiplicity():
    idx = text_feature_indices("dog dog cat", 512)
    assert len(idx) == 3
    assert idx[0] == idx[1]


def test_text_feature_indices_empty_text():
    with pytest.raises(EmptyTextError):
        text_feature_indices("...!!!", 512)


def test_init_params_seeded_and_bounded():
    p1 = init_params(128, 16, seed=5)
    p2 = init_params(128, 16, seed=5)
    np.testing.assert_array_equal(p1.matrix, p2.matrix)
    assert np.abs(p1.matrix).max() <= 1 / np.sqrt(16)
    assert init_params(128, 16, seed=6).matrix[0, 0] != p1.matrix[0, 0]


def test_encode_unit_norm_rows():
    params = init_params(256, 24, seed=0)
    out = encode(["one two three", "four five", "six"], params)
    norms = np.linalg.norm(out.values, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)


def test_encode_identical_texts_identical_rows():
    params = init_params(256, 24, seed=0)
    out = encode(["red apple pie", "red apple pie"], params).values
    np.testing.assert_array_equal(out[0], out[1])


def test_encode_bag_order_invariance():
    params = init_params(256, 24, seed=1)
    a = encode(["alpha beta"], params).values
    b = encode(["beta alpha"], params).values
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_encode_single_token_row():
    params = init_params(256, 8, seed=2)
    row = params.matrix[hash_token("zebra", 256)]
    out = encode(["zebra"], params).values[0]
    np.testing.assert_allclose(out, row / np.linalg.norm(row), atol=1e-12)


def test_encode_shared_weights_for_queries_and_docs():
    params = init_params(256, 8, seed=3)
    q = encode(["shared words here"], params).values
    d = encode(["shared words here"], params).values
    np.testing.assert_array_equal(q, d)


def test_encode_zero_parameters_degenerate():
    params = EncoderParams(64, 4, 0, np.zeros((64, 4)))
    with pytest.raises(DegenerateRowError):
        encode(["anything"], params)


def test_encode_gradient_through_cosine(rng):
    f, d = 50, 8
    q_bag = text_feature_indices("apple pie", f)
    d_bag = text_feature_indices("apple tart dessert", f)

    def cos(w):
        q = encode_bags([q_bag], w)
        doc = encode_bags([d_bag], w)
        return sum_squares(rowwise_dot(q, doc))

    report = grad_check(cos, [rng.uniform(-0.5, 0.5, size=(f, d))], h=1e-5, tol_rel=1e-4)
    assert report.passed, report.max_rel_err


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    params = init_params(64, 8, seed=9)
    path = tmp_path / "enc.bin"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.feature_count == 64 and loaded.dim == 8 and loaded.seed == 9
    np.testing.assert_array_equal(loaded.matrix, params.matrix)
    assert params_to_bytes(loaded) == params_to_bytes(params)
    assert params_digest(loaded) == params_digest(params)


def test_checkpoint_bad_magic():
    with pytest.raises(FormatError):
        params_from_bytes(b"NOTMAGIC" + b"\x00" * 64)


def test_checkpoint_truncated():
    blob = params_to_bytes(init_params(8, 4, seed=1))
    with pytest.raises(FormatError):
        params_from_bytes(blob[:-8])
