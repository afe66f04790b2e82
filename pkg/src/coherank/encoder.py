"""Hashed bag-of-tokens text encoder shared by queries and documents.

A text is tokenized into lowercased alphanumeric runs, each token is FNV-1a
hashed into one of F feature buckets, and the embedding is the L2-normalized
mean of the corresponding rows of an F x D parameter matrix. Queries and
documents share the same parameters.
"""

import hashlib
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .autodiff import Tensor, rowwise_l2_normalize, rowwise_mean_groups, tensor
from .errors import EmptyTextError, FormatError, InvalidTokenError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

CHECKPOINT_MAGIC = b"COHENC01"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sIQQq")


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    min_token_len: int = 1


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER):
    """Alphanumeric runs of the text, lowercased by default, in order."""
    if config.lowercase:
        text = text.lower()
    tokens = _TOKEN_RE.findall(text)
    if config.min_token_len > 1:
        tokens = [t for t in tokens if len(t) >= config.min_token_len]
    return tokens


def hash_token(token: str, feature_count: int) -> int:
    """FNV-1a bucket of a token; bit-exact across implementations."""
    if not token:
        raise InvalidTokenError("cannot hash an empty token")
    return _kernels.fnv1a64(token.encode("utf-8")) % feature_count


def text_feature_indices(text: str, feature_count: int,
                         config: TokenizerConfig = DEFAULT_TOKENIZER) -> np.ndarray:
    """Feature bucket per token (multiplicity kept); EmptyTextError if no tokens."""
    tokens = tokenize(text, config)
    if not tokens:
        raise EmptyTextError(f"text produced no tokens: {text!r}")
    return _kernels.hash_buckets([t.encode("utf-8") for t in tokens], feature_count)


@dataclass
class EncoderParams:
    feature_count: int
    dim: int
    seed: int
    matrix: np.ndarray = field(repr=False)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.feature_count, self.dim, self.seed, self.matrix.copy())


def init_params(feature_count: int = 1024, dim: int = 64, seed: int = 0) -> EncoderParams:
    """Seeded uniform(-1/sqrt(dim), 1/sqrt(dim)) initialization."""
    if feature_count < 1 or dim < 1:
        raise ValueError("feature_count and dim must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    bound = 1.0 / np.sqrt(dim)
    matrix = rng.uniform(-bound, bound, size=(feature_count, dim))
    return EncoderParams(feature_count, dim, seed, matrix)


def flatten_bags(bags):
    """Concatenate per-text index arrays into (indices, offsets) for the bag op."""
    offsets = np.zeros(len(bags) + 1, dtype=np.int64)
    np.cumsum([len(b) for b in bags], out=offsets[1:])
    indices = np.concatenate(bags) if bags else np.empty(0, dtype=np.int64)
    return indices.astype(np.int64, copy=False), offsets


def encode_bags(bags, weights: Tensor) -> Tensor:
    """Unit-norm embedding rows for pre-hashed texts; differentiable in weights."""
    indices, offsets = flatten_bags(bags)
    return rowwise_l2_normalize(rowwise_mean_groups(weights, indices, offsets))


def encode(texts, params: EncoderParams,
           config: TokenizerConfig = DEFAULT_TOKENIZER) -> Tensor:
    """Unit-norm embeddings, one row per text (forward-only convenience)."""
    bags = [text_feature_indices(t, params.feature_count, config) for t in texts]
    return encode_bags(bags, tensor(params.matrix))


# ---------------------------------------------------------------------------
# checkpoint serialization (bit-exact)


def params_to_bytes(params: EncoderParams) -> bytes:
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                          params.feature_count, params.dim, params.seed)
    body = np.ascontiguousarray(params.matrix, dtype="<f8").tobytes()
    return header + body


def params_from_bytes(blob: bytes) -> EncoderParams:
    if len(blob) < _HEADER.size:
        raise FormatError("checkpoint truncated")
    magic, version, feature_count, dim, seed = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    expected = _HEADER.size + feature_count * dim * 8
    if len(blob) != expected:
        raise FormatError(f"checkpoint size {len(blob)} != expected {expected}")
    matrix = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(feature_count, dim)
    return EncoderParams(int(feature_count), int(dim), int(seed),
                         matrix.astype(np.float64).copy())


def save_params(params: EncoderParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(params))


def load_params(path) -> EncoderParams:
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())


def params_digest(params: EncoderParams) -> str:
    """sha256 of the serialized checkpoint; used as index build metadata."""
    return hashlib.sha256(params_to_bytes(params)).hexdigest()
