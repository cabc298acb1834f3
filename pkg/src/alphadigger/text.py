"""Tokenization, vocabulary indexing, sequence-length statistics, and
pre-padding/pre-truncation against a pretrained embedding table."""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ConfigError, FormatError

PAD_INDEX = 0
UNK_INDEX = 1

TOKENIZERS = ("whitespace", "char")


def _is_cjk(ch: str) -> bool:
    return "一" <= ch <= "鿿" or "㐀" <= ch <= "䶿"


def tokenize(text: str, tokenizer: str = "whitespace") -> list[str]:
    """Strip Unicode punctuation, then segment.

    whitespace mode splits on whitespace but still breaks CJK runs into
    single characters; char mode splits every non-space character.
    """
    if tokenizer not in TOKENIZERS:
        raise ConfigError(f"unknown tokenizer {tokenizer!r}; choose from {TOKENIZERS}")
    cleaned = "".join(
        " " if unicodedata.category(ch).startswith("P") else ch for ch in text
    )
    tokens: list[str] = []
    for chunk in cleaned.split():
        if tokenizer == "char":
            tokens.extend(chunk)
            continue
        buf = []
        for ch in chunk:
            if _is_cjk(ch):
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    index: dict  # token -> index, indices >= 2
    size: int

    def encode_token(self, token: str) -> int:
        return self.index.get(token, UNK_INDEX)


@dataclass(frozen=True)
class EmbeddingTable:
    dimension: int
    matrix: np.ndarray  # (vocab size, dimension); row 0 is PAD (all zero)

    def __post_init__(self):
        if self.matrix.shape[1] != self.dimension:
            raise DataError("embedding matrix width != dimension")
        if np.any(self.matrix[PAD_INDEX] != 0.0):
            raise DataError("PAD row must be all-zero")


@dataclass(frozen=True)
class LengthStats:
    mean: float
    std: float
    max_tokens: int


def build_vocab(table_tokens: list[str]) -> Vocabulary:
    """Vocabulary over the embedding-table tokens; 0/1 reserved for PAD/UNK."""
    index = {}
    for i, tok in enumerate(table_tokens):
        if tok in index:
            raise FormatError(f"duplicate table token {tok!r}")
        index[tok] = i + 2
    return Vocabulary(index=index, size=len(table_tokens) + 2)


def encode(tokens: list[str], vocab: Vocabulary) -> list[int]:
    return [vocab.encode_token(t) for t in tokens]


def compute_max_tokens(lengths: list[int]) -> LengthStats:
    """max_tokens = round(mean + 2 * population std), floored at 1."""
    if not lengths:
        raise DataError("empty length list")
    arr = np.asarray(lengths, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())  # population std
    max_tokens = max(1, int(math.floor(mean + 2.0 * std + 0.5)))
    return LengthStats(mean=mean, std=std, max_tokens=max_tokens)


def coverage_fraction(lengths: list[int], max_tokens: int) -> float:
    if not lengths:
        raise DataError("empty length list")
    return sum(1 for n in lengths if n <= max_tokens) / len(lengths)


def pad_truncate_pre(seq: list[int], max_tokens: int) -> list[int]:
    """Front-pad with PAD zeros or keep the last max_tokens indices."""
    if max_tokens < 1:
        raise DataError(f"max_tokens must be >= 1, got {max_tokens}")
    if len(seq) >= max_tokens:
        return list(seq[len(seq) - max_tokens:])
    return [PAD_INDEX] * (max_tokens - len(seq)) + list(seq)


def load_embedding_file(path) -> tuple[EmbeddingTable, list[str]]:
    """word2vec text format: header "V D", then V lines "token v1 ... vD".

    PAD and UNK rows are synthesized: PAD all-zero, UNK the mean of all
    loaded vectors (zero when the file is empty).
    """
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        parts = header.split()
        if len(parts) != 2:
            raise FormatError(f"{path}: line 1: expected header 'V D'")
        try:
            n_vectors, dim = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise FormatError(f"{path}: line 1: non-integer header") from e
        if n_vectors < 0 or dim < 1:
            raise FormatError(f"{path}: line 1: invalid sizes {n_vectors} x {dim}")
        tokens: list[str] = []
        seen = set()
        vectors = np.zeros((n_vectors, dim))
        for i in range(n_vectors):
            lineno = i + 2
            line = f.readline()
            if not line:
                raise FormatError(f"{path}: line {lineno}: expected {n_vectors} vectors, file ended")
            fields = line.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise FormatError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(fields) - 1}")
            tok = fields[0]
            if tok in seen:
                raise FormatError(f"{path}: line {lineno}: duplicate token {tok!r}")
            seen.add(tok)
            tokens.append(tok)
            try:
                vectors[i] = [float(v) for v in fields[1:]]
            except ValueError as e:
                raise FormatError(f"{path}: line {lineno}: non-numeric entry") from e
    matrix = np.zeros((n_vectors + 2, dim))
    matrix[UNK_INDEX] = vectors.mean(axis=0) if n_vectors else 0.0
    matrix[2:] = vectors
    return EmbeddingTable(dimension=dim, matrix=matrix), tokens


def write_embedding_file(path, tokens: list[str], vectors: np.ndarray) -> None:
    """Inverse of load_embedding_file for fixtures and synthetic tables."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(tokens)} {vectors.shape[1]}\n")
        for tok, vec in zip(tokens, vectors):
            f.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True)
class TextPipeline:
    """Everything needed to turn raw text into a fixed-length index sequence."""
    vocab: Vocabulary
    max_tokens: int
    tokenizer: str = "whitespace"

    def encode_text(self, text: str) -> list[int]:
        seq = encode(tokenize(text, self.tokenizer), self.vocab)
        if not seq:
            seq = [UNK_INDEX]  # guard: all-PAD sequences are rejected downstream
        return pad_truncate_pre(seq, self.max_tokens)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return np.array([self.encode_text(t) for t in texts], dtype=np.int64)
