"""Frozen pre-trained word embeddings with O(1) token lookup.

The embedding matrix is the fixed input of every model in this package:
it is loaded once, never written to, and shared read-only by training,
expansion and projection code.
"""
from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)


class EmbeddingParseError(ValueError):
    """Raised when an embedding file violates the expected format."""


class EmbeddingMatrix:
    """Immutable dense embedding matrix with a vocabulary index.

    Vectors are stored column-wise: ``values`` has shape ``(dim, len(vocab))``
    and ``values[:, index[token]]`` is the vector of ``token``. The backing
    array is marked non-writeable, so lookups can safely hand out views.
    """

    def __init__(self, vocab: Iterable[str], values: np.ndarray):
        vocab = list(vocab)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be a 2-d (dim x vocab) array")
        if values.shape[1] != len(vocab):
            raise ValueError(
                f"vocab size {len(vocab)} does not match {values.shape[1]} columns"
            )
        if len(set(vocab)) != len(vocab):
            raise ValueError("vocabulary contains duplicate tokens")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding values must all be finite")
        values.setflags(write=False)
        self._vocab = tuple(vocab)
        self._values = values
        self._index = {tok: i for i, tok in enumerate(self._vocab)}

    @property
    def dim(self) -> int:
        return self._values.shape[0]

    @property
    def vocab(self) -> tuple[str, ...]:
        return self._vocab

    @property
    def values(self) -> np.ndarray:
        """The (dim x |V|) matrix; read-only."""
        return self._values

    @property
    def index(self) -> dict:
        return dict(self._index)

    def __len__(self) -> int:
        return len(self._vocab)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def position(self, token: str) -> int:
        """Column position of ``token``; raises ``KeyError`` when unknown."""
        return self._index[token]

    def column(self, i: int) -> np.ndarray:
        """The i-th embedding column as a read-only view."""
        return self._values[:, i]

    def columns(self, positions: Iterable[int]) -> np.ndarray:
        """Stack the requested columns as rows of a fresh (n x dim) array."""
        idx = np.fromiter(positions, dtype=np.intp)
        return self._values[:, idx].T.copy()

    def checksum(self) -> str:
        """SHA-256 over vocabulary and raw matrix bytes (frozen-E witness)."""
        h = hashlib.sha256()
        h.update("\n".join(self._vocab).encode("utf-8"))
        h.update(self._values.tobytes())
        return h.hexdigest()


def lookup(embeddings: EmbeddingMatrix, token: str) -> Optional[np.ndarray]:
    """Return the stored vector for ``token`` or ``None`` when unknown.

    The returned array is a read-only view; callers cannot mutate the matrix.
    """
    i = embeddings._index.get(token)
    if i is None:
        return None
    return embeddings.column(i)


@dataclass(frozen=True)
class CoverageReport:
    """How much of a lexicon the embedding vocabulary covers."""

    total_lexicon_words: int
    covered: int
    missing: tuple[str, ...]

    @property
    def coverage(self) -> float:
        if self.total_lexicon_words == 0:
            return 1.0
        return self.covered / self.total_lexicon_words


def coverage(embeddings: EmbeddingMatrix, lexicon) -> CoverageReport:
    """Report which lexicon words lack an embedding, in lexicon order.

    ``lexicon`` is anything with an ``entries`` mapping (see
    :mod:`lexspace.lexicons`) or a plain iterable of tokens.
    """
    tokens = list(getattr(lexicon, "entries", lexicon))
    missing = [t for t in tokens if t not in embeddings]
    return CoverageReport(
        total_lexicon_words=len(tokens),
        covered=len(tokens) - len(missing),
        missing=tuple(missing),
    )


def load_embeddings(path, format: str = "text") -> EmbeddingMatrix:
    """Load an embedding file.

    Text format: a header line ``"<vocab_size> <dim>"`` followed by one line
    per token, ``token v1 ... v_dim``. Binary format: the same ASCII header
    line, then per token the UTF-8 token bytes, a single space, and ``dim``
    little-endian float32 values.

    Duplicate tokens keep the first occurrence and log a warning. Malformed
    rows raise :class:`EmbeddingParseError` naming the offending line.
    """
    path = Path(path)
    if format == "text":
        return _load_text(path)
    if format == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown embedding format {format!r}")


def _parse_header(line: str, path: Path) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise EmbeddingParseError(
            f"{path}: line 1: header must be '<vocab_size> <dim>', got {line!r}"
        )
    try:
        n, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise EmbeddingParseError(
            f"{path}: line 1: non-integer header fields in {line!r}"
        ) from None
    if n < 0 or dim <= 0:
        raise EmbeddingParseError(f"{path}: line 1: invalid sizes {n} x {dim}")
    return n, dim


def _load_text(path: Path) -> EmbeddingMatrix:
    vocab: list[str] = []
    rows: list[np.ndarray] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise EmbeddingParseError(f"{path}: empty file")
        n, dim = _parse_header(header.rstrip("\r\n"), path)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise EmbeddingParseError(
                    f"{path}: line {lineno}: expected {dim} values for "
                    f"token {parts[0] if parts else ''!r}, got {len(parts) - 1}"
                )
            token = parts[0]
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise EmbeddingParseError(
                    f"{path}: line {lineno}: non-numeric value in vector"
                ) from None
            if not np.all(np.isfinite(vec)):
                raise EmbeddingParseError(
                    f"{path}: line {lineno}: non-finite value in vector"
                )
            if token in seen:
                logger.warning(
                    "%s: line %d: duplicate token %r, keeping first occurrence",
                    path, lineno, token,
                )
                continue
            seen[token] = len(vocab)
            vocab.append(token)
            rows.append(vec)
    if len(vocab) != n:
        logger.warning(
            "%s: header declared %d tokens but %d unique rows were read",
            path, n, len(vocab),
        )
    if not vocab:
        raise EmbeddingParseError(f"{path}: no embedding rows")
    return EmbeddingMatrix(vocab, np.stack(rows, axis=1))


def _load_binary(path: Path) -> EmbeddingMatrix:
    vocab: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    with open(path, "rb") as fh:
        header = bytearray()
        while True:
            b = fh.read(1)
            if not b:
                raise EmbeddingParseError(f"{path}: missing header line")
            if b == b"\n":
                break
            header += b
        n, dim = _parse_header(header.decode("utf-8").strip(), path)
        vec_bytes = 4 * dim
        for entry in range(n):
            token_buf = bytearray()
            while True:
                b = fh.read(1)
                if not b:
                    raise EmbeddingParseError(
                        f"{path}: truncated file at entry {entry + 1}"
                    )
                if b == b" ":
                    break
                token_buf += b
            raw = fh.read(vec_bytes)
            if len(raw) != vec_bytes:
                raise EmbeddingParseError(
                    f"{path}: truncated vector at entry {entry + 1}"
                )
            token = token_buf.decode("utf-8").lstrip("\n")
            vec = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            if not np.all(np.isfinite(vec)):
                raise EmbeddingParseError(
                    f"{path}: non-finite value at entry {entry + 1}"
                )
            if token in seen:
                logger.warning(
                    "%s: entry %d: duplicate token %r, keeping first occurrence",
                    path, entry + 1, token,
                )
                continue
            seen.add(token)
            vocab.append(token)
            rows.append(vec)
    if not vocab:
        raise EmbeddingParseError(f"{path}: no embedding entries")
    return EmbeddingMatrix(vocab, np.stack(rows, axis=1))


def write_embeddings(embeddings: EmbeddingMatrix, path, format: str = "text") -> None:
    """Write an embedding file in the format accepted by :func:`load_embeddings`.

    Text values use 9 significant digits, which round-trips well below the
    1e-6 relative tolerance the loader guarantees.
    """
    path = Path(path)
    if format == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(embeddings)} {embeddings.dim}\n")
            for i, token in enumerate(embeddings.vocab):
                vals = " ".join(f"{v:.9g}" for v in embeddings.column(i))
                fh.write(f"{token} {vals}\n")
    elif format == "binary":
        with open(path, "wb") as fh:
            fh.write(f"{len(embeddings)} {embeddings.dim}\n".encode("utf-8"))
            for i, token in enumerate(embeddings.vocab):
                fh.write(token.encode("utf-8") + b" ")
                fh.write(
                    struct.pack(f"<{embeddings.dim}f", *embeddings.column(i))
                )
    else:
        raise ValueError(f"unknown embedding format {format!r}")
