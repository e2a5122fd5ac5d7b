"""Text embeddings and cosine similarity used to match node-finding hints to nodes."""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

_TOKEN = re.compile(r"[^\W_]+")

DEFAULT_DIM = 4096


class EmbeddingError(RuntimeError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs."""
    return _TOKEN.findall(text.lower())


def node_text(attributes: Mapping[str, str]) -> str:
    """Canonical text of a node: ``key: value`` lines in key order."""
    return "\n".join(f"{k}: {attributes[k]}" for k in sorted(attributes))


@dataclass(frozen=True)
class SimilarityConfig:
    theta: float = 0.5
    top_k: int | None = 5  # None means unlimited
    provider: str = "hashed"

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [-1, 1], got {self.theta}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def token_bucket(token: str, dim: int = DEFAULT_DIM) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


class HashedTokenEmbedder:
    """Deterministic bag-of-tokens vector, hashed into ``dim`` buckets and L2-normalised."""

    def __init__(self, dim: int = DEFAULT_DIM, cache_size: int = 65536):
        self.dim = dim
        self._embed = lru_cache(maxsize=cache_size)(self._compute)

    def _compute(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for tok in tokenize(text):
            vec[token_bucket(tok, self.dim)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        vec.setflags(write=False)
        return vec

    def embed(self, text: str) -> np.ndarray:
        return self._embed(text)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._embed(t) for t in texts]


class HttpEmbedder:
    """Client for an embedding service speaking ``{"texts": [...]}`` -> ``{"vectors": [[...]]}``."""

    def __init__(
        self,
        endpoint: str,
        token: str | None = None,
        dim: int | None = None,
        max_in_flight: int = 4,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.dim = dim
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        with self._slots:
            try:
                resp = self._client.post(self.endpoint, json={"texts": list(texts)}, headers=self._headers)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
            except httpx.HTTPStatusError as exc:
                raise EmbeddingError(
                    f"embedding provider {self.endpoint} returned HTTP {exc.response.status_code}"
                ) from exc
            except httpx.HTTPError as exc:
                raise EmbeddingError(f"embedding provider {self.endpoint} unreachable: {exc}") from exc
            except (KeyError, TypeError, ValueError) as exc:
                raise EmbeddingError(f"embedding provider {self.endpoint} sent a malformed body: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(f"embedding provider returned {len(vectors)} vectors for {len(texts)} texts")
        out = [np.asarray(v, dtype=float) for v in vectors]
        with self._lock:
            for v in out:
                if self.dim is None:
                    self.dim = len(v)
                if v.shape != (self.dim,) or not np.all(np.isfinite(v)):
                    raise EmbeddingError(f"embedding provider returned a vector of shape {v.shape}, expected ({self.dim},)")
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either side is the zero vector."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    # symmetric by construction: both products commute
    value = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, value))


_DEFAULT = HashedTokenEmbedder()


def default_embedder() -> HashedTokenEmbedder:
    return _DEFAULT


def embed(text: str, embedder: Embedder | None = None) -> np.ndarray:
    return (embedder or _DEFAULT).embed(text)
