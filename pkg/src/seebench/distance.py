"""Concept distances: attribute edit distance and text-embedding similarity."""

from __future__ import annotations

import hashlib
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from . import _accel
from .vocab import DEFAULT_VOCAB, SLOTS, AttributeVocabulary

EDIT_DISTANCE = "edit_distance"
COSINE_SIMILARITY = "cosine_similarity"
DEFAULT_COSINE_BIN_WIDTH = 0.05
EDIT_DISTANCE_EDGES = (0, 1, 2, 3, 4)


class CrossObjectDistanceError(ValueError):
    """Edit distance requested between concepts of different objects."""


class EmbedderError(RuntimeError):
    pass


class _HasAttributes(Protocol):
    object_id: str
    attributes: Mapping[str, str]


def attribute_edit_distance(a: _HasAttributes, b: _HasAttributes) -> int:
    """Minimum slot additions, deletions and substitutions turning a into b.

    Slots are independent, so the minimum is the number of slots on which
    the two attribute maps disagree.
    """
    if a.object_id != b.object_id:
        raise CrossObjectDistanceError(
            f"no edit distance between {a.object_id!r} and {b.object_id!r}; "
            "use embedding_similarity for cross-object pairs"
        )
    return sum(a.attributes.get(s) != b.attributes.get(s) for s in SLOTS)


def encode_attributes(
    maps: Iterable[Mapping[str, str]], vocab: AttributeVocabulary = DEFAULT_VOCAB
) -> np.ndarray:
    rows = []
    for m in maps:
        rows.append([vocab.values(s).index(m[s]) if s in m else -1 for s in SLOTS])
    return np.asarray(rows, dtype=np.int8).reshape(-1, len(SLOTS))


def edit_distance_matrix(
    a: Sequence[Mapping[str, str]], b: Sequence[Mapping[str, str]], vocab: AttributeVocabulary = DEFAULT_VOCAB
) -> np.ndarray:
    """Pairwise edit distances between two lists of attribute maps (same object)."""
    return _accel.edit_distance_matrix(encode_attributes(a, vocab), encode_attributes(b, vocab))


@runtime_checkable
class TextEmbedder(Protocol):
    model_id: str

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic bag-of-words embedder for offline runs.

    Each token maps to a fixed pseudo-random unit vector derived from its
    hash; a phrase embeds to the sum of its token vectors. Phrases that
    share words are therefore more similar than unrelated ones.
    """

    def __init__(self, dim: int = 256, salt: str = "seebench"):
        self.dim = dim
        self.salt = salt
        self.model_id = f"hash-bow-{dim}"
        self._cache: dict[str, np.ndarray] = {}

    def _token(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            seed = int.from_bytes(hashlib.blake2b(f"{self.salt}:{token}".encode(), digest_size=8).digest(), "little")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        if not tokens:
            raise EmbedderError("cannot embed an empty phrase")
        return np.sum([self._token(t) for t in tokens], axis=0)


def _unit(vec: np.ndarray, phrase: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64).ravel()
    norm = float(np.linalg.norm(v))
    if not math.isfinite(norm) or norm == 0.0:
        raise EmbedderError(f"degenerate embedding for {phrase!r}")
    return v / norm


def embed_unit(phrase: str, embedder: TextEmbedder) -> np.ndarray:
    if not phrase.strip():
        raise ValueError("empty phrase")
    try:
        vec = embedder.embed(phrase)
    except EmbedderError:
        raise
    except Exception as exc:
        raise EmbedderError(f"{embedder.model_id} failed on {phrase!r}: {exc}") from exc
    return _unit(vec, phrase)


def embedding_similarity(c: str, e: str, embedder: TextEmbedder) -> float:
    """Cosine similarity of the L2-normalized embeddings of two phrases."""
    u, v = embed_unit(c, embedder), embed_unit(e, embedder)
    # Clamp rounding; identical vectors give exactly 1 after the clamp.
    return float(min(1.0, max(-1.0, float(u @ v))))


def similarity_to(target: str, phrases: Sequence[str], embedder: TextEmbedder) -> np.ndarray:
    """Cosine similarity of every phrase in ``phrases`` to ``target``."""
    t = embed_unit(target, embedder)
    mat = np.stack([embed_unit(p, embedder) for p in phrases]) if phrases else np.zeros((0, t.size))
    return np.clip(mat @ t, -1.0, 1.0)


@dataclass
class DistanceBin:
    kind: str
    lower: float
    upper: float
    members: list[str] = field(default_factory=list)
    clamped: list[str] = field(default_factory=list)

    @property
    def label(self) -> str:
        if self.kind == EDIT_DISTANCE and float(self.upper) - float(self.lower) == 1:
            return str(int(self.lower))
        return f"[{self.lower:.2f},{self.upper:.2f})"


def bin_concepts(
    pairs: Sequence[tuple[str, float]], edges: Sequence[float], kind: str = EDIT_DISTANCE
) -> list[DistanceBin]:
    """Assign each (concept id, value) to the half-open bin that holds it.

    Values outside the outermost edges land in the nearest end bin and are
    listed in that bin's ``clamped``.
    """
    edges = [float(x) for x in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing with at least two entries")
    bins = [DistanceBin(kind, lo, hi) for lo, hi in zip(edges, edges[1:])]
    inner = np.asarray(edges[1:-1])
    for cid, value in pairs:
        v = float(value)
        idx = int(np.searchsorted(inner, v, side="right"))
        bins[idx].members.append(cid)
        if v < edges[0] or v >= edges[-1]:
            bins[idx].clamped.append(cid)
    return bins


def cosine_edges(values: Iterable[float], width: float = DEFAULT_COSINE_BIN_WIDTH) -> list[float]:
    """Bin edges of fixed ``width`` aligned to multiples of width, covering all values."""
    vals = list(values)
    if width <= 0:
        raise ValueError("bin width must be positive")
    if not vals:
        return [0.0, width]
    vmin, vmax = min(vals), max(vals)
    lo = math.floor(vmin / width)
    while round(lo * width, 10) > vmin:
        lo -= 1
    hi = math.floor(vmax / width) + 1
    while round(hi * width, 10) <= vmax:
        hi += 1
    return [round(k * width, 10) for k in range(lo, hi + 1)]
