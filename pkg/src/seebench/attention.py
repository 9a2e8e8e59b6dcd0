"""Attention concentration vs dispersal for probed tokens.

Spread is the normalized spatial entropy of a token's cross-attention map:
0 for all mass in one cell, 1 for mass spread uniformly over the grid.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import _accel


class DegenerateMapError(ValueError):
    """Attention grid with no positive mass."""


@dataclass(frozen=True)
class AttentionMap:
    token: str
    grid: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def to_wire(self) -> dict:
        h, w = self.grid.shape
        return {"h": int(h), "w": int(w), "data": [float(x) for x in self.grid.ravel()]}


def normalize(raw, token: str = "") -> AttentionMap:
    """Scale a non-negative grid to unit mass."""
    g = np.array(raw, dtype=np.float64)
    if g.ndim != 2 or min(g.shape) < 1:
        raise ValueError(f"attention grid must be 2-D and non-empty, got shape {g.shape}")
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ValueError("attention grid entries must be finite and non-negative")
    total = g.sum()
    if total <= 0:
        raise DegenerateMapError(f"attention grid for {token!r} has no positive mass")
    g = g / total
    g.setflags(write=False)
    return AttentionMap(token, g)


def spread(amap: AttentionMap) -> float:
    """Normalized entropy of the map; a 1x1 grid has spread 0."""
    return float(_accel.spread_rows(amap.grid.reshape(1, -1))[0])


def spread_batch(maps: Sequence[AttentionMap]) -> np.ndarray:
    """Spread of many same-shaped maps in one kernel call."""
    if not maps:
        return np.zeros(0)
    shapes = {m.grid.shape for m in maps}
    if len(shapes) != 1:
        return np.array([spread(m) for m in maps])
    return _accel.spread_rows(np.stack([m.grid.ravel() for m in maps]))


def pool(grids: Sequence, token: str = "") -> AttentionMap:
    """Mean-pool per-layer / per-timestep grids, then normalize."""
    arr = [np.asarray(g, dtype=np.float64) for g in grids]
    if not arr:
        raise ValueError("nothing to pool")
    return normalize(np.mean(np.stack(arr), axis=0), token)


def from_wire(token: str, payload: Mapping | Sequence) -> AttentionMap:
    """Decode a wire grid ``{"h", "w", "data"}`` (row-major) or a list of them."""
    if isinstance(payload, Mapping):
        h, w, data = int(payload["h"]), int(payload["w"]), payload["data"]
        if h < 1 or w < 1 or len(data) != h * w:
            raise ValueError(f"attention grid for {token!r}: header {h}x{w} does not match {len(data)} values")
        return normalize(np.asarray(data, dtype=np.float64).reshape(h, w), token)
    grids = [from_wire(token, p).grid for p in payload]
    return pool(grids, token)


def phrase_map(maps: Mapping[str, AttentionMap], phrase: str) -> AttentionMap | None:
    """Average of the normalized maps of the phrase's tokens that have maps."""
    found = [maps[t].grid for t in phrase.split() if t in maps]
    if not found:
        return None
    return pool(found, phrase)


@dataclass(frozen=True)
class SpreadCorrelation:
    r: float | None
    points: tuple[tuple[float, float], ...]
    labels: tuple[str, ...] = ()

    @property
    def defined(self) -> bool:
        return self.r is not None


def correlate_spread_with_accuracy(
    points: Sequence[tuple[float, float]], labels: Sequence[str] = ()
) -> SpreadCorrelation:
    """Pearson correlation between target accuracy and mean spread.

    ``r`` is ``None`` when either coordinate has zero variance.
    """
    if len(points) < 3:
        raise ValueError("need at least 3 points to correlate")
    xy = np.asarray(points, dtype=np.float64)
    x, y = xy[:, 0] - xy[:, 0].mean(), xy[:, 1] - xy[:, 1].mean()
    sxx, syy = float(x @ x), float(y @ y)
    pts = tuple((float(a), float(b)) for a, b in xy)
    if sxx == 0.0 or syy == 0.0:
        return SpreadCorrelation(None, pts, tuple(labels))
    r = float(x @ y) / math.sqrt(sxx * syy)
    return SpreadCorrelation(max(-1.0, min(1.0, r)), pts, tuple(labels))
