from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from seebench.attention import (
    AttentionMap,
    DegenerateMapError,
    correlate_spread_with_accuracy,
    from_wire,
    normalize,
    phrase_map,
    pool,
    spread,
    spread_batch,
)


def test_normalize_example():
    m = normalize([[2, 2], [0, 0]])
    np.testing.assert_allclose(m.grid, [[0.5, 0.5], [0, 0]])
    assert abs(m.grid.sum() - 1) < 1e-9


def test_normalize_idempotent():
    m = normalize([[0.25, 0.75]])
    np.testing.assert_array_equal(normalize(m.grid).grid, m.grid)


def test_normalize_errors():
    with pytest.raises(DegenerateMapError):
        normalize([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        normalize([[1, -1]])
    with pytest.raises(ValueError):
        normalize([1, 2, 3])
    with pytest.raises(ValueError):
        normalize([[np.nan, 1]])


def test_normalized_grid_is_read_only():
    m = normalize([[1, 2]])
    with pytest.raises(ValueError):
        m.grid[0, 0] = 5


@pytest.mark.parametrize("h,w", [(1, 2), (4, 4), (8, 8), (3, 5)])
def test_uniform_and_one_hot(h, w):
    assert spread(normalize(np.ones((h, w)))) == pytest.approx(1.0, abs=1e-9)
    g = np.zeros((h, w))
    g[h - 1, 0] = 3.0
    assert spread(normalize(g)) == 0.0


def test_half_mass_2x2():
    s = spread(normalize([[0.5, 0.5], [0, 0]]))
    assert abs(s - 0.5) < 1e-9
    assert abs(s - oracles.spread([[0.5, 0.5], [0, 0]])) < 1e-12


def test_single_cell_is_zero():
    assert spread(normalize([[7.0]])) == 0.0


grids = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
               elements=st.floats(0, 10, allow_nan=False)).filter(lambda g: g.sum() > 0)


@settings(max_examples=100, deadline=None)
@given(grids, st.floats(1e-3, 1e3), st.randoms(use_true_random=False))
def test_scale_and_permutation_invariance(g, scale, rnd):
    base = spread(normalize(g))
    assert 0.0 <= base <= 1.0 + 1e-12
    assert abs(spread(normalize(g * scale)) - base) < 1e-9
    flat = list(g.ravel())
    rnd.shuffle(flat)
    assert abs(spread(normalize(np.array(flat).reshape(g.shape))) - base) < 1e-9
    assert abs(base - oracles.spread(g.tolist())) < 1e-9


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    maps = [normalize(rng.random((4, 4))) for _ in range(10)]
    np.testing.assert_allclose(spread_batch(maps), [spread(m) for m in maps], atol=1e-12)
    mixed = maps[:2] + [normalize(rng.random((2, 3)))]
    np.testing.assert_allclose(spread_batch(mixed), [spread(m) for m in mixed], atol=1e-12)
    assert spread_batch([]).shape == (0,)


def test_pool_and_wire():
    a = {"h": 1, "w": 2, "data": [1, 0]}
    b = {"h": 1, "w": 2, "data": [0, 1]}
    m = from_wire("cup", [a, b])
    np.testing.assert_allclose(m.grid, [[0.5, 0.5]])
    assert from_wire("cup", a).to_wire() == {"h": 1, "w": 2, "data": [1.0, 0.0]}
    with pytest.raises(ValueError):
        from_wire("cup", {"h": 2, "w": 2, "data": [1, 0]})
    with pytest.raises(ValueError):
        pool([])


def test_phrase_map_averages_tokens():
    maps = {"teddy": normalize([[1, 0]]), "bear": normalize([[0, 1]])}
    m = phrase_map(maps, "teddy bear")
    np.testing.assert_allclose(m.grid, [[0.5, 0.5]])
    assert phrase_map(maps, "cup") is None


def test_correlation_examples():
    up = correlate_spread_with_accuracy([(0, 0), (1, 1), (2, 2)])
    assert abs(up.r - 1.0) < 1e-9
    down = correlate_spread_with_accuracy([(0, 0), (1, -1), (2, -2)])
    assert abs(down.r + 1.0) < 1e-9
    pts = [(10.0, 0.2), (40.0, 0.3), (70.0, 0.8), (90.0, 0.7)]
    assert correlate_spread_with_accuracy(pts).r == pytest.approx(oracles.pearson(pts), abs=1e-12)


def test_correlation_degenerate():
    res = correlate_spread_with_accuracy([(1, 0.5), (2, 0.5), (3, 0.5)])
    assert res.r is None and not res.defined
    with pytest.raises(ValueError):
        correlate_spread_with_accuracy([(1, 1), (2, 2)])


def test_attention_map_shape():
    m = normalize(np.ones((2, 3)))
    assert isinstance(m, AttentionMap) and m.shape == (2, 3)
    assert math.isclose(m.grid.sum(), 1.0)
