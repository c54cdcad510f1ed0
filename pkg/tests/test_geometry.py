import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from corrsched.errors import ConfigurationError
from corrsched.geometry import (build_topology, channel_gain, in_hexagon, intra_cluster_adjacency,
                                pairwise_wrapped_distances, wrapped_distance)


@pytest.fixture(scope="module")
def topo19():
    return build_topology(19, 130.0, 18, rng_seed=1)


def test_reference_layout_sizes(topo19):
    assert topo19.num_cells == 19
    assert topo19.num_sources == 342
    assert all(len(c.sources) == 18 for c in topo19.cells)


def test_seven_cells_one_user_each_inside_own_hexagon():
    topo = build_topology(7, 130.0, 1, rng_seed=5)
    assert topo.num_sources == 7
    for cell in topo.cells:
        assert in_hexagon(cell.sources[0].position, cell.center, topo.cell_radius).all()


def test_build_is_deterministic():
    a = build_topology(19, 130.0, 18, rng_seed=1)
    b = build_topology(19, 130.0, 18, rng_seed=1)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.gains.tobytes() == b.gains.tobytes()


def test_different_seed_moves_sources():
    a = build_topology(7, 130.0, 3, rng_seed=1)
    b = build_topology(7, 130.0, 3, rng_seed=2)
    assert not np.array_equal(a.positions, b.positions)


@pytest.mark.parametrize("n", [1, 2, 4, 20])
def test_unsupported_cell_count_rejected(n):
    with pytest.raises(ConfigurationError, match="topology.num_cells"):
        build_topology(n, 130.0, 1)


def test_six_distinct_neighbours_at_site_distance(topo19):
    centers = topo19.centers
    for cell in topo19.cells:
        assert len(set(cell.neighbors)) == 6
        assert cell.id not in cell.neighbors
        for nb in cell.neighbors:
            d = wrapped_distance(cell.center, centers[nb], topo19)
            assert d == pytest.approx(130.0, rel=1e-12)
            assert cell.id in topo19.cells[nb].neighbors


def test_centres_pairwise_at_least_site_distance(topo19):
    d = pairwise_wrapped_distances(topo19.centers, topo19.centers, topo19.wrap_vectors)
    off = d[~np.eye(19, dtype=bool)]
    assert off.min() >= 130.0 * (1 - 1e-12)


def test_colouring_proper_inside_cluster(topo19):
    # the 19-cell torus admits no proper 3-colouring, so the check covers
    # adjacencies that do not cross the wrap boundary
    types = {c.id: c.cell_type for c in topo19.cells}
    pairs = intra_cluster_adjacency(topo19)
    assert len(pairs) == 42
    assert all(types[a] != types[b] for a, b in pairs)
    assert set(types.values()) == {1, 2, 3}


def test_seven_cell_colouring_fully_proper():
    topo = build_topology(7, 130.0, 1, rng_seed=0)
    for cell in topo.cells:
        if cell.id == 0:
            assert all(topo.cells[nb].cell_type != cell.cell_type for nb in cell.neighbors)


@pytest.mark.parametrize("d, g", [(1.0, 1.0), (10.0, 1e-3), (130.0, 130.0 ** -3)])
def test_channel_gain_values(d, g):
    assert channel_gain(d) == pytest.approx(g, rel=1e-12)


def test_channel_gain_130m_numeric():
    assert channel_gain(130.0) == pytest.approx(4.552e-7, rel=1e-3)


def test_channel_gain_clamps_below_one_metre():
    assert channel_gain(0.0) == 1.0
    assert channel_gain(0.3) == 1.0


@given(st.floats(1.0, 1e4), st.floats(1.0, 1e4))
def test_channel_gain_strictly_decreasing(a, b):
    if a < b:
        assert channel_gain(a) > channel_gain(b)


def test_gains_in_unit_interval_and_follow_wrapped_distance(topo19):
    g = topo19.gains
    assert np.all(g > 0) and np.all(g <= 1)
    d = pairwise_wrapped_distances(topo19.positions, topo19.centers, topo19.wrap_vectors)
    np.testing.assert_allclose(g, channel_gain(d), rtol=1e-12)


def test_wrapped_distance_zero_and_symmetric(topo19):
    rng = np.random.default_rng(3)
    pts = topo19.positions[rng.integers(0, 342, (1000, 2))]
    a, b = pts[:, 0], pts[:, 1]
    np.testing.assert_allclose(wrapped_distance(a, b, topo19), wrapped_distance(b, a, topo19),
                               rtol=1e-12)
    assert wrapped_distance(a[0], a[0], topo19) == 0.0


def test_wrapped_distance_triangle_inequality(topo19):
    rng = np.random.default_rng(4)
    idx = rng.integers(0, 342, (300, 3))
    p = topo19.positions
    ab = wrapped_distance(p[idx[:, 0]], p[idx[:, 1]], topo19)
    bc = wrapped_distance(p[idx[:, 1]], p[idx[:, 2]], topo19)
    ac = wrapped_distance(p[idx[:, 0]], p[idx[:, 2]], topo19)
    assert np.all(ac <= ab + bc + 1e-9)


def test_wrap_shortens_opposite_edge_pairs(topo19):
    centers = topo19.centers
    far = max(itertools.combinations(range(19), 2),
              key=lambda ij: np.linalg.norm(centers[ij[0]] - centers[ij[1]]))
    a, b = centers[far[0]], centers[far[1]]
    direct = np.linalg.norm(a - b)
    wrapped = wrapped_distance(a, b, topo19)
    shifted = min(np.linalg.norm(a - (b + s)) for s in np.vstack([[0, 0], topo19.wrap_vectors]))
    assert wrapped < direct
    assert wrapped == pytest.approx(shifted)


def test_sources_uniform_in_hexagon_mean_near_centre():
    topo = build_topology(7, 130.0, 2000, rng_seed=11)
    for cell in topo.cells:
        pos = np.array([s.position for s in cell.sources])
        assert in_hexagon(pos, cell.center, topo.cell_radius).all()
        assert np.linalg.norm(pos.mean(axis=0) - cell.center) < 0.05 * 130.0
