import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parhoward import (
    DimensionOutOfRange,
    Grid,
    NonConformingSpacing,
    TooManySplits,
    build_grid,
    decompose,
    optimal_splits,
)
from parhoward.grid import BOUNDARY, INTERFACE


def test_build_grid_1d_counts():
    g = build_grid([-1], [1], [0.1])
    assert g.counts == (21,)
    assert len(g.interior) == 19
    assert g.dirichlet.sum() == 2
    assert g.h[0] == pytest.approx(0.1, abs=1e-15)


def test_build_grid_2d_boundary_ring():
    g = build_grid([-1, -1], [1, 1], [0.1, 0.1])
    assert g.counts == (21, 21)
    assert g.dirichlet.sum() == 80
    assert (g.node_class == "dirichlet").sum() == 80


def test_build_grid_rejects_nonconforming_spacing():
    with pytest.raises(NonConformingSpacing):
        build_grid([0], [1], [0.3])


@pytest.mark.parametrize("d", [0, 4])
def test_build_grid_rejects_dimension(d):
    with pytest.raises(DimensionOutOfRange):
        build_grid([0.0] * d, [1.0] * d, [0.5] * d)


def test_build_grid_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_grid([1], [0], [0.1])
    with pytest.raises(ValueError):
        build_grid([0], [1], [-0.1])
    with pytest.raises(ValueError):
        build_grid([0], [1], [1.0])  # two nodes only


def test_coordinates_and_spacing():
    g = build_grid([0, -2], [1, 2], [0.25, 0.5])
    assert g.counts == (5, 9)
    np.testing.assert_allclose(g.axis_coords(1), np.linspace(-2, 2, 9))
    assert g.coords.shape == (45, 2)
    np.testing.assert_allclose(g.coords[-1], [1, 2])


def test_periodic_axis_has_no_boundary():
    g = build_grid([-1, -1], [1, 1], [0.5, 0.5], periodic=(False, True))
    assert g.counts == (5, 4)
    assert g.h == (0.5, 0.5)
    assert g.dirichlet.reshape(g.counts)[1:-1].sum() == 0
    node = g.ravel([2, 3])
    assert g.shift([node], 1, 1)[0] == g.ravel([2, 0])
    assert g.shift([g.ravel([4, 0])], 0, 1)[0] == -1


@given(st.lists(st.integers(3, 7), min_size=1, max_size=3))
def test_flat_multi_round_trip(counts):
    g = Grid.from_counts([0] * len(counts), [1] * len(counts), counts)
    flat = np.arange(g.n_nodes)
    np.testing.assert_array_equal(g.ravel(g.unravel(flat)), flat)
    np.testing.assert_array_equal(g.unravel(flat), g.multi_index)


def test_decompose_1d_two_way():
    g = build_grid([-1], [1], [0.1])
    dec = decompose(g, [2])
    assert [len(s) for s in dec.subdomains] == [9, 9]
    assert len(dec.interface) == 1
    assert g.coords[dec.interface[0], 0] == pytest.approx(0.0, abs=1e-12)


def test_decompose_all_ones():
    g = build_grid([-1, -1], [1, 1], [0.1, 0.1])
    dec = decompose(g, [1, 1])
    assert dec.n_subdomains == 1
    assert len(dec.interface) == 0
    np.testing.assert_array_equal(dec.subdomains[0], g.interior)


def test_decompose_2d_two_by_two():
    g = build_grid([-1, -1], [1, 1], [0.1, 0.1])
    dec = decompose(g, [2, 2])
    assert len(dec.interface) == 37
    assert [len(s) for s in dec.subdomains] == [81] * 4


def test_uneven_split_gives_earlier_slabs_the_extra_node():
    g = Grid.from_counts([0], [1], [12])  # 10 interior nodes
    dec = decompose(g, [3])  # 8 free nodes over 3 slabs
    assert [len(s) for s in dec.subdomains] == [3, 3, 2]


def test_too_many_splits():
    g = build_grid([-1], [1], [0.5])  # 3 interior nodes
    assert decompose(g, [2]).n_subdomains == 2
    for k in (3, 4, 5, 9):
        with pytest.raises(TooManySplits):
            decompose(g, [k])


def test_decompose_rejects_wrong_length():
    g = build_grid([-1], [1], [0.5])
    with pytest.raises(ValueError):
        decompose(g, [2, 2])


def test_periodic_split_places_a_plane_at_the_wrap():
    g = build_grid([-1, -1], [1, 1], [0.25, 0.25], periodic=(False, True))
    dec = decompose(g, [1, 2])
    wrap = g.multi_index[dec.interface][:, 1]
    # 8 periodic nodes: slabs {0,1,2} and {4,5,6}, planes at 3 and at the wrap (7).
    assert set(wrap.tolist()) == {3, 7}
    _check_partition_and_locality(g, dec)


def _check_partition_and_locality(g, dec):
    interior = set(g.interior.tolist())
    sets = [set(s.tolist()) for s in dec.subdomains] + [set(dec.interface.tolist())]
    assert sum(len(s) for s in sets) == len(interior)
    assert set().union(*sets) == interior
    owner = dec.owner
    assert np.all(owner[g.dirichlet] == BOUNDARY)
    for i, sub in enumerate(dec.subdomains):
        for j in sub:
            nb = g.neighbors(int(j), diagonal=True)
            assert np.all(np.isin(owner[nb], [i, INTERFACE, BOUNDARY]))
    # Interface nodes touch two distinct subdomains or sit on a plane crossing.
    for j in dec.interface:
        nb = owner[g.neighbors(int(j))]
        touching = set(nb[nb >= 0].tolist())
        assert len(touching) >= 2 or (nb == INTERFACE).sum() >= 2 or len(touching) == 0


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(5, 14), st.integers(1, 3)), min_size=1, max_size=3),
    st.booleans(),
)
def test_partition_and_locality(axes, last_periodic):
    counts = [c for c, _ in axes]
    splits = [s for _, s in axes]
    periodic = [False] * len(axes)
    periodic[-1] = last_periodic and len(axes) > 1
    g = Grid.from_counts([0] * len(axes), [1] * len(axes), counts, periodic)
    try:
        dec = decompose(g, splits)
    except TooManySplits:
        return
    _check_partition_and_locality(g, dec)


@pytest.mark.parametrize(
    "n, d, expected", [(12, 1, 4), (2, 1, 2), (64, 2, 2), (65, 2, 3), (6241, 2, 4)]
)
def test_optimal_splits(n, d, expected):
    assert optimal_splits(n, d) == expected


def test_optimal_splits_is_minimal():
    for d in (1, 2, 3):
        for n in (2, 10, 100, 5000):
            ns = optimal_splits(n, d)
            assert (ns**d * (ns - 1) * d) ** d >= n
            assert ns == 2 or ((ns - 1) ** d * (ns - 2) * d) ** d < n


def test_optimal_splits_rejects_bad_input():
    with pytest.raises(ValueError):
        optimal_splits(1, 2)
    with pytest.raises(DimensionOutOfRange):
        optimal_splits(10, 4)
