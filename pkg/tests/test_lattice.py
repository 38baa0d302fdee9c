from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hsfrag.lattice import (Edge, LadderGeometry, bit_site, dipole_moment, domain_wall_count,
                            enumerate_sector, format_configuration, hamming_distance, leg_exchange,
                            parse_configuration, popcount, reflect, site_bit, spin_flip, state_index)


def naive_walls(c, L):
    spins = [[1 if (c >> (2 * j + m)) & 1 else -1 for m in (0, 1)] for j in range(L)]
    sbar = [0.5 * (a + b) for a, b in spins]
    return sum(0.5 * (1 - sbar[j] * sbar[j + 1]) for j in range(L - 1))


def naive_dipole(c):
    return sum(k // 2 + 1 for k in range(64) if (c >> k) & 1)


def test_site_bit_layout():
    assert site_bit(1, 1) == 0
    assert site_bit(1, 2) == 1
    assert site_bit(3, 2) == 5
    for b in range(16):
        assert site_bit(*bit_site(b)) == b


@pytest.mark.parametrize("L,Q,dim", [(8, 8, 12870), (1, 0, 1), (2, 2, 6), (4, 4, 70), (12, 12, 2704156)])
def test_sector_dimension(L, Q, dim):
    if L == 12:
        assert comb(2 * L, Q) == dim  # enumerating it is an extended-scale job
        return
    assert enumerate_sector(L, Q).dim == dim


def test_empty_sector_is_zero_mask():
    b = enumerate_sector(1, 0)
    assert list(b.states) == [0]


@pytest.mark.parametrize("L", range(1, 7))
def test_sector_dimensions_sum_to_full_space(L):
    assert sum(enumerate_sector(L, Q).dim for Q in range(2 * L + 1)) == 4 ** L


@pytest.mark.parametrize("L,Q", [(3, 2), (4, 4), (5, 3)])
def test_sector_ascending_and_matches_combinations(L, Q):
    b = enumerate_sector(L, Q)
    assert np.all(np.diff(b.states.astype(np.int64)) > 0)
    ref = sorted(sum(1 << k for k in ks) for ks in combinations(range(2 * L), Q))
    assert list(map(int, b.states)) == ref


def test_combination_path_matches_scan():
    # L=14 enumerates by combinations; compare a prefix against the scan convention
    b = enumerate_sector(14, 2)
    ref = sorted(sum(1 << k for k in ks) for ks in combinations(range(28), 2))
    assert list(map(int, b.states)) == ref


def test_enumerate_rejects_bad_input():
    with pytest.raises(ValueError):
        enumerate_sector(0, 0)
    with pytest.raises(ValueError):
        enumerate_sector(2, 5)


def test_state_index_round_trip():
    b = enumerate_sector(4, 4)
    assert state_index(b, b.states[0]) == 0
    for k in range(b.dim):
        assert state_index(b, b.states[k]) == k
    assert np.array_equal(b.index(b.states), np.arange(b.dim))


def test_state_index_wrong_popcount():
    b = enumerate_sector(4, 4)
    with pytest.raises(KeyError):
        state_index(b, 0b111)


def test_paper_states():
    psi2 = parse_configuration("11000011", 8)
    psi6 = parse_configuration("10100101", 8)
    assert domain_wall_count(psi2, 8) == 2
    assert domain_wall_count(psi6, 8) == 6
    assert dipole_moment(psi2) == 36
    assert dipole_moment(psi6) == 36
    assert format_configuration(spin_flip(psi2, 8), 8, shorthand=True) == "00111100"
    assert format_configuration(spin_flip(psi6, 8), 8, shorthand=True) == "01011010"


def test_trivial_walls_and_dipole():
    assert domain_wall_count((1 << 16) - 1, 8) == 0
    assert dipole_moment(0) == 0


def test_parse_full_and_shorthand():
    assert parse_configuration("10", 1) == 0b01
    assert parse_configuration("1", 1) == 0b11
    assert parse_configuration("|1100⟩", 2) == 0b0011  # length 2L: full form
    assert parse_configuration("10", 2) == 0b0011
    with pytest.raises(ValueError):
        parse_configuration("102", 3)
    with pytest.raises(ValueError):
        parse_configuration("10101", 4)
    with pytest.raises(ValueError):
        format_configuration(0b01, 1, shorthand=True)


@given(st.integers(1, 10).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, 4 ** L - 1))))
def test_format_parse_round_trip(args):
    L, c = args
    assert parse_configuration(format_configuration(c, L), L) == c


def test_hamming_examples():
    c = 0b10110100
    assert hamming_distance(c, c) == 0
    assert hamming_distance(c, spin_flip(c, 4)) == 8
    assert hamming_distance(0b01, 0b10) == 2


def test_vectorized_against_naive_reference():
    rng = np.random.default_rng(0)
    L = 8
    cs = rng.integers(0, 4 ** L, size=10_000, dtype=np.uint64)
    walls = domain_wall_count(cs, L)
    dip = dipole_moment(cs)
    for k in range(0, 10_000, 7):
        c = int(cs[k])
        assert walls[k] == naive_walls(c, L)
        assert dip[k] == naive_dipole(c)
    assert np.array_equal(popcount(cs), [int(c).bit_count() for c in cs])


@given(st.lists(st.booleans(), min_size=2, max_size=12))
def test_spin_flip_keeps_walls_of_leg_doubled_states(rungs):
    L = len(rungs)
    c = parse_configuration("".join("1" if r else "0" for r in rungs), L)
    assert domain_wall_count(spin_flip(c, L), L) == domain_wall_count(c, L)


@given(st.integers(1, 10).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, 4 ** L - 1))))
def test_symmetries_are_involutions(args):
    L, c = args
    assert spin_flip(spin_flip(c, L), L) == c
    assert leg_exchange(leg_exchange(c, L), L) == c
    assert reflect(reflect(c, L), L) == c
    assert popcount(np.uint64(leg_exchange(c, L))) == popcount(np.uint64(c))


def test_default_geometry_edges():
    g = LadderGeometry.default(3)
    kinds = sorted(e.J for e in g.edges)
    # 4 leg, 3 rung, 4 diagonal bonds
    assert len(g.edges) == 11
    assert kinds.count(1.0) == 7
    assert np.isclose(kinds[0], 1 / 6)


def test_geometry_validation():
    with pytest.raises(ValueError):
        LadderGeometry(2, (Edge(0, 0, 1.0),))
    with pytest.raises(ValueError):
        LadderGeometry(2, (Edge(0, 9, 1.0),))
    with pytest.raises(ValueError):
        LadderGeometry(2, (Edge(0, 1, 1.0), Edge(1, 0, 1.0)))


def test_coupling_file(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# j1 m1 j2 m2 J\n1 1 1 2 0.9\n1 1 2 1 1.1  # leg\n\n")
    g = LadderGeometry.from_coupling_file(f, 2)
    assert {(e.a, e.b, e.J) for e in g.edges} == {(0, 1, 0.9), (0, 2, 1.1)}
    f.write_text("1 1 3 1 1.0\n")
    with pytest.raises(ValueError):
        LadderGeometry.from_coupling_file(f, 2)
