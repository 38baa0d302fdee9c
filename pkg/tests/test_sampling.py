from math import comb

import numpy as np
import pytest

from hsfrag.errors import EmptyPostselectionError
from hsfrag.lattice import enumerate_sector, parse_configuration
from hsfrag.observables import imbalance, participation_entropy
from hsfrag.sampling import (ShotRecord, empirical_distribution, estimate_imbalance, estimate_pe,
                             postselect, sample_shots, write_shots)


def preserve_probability(Q, n, eps):
    """P(i.i.d. flips leave the popcount of a Q-excitation, n-site string unchanged)."""
    return sum(comb(Q, a) * comb(n - Q, a) * eps ** (2 * a) * (1 - eps) ** (n - 2 * a)
               for a in range(min(Q, n - Q) + 1))


@pytest.fixture
def dist(ladder4):
    _, basis = ladder4
    p = np.random.default_rng(0).dirichlet(np.full(basis.dim, 0.5))
    return basis, p


def test_deterministic(dist):
    basis, p = dist
    a = sample_shots(p, basis, 10_000, seed=5, readout_flip=0.02)
    b = sample_shots(p, basis, 10_000, seed=5, readout_flip=0.02)
    assert np.array_equal(a.configs, b.configs) and np.array_equal(a.counts, b.counts)
    c = sample_shots(p, basis, 10_000, seed=6, readout_flip=0.02)
    assert not np.array_equal(a.counts, c.counts) or not np.array_equal(a.configs, c.configs)


def test_no_readout_error_stays_in_sector(dist):
    basis, p = dist
    rec = sample_shots(p, basis, 5000, seed=1)
    assert rec.n_shots == 5000
    kept, acc = postselect(rec, basis.Q)
    assert acc == 1.0
    assert np.array_equal(kept.configs, rec.configs) and np.array_equal(kept.counts, rec.counts)


def test_acceptance_fraction(ladder4):
    _, basis = ladder4
    c = parse_configuration("1100", 4)
    p = np.zeros(basis.dim)
    p[basis.index(c)] = 1
    eps = 0.05
    rec = sample_shots(p, basis, 200_000, seed=2, readout_flip=eps)
    _, acc = postselect(rec, 4)
    expected = preserve_probability(4, 8, eps)
    assert abs(acc - expected) < 4 * np.sqrt(expected * (1 - expected) / 200_000)


def test_postselect_empty_raises(ladder4):
    _, basis = ladder4
    rec = sample_shots(np.eye(basis.dim)[0], basis, 10, seed=0)
    with pytest.raises(EmptyPostselectionError):
        postselect(rec, 3)


def test_plugin_entropy(dist):
    basis, p = dist
    rec = sample_shots(p, basis, 200_000, seed=3)
    exact = participation_entropy(p)
    est = estimate_pe(rec)
    assert est <= exact + 0.005 and abs(est - exact) < 0.01
    mm = estimate_pe(rec, miller_madow=True)
    assert np.isclose(mm - est, (rec.configs.size - 1) / (2 * rec.n_shots))
    perm = np.random.default_rng(0).permutation(rec.configs.size)
    relabeled = ShotRecord(rec.configs[::-1].copy(), rec.counts[perm], rec.n_sites)
    shuffled = ShotRecord(rec.configs, rec.counts[perm], rec.n_sites)
    assert np.isclose(estimate_pe(relabeled), estimate_pe(shuffled))


def test_imbalance_estimate(dist):
    basis, p = dist
    c = parse_configuration("10100101", 4)
    rec = sample_shots(p, basis, 100_000, seed=4)
    mean, std = estimate_imbalance(rec, c)
    exact = imbalance(np.sqrt(p), c, basis)
    assert abs(mean - exact) < 5 * std / np.sqrt(rec.n_shots)
    assert 0 < std <= 1
    with pytest.raises(ValueError):
        estimate_imbalance(ShotRecord(np.array([3], np.uint64), np.array([1]), 8), c)


def test_empirical_distribution(dist):
    basis, p = dist
    rec = sample_shots(p, basis, 300_000, seed=9)
    q = empirical_distribution(rec, basis)
    assert np.isclose(q.sum(), 1) and np.abs(q - p).max() < 0.01


def test_validation(dist):
    basis, p = dist
    with pytest.raises(ValueError):
        sample_shots(p[:-1], basis, 10, 0)
    with pytest.raises(ValueError):
        sample_shots(2 * p, basis, 10, 0)
    with pytest.raises(ValueError):
        sample_shots(p, basis, 0, 0)
    with pytest.raises(ValueError):
        sample_shots(p, basis, 10, 0, readout_flip=1.5)


def test_write_shots(tmp_path):
    basis = enumerate_sector(1, 1)
    rec = sample_shots(np.array([1.0, 0.0]), basis, 7, seed=0)
    path = tmp_path / "s.csv"
    write_shots(path, rec)
    assert path.read_text() == "configuration_bits,count\n10,7\n"
