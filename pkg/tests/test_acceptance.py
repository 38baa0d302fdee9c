"""Acceptance checks at desk scale (L = 8 dense, 4x2 oracle sweeps).

Each test records one PASS/FAIL line, printed in the "acceptance criteria" summary
section, and then asserts.
"""

import math
import os
import time

import numpy as np
import pytest

from hsfrag.hamiltonian import RandomUniform, Stark, build_hamiltonian, expectation
from hsfrag.lattice import (LadderGeometry, domain_wall_count, enumerate_sector,
                            parse_configuration, spin_flip)
from hsfrag.observables import (domain_wall_expectation, imbalance, krylov_subset,
                                participation_entropy, pe_goe, pe_gue, probabilities,
                                random_state_overlap, subspace_overlap)
from hsfrag.propagator import KrylovParams, evolve
from hsfrag.sampling import estimate_pe, postselect, sample_shots
from hsfrag.spectral import diagonalize, level_spacing_ratios, mean_gap_ratio, normalized_energy

L = 8
F_NN_MHZ = 7.0
PSI2 = "11000011"  # n_DW = 2
PSI6 = "10100101"  # n_DW = 6


def ns_to_tau(t_ns):
    return 2 * math.pi * F_NN_MHZ * 1e-3 * np.asarray(t_ns, dtype=float)


def product(basis, text):
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index(parse_configuration(text, basis.L))] = 1
    return psi


def report(log, crit, ok, detail):
    log.append((crit, bool(ok), detail))
    assert ok, f"criterion {crit}: {detail}"


@pytest.fixture(scope="module")
def basis8():
    return enumerate_sector(L, L)


@pytest.fixture(scope="module")
def geo8():
    return LadderGeometry.default(L)


@pytest.fixture(scope="module")
def eig_gamma0(geo8, basis8):
    H = build_hamiltonian(geo8, Stark(0.0), basis8)
    return H, diagonalize(H)


@pytest.fixture(scope="module")
def eig_gamma2(geo8, basis8):
    H = build_hamiltonian(geo8, Stark(2.0), basis8)
    return H, diagonalize(H)


def dense_states(eig, psi0, taus):
    c = eig.expand(psi0)
    for tau in taus:
        yield tau, eig.synthesize(np.exp(-1j * tau * eig.energies) * c)


def mid_spectrum(eig, lo=0.45, hi=0.55):
    E = eig.energies
    eps = normalized_energy(E, E[0], E[-1])
    return np.flatnonzero((eps >= lo) & (eps <= hi))


def eigen_columns(eig, basis, sel):
    """PE and n_DW of the selected eigenstates."""
    pe, ndw = {}, {}
    wanted = set(sel.tolist())
    for idx, vecs in eig.iter_vectors():
        keep = [k for k, n in enumerate(idx) if n in wanted]
        if keep:
            v = vecs[:, keep]
            for n, a, b in zip(idx[keep], participation_entropy(v ** 2),
                               domain_wall_expectation(v, basis)):
                pe[n], ndw[n] = a, b
    return np.array([pe[n] for n in sel]), np.array([ndw[n] for n in sel])


# --- 1 ------------------------------------------------------------------------

def test_criterion_1_analytic_pe_references(acceptance_log):
    goe, gue = pe_goe(12870), pe_gue(12870)
    ok = 8.728 <= goe <= 8.738 and 9.035 <= gue <= 9.045
    report(acceptance_log, 1, ok, f"pe_goe(12870)={goe:.4f} in [8.728, 8.738], "
                                  f"pe_gue(12870)={gue:.4f} in [9.035, 9.045]")


# --- 2 and 3 --------------------------------------------------------------------

def test_criterion_2_goe_gue_verification(acceptance_log, eig_gamma0, basis8):
    H, eig = eig_gamma0
    sel = mid_spectrum(eig)
    pe, _ = eigen_columns(eig, basis8, sel)
    eig_ok = abs(pe.mean() - 8.73) <= 0.3
    taus = np.arange(20.0, 100.0 + 1e-9, 2.0)
    quench = {}
    for name in (PSI2, PSI6):
        quench[name] = np.array([participation_entropy(probabilities(s))
                                 for _, s in dense_states(eig, product(basis8, name), taus)])
    q_ok = all(np.all((v >= 8.84) & (v <= 9.09)) for v in quench.values())
    detail = (f"eigenstate PE mean over eps in [0.45,0.55] = {pe.mean():.3f} (target 8.73 +- 0.3, "
              f"{'ok' if eig_ok else 'out'}); quench PE over tau in [20,100]: "
              + ", ".join(f"{k} min {v.min():.3f} max {v.max():.3f}" for k, v in quench.items())
              + " (target [8.84, 9.09])")
    report(acceptance_log, 2, eig_ok and q_ok, detail)


def test_criterion_3_eth_domain_walls(acceptance_log, eig_gamma0, basis8):
    _, eig = eig_gamma0
    sel = mid_spectrum(eig)
    _, ndw = eigen_columns(eig, basis8, sel)
    ok = abs(ndw.mean() - 3.73) <= 0.05
    report(acceptance_log, 3, ok, f"mean n_DW over {sel.size} mid-spectrum eigenstates = "
                                  f"{ndw.mean():.4f} (target 3.73 +- 0.05)")


# --- 4 --------------------------------------------------------------------------

def test_criterion_4_level_statistics(acceptance_log, geo8, basis8):
    rng = np.random.default_rng(2024)
    ratios = []
    for _ in range(10_000):
        A = rng.normal(size=(200, 200))
        ratios.append(level_spacing_ratios(np.linalg.eigvalsh(A + A.T), 0.5)[0])
    r_goe = np.concatenate(ratios).mean()
    _, r_poi = level_spacing_ratios(np.cumsum(rng.exponential(size=100_000)), 1.0)
    r1 = mean_gap_ratio(build_hamiltonian(geo8, Stark(1.0), basis8))
    r4 = mean_gap_ratio(build_hamiltonian(geo8, Stark(4.0), basis8))
    ok = (abs(r_goe - 0.531) <= 0.01 and abs(r_poi - 0.386) <= 0.01 and r1 >= 0.50 and r4 <= 0.42)
    report(acceptance_log, 4, ok,
           f"GOE ensemble <r>={r_goe:.4f} (0.531+-0.01), Poisson <r>={r_poi:.4f} (0.386+-0.01), "
           f"ladder <r>(gamma=1)={r1:.4f} (>=0.50), <r>(gamma=4)={r4:.4f} (<=0.42)")


# --- 5 --------------------------------------------------------------------------

def test_criterion_5_propagator_oracle(acceptance_log):
    geo = LadderGeometry.default(4)
    taus = np.array([1.0, 10.0, 50.0])
    worst = drift = edrift = 0.0
    rng = np.random.default_rng(5)
    n_traj = 0
    for Q in range(9):
        basis = enumerate_sector(4, Q)
        for draw in range(100):
            H = build_hamiltonian(geo, RandomUniform(3.0, 1000 * Q + draw), basis)
            E, V = np.linalg.eigh(H.to_dense())
            psi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
            psi /= np.linalg.norm(psi)
            e0 = expectation(H, psi)
            traj = evolve(H, psi, taus)
            n_traj += 1
            for tau, s in zip(taus, traj.states):
                exact = V @ (np.exp(-1j * tau * E) * (V.T @ psi))
                worst = max(worst, np.abs(s - exact).max())
                drift = max(drift, abs(np.linalg.norm(s) - 1))
                edrift = max(edrift, abs(expectation(H, s) - e0) / max(H.norm1, 1e-300))
            drift = max(drift, traj.info["max_norm_drift"])
    ok = worst < 1e-8 and drift < 1e-9 and edrift < 1e-8
    report(acceptance_log, 5, ok, f"{n_traj} trajectories over Q=0..8: max |Krylov-dense|={worst:.2e} "
                                  f"(<1e-8), norm drift={drift:.2e} (<1e-9), "
                                  f"relative energy drift={edrift:.2e} (<1e-8)")


# --- 6 --------------------------------------------------------------------------

def late_window_imbalance(H, basis, text):
    t_ns = np.linspace(600.0, 800.0, 21)
    taus = ns_to_tau(np.concatenate([[0.0], t_ns]))
    c = parse_configuration(text, L)
    traj = evolve(H, product(basis, text), taus, KrylovParams(),
                  observe=lambda t, s: imbalance(s, c, basis), keep_states=False)
    return float(np.mean(traj.records[1:]))


def test_criterion_6_initial_state_dependence(acceptance_log, geo8, basis8):
    H2 = build_hamiltonian(geo8, Stark(2.0), basis8)
    H0 = build_hamiltonian(geo8, Stark(0.0), basis8)
    i2, i6 = (late_window_imbalance(H2, basis8, s) for s in (PSI2, PSI6))
    z2, z6 = (late_window_imbalance(H0, basis8, s) for s in (PSI2, PSI6))
    ok = (i2 - i6 > 0.1) and abs(z2) < 0.05 and abs(z6) < 0.05
    report(acceptance_log, 6, ok,
           f"gamma=2 late I(psi2)={i2:.4f}, I(psi6)={i6:.4f}, difference {i2 - i6:.4f} (>0.1); "
           f"gamma=0 late I(psi2)={z2:.4f}, I(psi6)={z6:.4f} (|.|<0.05)")


# --- 7 --------------------------------------------------------------------------

def test_criterion_7_fragmentation_signature(acceptance_log, eig_gamma2, basis8):
    _, eig = eig_gamma2
    delta = 0.01
    t_ns = np.concatenate([[0.0], np.geomspace(1.0, 40_000.0, 80)])
    taus = ns_to_tau(t_ns)

    def series(text):
        subs = [krylov_subset(probabilities(s), delta, basis8, t)
                for t, s in dense_states(eig, product(basis8, text), taus)]
        running, best = [], None
        for s in subs:
            best = s if best is None or s.dim > best.dim else best
            running.append(best)
        return subs, running

    flip = {s: "".join("1" if ch == "0" else "0" for ch in s) for s in (PSI2, PSI6)}
    assert parse_configuration(flip[PSI2], L) == spin_flip(parse_configuration(PSI2, L), L)
    own2, run2 = series(PSI2)
    own6, run6 = series(PSI6)
    _, run2b = series(flip[PSI2])
    _, run6b = series(flip[PSI6])
    d2 = np.array([s.dim for s in own2[1:]])
    d6 = np.array([s.dim for s in own6[1:]])
    dims_ok = bool(np.all(d2 < d6))
    eta2 = subspace_overlap(run2[-1], run2b[-1])
    eta6 = subspace_overlap(run6[-1], run6b[-1])
    eta_rand, eta_std = random_state_overlap(basis8.dim, delta, n_pairs=1000, seed=7)
    ok = dims_ok and eta2 < eta_rand and eta2 < eta6
    bad = int(np.sum(d2 >= d6))
    report(acceptance_log, 7, ok,
           f"dim K_delta(t) psi2 < psi6 at {d2.size - bad}/{d2.size} times in (0, 40 us] "
           f"(final K_delta {run2[-1].dim} vs {run6[-1].dim}); late eta(psi2, flip)={eta2:.3f}, "
           f"eta(psi6, flip)={eta6:.3f}, random-state eta={eta_rand:.3f}+-{eta_std:.3f}")


# --- 8 --------------------------------------------------------------------------

def test_criterion_8_sampling_layer(acceptance_log, eig_gamma0, basis8):
    _, eig = eig_gamma0
    (_, psi), = dense_states(eig, product(basis8, PSI6), [ns_to_tau(800.0)])
    p = probabilities(psi)
    p /= p.sum()
    exact = participation_entropy(p)
    gaps, leaks = [], []
    for seed in range(5):
        rec = sample_shots(p, basis8, 500_000, seed=seed)
        gaps.append(estimate_pe(rec) - exact)
        noisy = sample_shots(p, basis8, 500_000, seed=100 + seed, readout_flip=0.01)
        kept, _ = postselect(noisy, basis8.Q)
        leaks.append(estimate_pe(kept) - estimate_pe(noisy))
    gaps, leaks = np.array(gaps), np.array(leaks)
    ok = np.all(np.abs(gaps) <= 0.05) and np.all(gaps <= 0.005) and np.all(leaks <= 0)
    report(acceptance_log, 8, ok,
           f"exact PE {exact:.4f}; shot estimate - exact over 5 seeds in "
           f"[{gaps.min():.4f}, {gaps.max():.4f}] (|.|<=0.05, <=0.005); post-selected minus raw PE "
           f"with 1% readout flips in [{leaks.min():.4f}, {leaks.max():.4f}] (<=0)")


# --- 9 (extended, not gating) -------------------------------------------------------

@pytest.mark.extended
def test_criterion_9_large_ladder(acceptance_log, geo8, basis8):
    L12 = 12
    start = time.time()
    basis12 = enumerate_sector(L12, L12)
    H12 = build_hamiltonian(LadderGeometry.default(L12), Stark(2.0), basis12)
    H8 = build_hamiltonian(geo8, Stark(2.0), basis8)
    t_ns = np.array([0.0, 100.0, 200.0, 400.0, 600.0, 800.0])
    taus = ns_to_tau(t_ns)

    def norm_pe(H, basis, text):
        # a larger Krylov space takes ~3x fewer steps on the wide Stark spectrum
        traj = evolve(H, product(basis, text), taus, KrylovParams(m=30, max_step=10.0),
                      observe=lambda t, s: participation_entropy(probabilities(s)) / np.log(basis.dim),
                      keep_states=False)
        return np.array(traj.records)

    pe12 = norm_pe(H12, basis12, "111000000111")
    elapsed = time.time() - start
    pe8 = norm_pe(H8, basis8, PSI2)
    below = bool(np.all(pe12[1:] < pe8[1:]))
    ok = below and elapsed < 3600
    report(acceptance_log, 9, ok,
           f"[extended] L=12 dim {basis12.dim}: 0-800 ns in {elapsed / 60:.1f} min; normalized PE "
           f"L=12 {np.round(pe12[1:], 3).tolist()} vs L=8 {np.round(pe8[1:], 3).tolist()}")

