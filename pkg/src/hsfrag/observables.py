"""Diagnostics of states and trajectories.

All entropies use the natural logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .lattice import SectorBasis, domain_wall_count, hamming_distance

EULER_GAMMA = 0.5772156649015329


def probabilities(psi: np.ndarray) -> np.ndarray:
    return np.abs(psi) ** 2


def _xlogx(p: np.ndarray) -> np.ndarray:
    safe = np.where(p > 0, p, 1.0)
    return np.where(p > 0, p * np.log(safe), 0.0)


def participation_entropy(p: np.ndarray) -> float | np.ndarray:
    """Shannon entropy of a probability vector; columns of a 2-D array are separate vectors."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    s = 0.0 - _xlogx(p).sum(axis=0)
    return float(s) if np.ndim(s) == 0 else s


def pe_goe(N: int) -> float:
    """Participation entropy of a random real unit vector of dimension N."""
    return float(np.log(N) - 2.0 + np.log(2.0) + EULER_GAMMA)


def pe_gue(N: int) -> float:
    """Participation entropy of a random complex unit vector of dimension N."""
    return float(np.log(N) - 1.0 + EULER_GAMMA)


def _check_dim(v, basis: SectorBasis):
    if np.shape(v)[0] != basis.dim:
        raise ValueError(f"vector has dimension {np.shape(v)[0]}, sector {basis.dim}")


def imbalance(psi: np.ndarray, config: int, basis: SectorBasis) -> float:
    """Generalized imbalance (1/2L) sum_s s_site(0) <sigma^z_site(t)>.

    For every basis state the site sum equals 2L - 2 * hamming(state, config).
    """
    _check_dim(psi, basis)
    weight = 1.0 - hamming_distance(basis.states, np.uint64(config)) / basis.L
    return float(probabilities(psi) @ weight)


def site_magnetization(psi: np.ndarray, basis: SectorBasis) -> np.ndarray:
    """<sigma^z> per site in bit order (+1 = excited)."""
    _check_dim(psi, basis)
    p = probabilities(psi)
    shifts = np.arange(basis.n_sites, dtype=np.uint64)
    bits = ((basis.states[:, None] >> shifts) & np.uint64(1)).astype(np.float64)
    return p @ (2.0 * bits - 1.0)


@lru_cache(maxsize=8)
def _wall_table(basis: SectorBasis) -> np.ndarray:
    return domain_wall_count(basis.states, basis.L)


def domain_wall_expectation(psi: np.ndarray, basis: SectorBasis) -> float | np.ndarray:
    """Expected domain-wall number; columns of a 2-D array are separate states."""
    _check_dim(psi, basis)
    out = _wall_table(basis) @ probabilities(psi)
    return float(out) if np.ndim(out) == 0 else out


# --- entanglement -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _CutLayout:
    blocks: list  # (rows, cols, state ordinals, n_rows, n_cols) per left charge


@lru_cache(maxsize=16)
def _cut_layout(basis: SectorBasis, cut: int) -> _CutLayout:
    nb = 2 * cut
    lmask = np.uint64((1 << nb) - 1)
    left = basis.states & lmask
    right = basis.states >> np.uint64(nb)
    qleft = np.bitwise_count(left)
    blocks = []
    for q in np.unique(qleft):
        sel = np.flatnonzero(qleft == q)
        lu, rows = np.unique(left[sel], return_inverse=True)
        ru, cols = np.unique(right[sel], return_inverse=True)
        blocks.append((rows, cols, sel, lu.size, ru.size))
    return _CutLayout(blocks)


def entanglement_entropy(psi: np.ndarray, basis: SectorBasis, cut: int | None = None):
    """Von Neumann entropy of the left ``cut`` rungs (default: half ladder).

    The state is split into fixed-left-charge blocks; each block's coefficient
    matrix contributes its squared singular values. Columns of a 2-D array are
    separate states.
    """
    if cut is None:
        cut = basis.L // 2
    if not 1 <= cut < basis.L:
        raise ValueError(f"cut must be in 1..{basis.L - 1}, got {cut}")
    _check_dim(psi, basis)
    psi = np.asarray(psi)
    single = psi.ndim == 1
    if single:
        psi = psi[:, None]
    k = psi.shape[1]
    S = np.zeros(k)
    for rows, cols, sel, nr, nc in _cut_layout(basis, cut).blocks:
        M = np.zeros((k, nr, nc), dtype=psi.dtype)
        M[:, rows, cols] = psi[sel].T
        lam = np.linalg.svd(M, compute_uv=False) ** 2
        S -= _xlogx(lam).sum(axis=1)
    return float(S[0]) if single else S


# --- numerical Krylov subspaces ------------------------------------------------

def _sorted_order(p: np.ndarray) -> np.ndarray:
    # ties keep ascending basis ordinal
    return np.argsort(p, kind="stable")


def cdf(p: np.ndarray) -> np.ndarray:
    """Cumulative sum of the probabilities sorted in non-decreasing order."""
    p = np.asarray(p, dtype=np.float64)
    return np.cumsum(p[_sorted_order(p)])


@dataclass(frozen=True, eq=False)
class KrylovSubset:
    indices: np.ndarray = field(repr=False)  # sorted basis ordinals
    sector: tuple  # (L, Q, dim)
    delta: float
    tau: float | None = None
    retained: float = float("nan")

    @property
    def dim(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.dim


def krylov_subset(p: np.ndarray, delta: float, basis: SectorBasis | None = None,
                  tau: float | None = None) -> KrylovSubset:
    """Drop the longest low-probability prefix with cumulative mass <= delta; keep the rest."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    p = np.asarray(p, dtype=np.float64)
    order = _sorted_order(p)
    cum = np.cumsum(p[order])
    n_drop = int(np.searchsorted(cum, delta, side="right"))
    kept = np.sort(order[n_drop:])
    sector = (basis.L, basis.Q, basis.dim) if basis is not None else (None, None, p.size)
    return KrylovSubset(kept, sector, delta, tau, float(p[kept].sum()))


def numerical_krylov_subspace(snapshots, delta: float, basis: SectorBasis | None = None,
                              times=None) -> KrylovSubset:
    """Largest per-snapshot subset (earliest wins ties).

    ``snapshots`` is a Trajectory, or an iterable of state vectors.
    """
    if hasattr(snapshots, "states"):
        times = snapshots.times if times is None else times
        snapshots = snapshots.states
    best = None
    for k, psi in enumerate(snapshots):
        sub = krylov_subset(probabilities(psi), delta, basis,
                            None if times is None else float(times[k]))
        if best is None or sub.dim > best.dim:
            best = sub
    if best is None:
        raise ValueError("empty trajectory")
    return best


def running_krylov_subspaces(snapshots, delta: float, basis: SectorBasis | None = None,
                             times=None):
    """Per snapshot: (K_delta(t), K_delta up to t)."""
    best = None
    out = []
    for k, psi in enumerate(snapshots):
        sub = krylov_subset(probabilities(psi), delta, basis,
                            None if times is None else float(times[k]))
        if best is None or sub.dim > best.dim:
            best = sub
        out.append((sub, best))
    return out


def subspace_overlap(A: KrylovSubset, B: KrylovSubset) -> float:
    """|A n B| / |A u B| (1 when both are empty)."""
    if A.sector != B.sector:
        raise ValueError(f"subsets come from different sectors {A.sector} vs {B.sector}")
    inter = np.intersect1d(A.indices, B.indices, assume_unique=True).size
    union = A.dim + B.dim - inter
    return 1.0 if union == 0 else inter / union


def random_state(dim: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    v = rng.standard_normal(dim)
    if not real:
        v = v + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_state_overlap(dim: int, delta: float, n_pairs: int = 1000,
                         seed: int = 0) -> tuple[float, float]:
    """Monte Carlo mean and standard deviation of eta between two random complex states."""
    rng = np.random.default_rng(seed)
    sector = (None, None, dim)
    etas = np.empty(n_pairs)
    for k in range(n_pairs):
        a = krylov_subset(probabilities(random_state(dim, rng)), delta)
        b = krylov_subset(probabilities(random_state(dim, rng)), delta)
        etas[k] = subspace_overlap(KrylovSubset(a.indices, sector, delta),
                                   KrylovSubset(b.indices, sector, delta))
    return float(etas.mean()), float(etas.std(ddof=1)) if n_pairs > 1 else 0.0
