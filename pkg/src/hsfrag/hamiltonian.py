"""Sector-restricted XX-ladder Hamiltonian with an on-site potential.

H = sum_edges J (s+_a s-_b + h.c.) + sum_sites W_site n_site, with hbar = 1 and
energies in units of the mean nearest-neighbour coupling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.sparse as sp

from .lattice import LadderGeometry, SectorBasis, site_bit


# --- potentials -------------------------------------------------------------

@dataclass(frozen=True)
class Stark:
    gamma: float


@dataclass(frozen=True)
class RandomUniform:
    W: float
    seed: int


@dataclass(frozen=True)
class Explicit:
    values: tuple[float, ...]  # bit order


PotentialSpec = Union[Stark, RandomUniform, Explicit]


def derive_seed(seed: int, realization: int) -> int:
    """Seed of disorder realization ``realization``: seed XOR a stable 64-bit hash of the index."""
    h = hashlib.blake2b(f"realization:{realization}".encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(h, "little")) & ((1 << 64) - 1)


def make_rng(seed: int) -> np.random.Generator:
    # Philox is counter-based: streams are reproducible from the key alone
    return np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))


def resolve_potential(spec: PotentialSpec, geometry: LadderGeometry) -> np.ndarray:
    """Per-site on-site energies in bit order."""
    n = geometry.n_sites
    if isinstance(spec, Stark):
        if spec.gamma < 0:
            raise ValueError(f"Stark gradient must be >= 0, got {spec.gamma}")
        rung = np.arange(n) // 2 + 1
        return -spec.gamma * rung.astype(np.float64)
    if isinstance(spec, RandomUniform):
        if spec.W < 0:
            raise ValueError(f"disorder half-width must be >= 0, got {spec.W}")
        return make_rng(spec.seed).uniform(-spec.W, spec.W, size=n)
    if isinstance(spec, Explicit):
        values = np.asarray(spec.values, dtype=np.float64)
        if values.shape != (n,):
            raise ValueError(f"explicit potential needs {n} values, got {values.size}")
        return values.copy()
    raise TypeError(f"unknown potential spec {spec!r}")


def load_potential_file(path, L: int) -> Explicit:
    """Read ``j m W`` lines; every site must be given exactly once."""
    values = np.full(2 * L, np.nan)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'j m W', got {raw.strip()!r}")
            j, m = int(parts[0]), int(parts[1])
            if not (1 <= j <= L and m in (1, 2)):
                raise ValueError(f"{path}:{lineno}: site ({j}, {m}) not on an L={L} ladder")
            b = site_bit(j, m)
            if not np.isnan(values[b]):
                raise ValueError(f"{path}:{lineno}: site ({j}, {m}) given twice")
            values[b] = float(parts[2])
    if np.isnan(values).any():
        missing = [(b // 2 + 1, b % 2 + 1) for b in np.flatnonzero(np.isnan(values))]
        raise ValueError(f"{path}: missing potential for sites {missing}")
    return Explicit(tuple(values))


# --- operator ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    basis: SectorBasis
    potential: np.ndarray = field(repr=False)  # per site, bit order
    diagonal: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)  # full symmetric matrix, both triangles

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def norm1(self) -> float:
        """Max absolute column sum."""
        if self.dim == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=0).max())

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return apply(self, v)


def build_hamiltonian(geometry: LadderGeometry, spec: PotentialSpec | np.ndarray,
                      basis: SectorBasis) -> SparseHamiltonian:
    if geometry.L != basis.L:
        raise ValueError(f"geometry has L={geometry.L} but basis has L={basis.L}")
    if isinstance(spec, np.ndarray):
        potential = np.asarray(spec, dtype=np.float64)
        if potential.shape != (geometry.n_sites,):
            raise ValueError("potential array has the wrong length")
    else:
        potential = resolve_potential(spec, geometry)

    states = basis.states
    n = basis.dim
    one = np.uint64(1)
    diagonal = np.zeros(n)
    for b in range(geometry.n_sites):
        if potential[b] != 0.0:
            diagonal += potential[b] * ((states >> np.uint64(b)) & one)

    rows, cols, vals = [np.arange(n)], [np.arange(n)], [diagonal]
    for e in geometry.edges:
        ba, bb = np.uint64(e.a), np.uint64(e.b)
        differ = ((states >> ba) ^ (states >> bb)) & one
        src = np.flatnonzero(differ)
        # basis.index raises if a hop ever leaves the charge sector
        dst = basis.index(states[src] ^ ((one << ba) | (one << bb)))
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.size, e.J))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return SparseHamiltonian(basis, potential, diagonal, mat)


def apply(H: SparseHamiltonian, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != H.dim:
        raise ValueError(f"vector has dimension {v.shape[0]}, Hamiltonian {H.dim}")
    if np.iscomplexobj(v):
        # keep the matrix real: two real products avoid a complex copy of the data
        return H.matrix @ v.real + 1j * (H.matrix @ v.imag)
    return H.matrix @ v


def expectation(H: SparseHamiltonian, v: np.ndarray) -> float:
    return float(np.vdot(v, apply(H, v)).real)
