"""Exact diagonalization, symmetry blocks and eigenstate statistics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .errors import CapacityError, DegenerateSpectrumError
from .hamiltonian import SparseHamiltonian
from .lattice import leg_exchange, reflect, spin_flip

DENSE_LIMIT = 20_000
DEGENERACY_RTOL = 1e-12


# --- lattice symmetries -----------------------------------------------------

_GENERATORS = ("leg", "reflect", "flip")


def _apply_word(word, states, L):
    out = states
    if word[0]:
        out = leg_exchange(out, L)
    if word[1]:
        out = reflect(out, L)
    if word[2]:
        out = spin_flip(out, L)
    return out


def symmetry_group(H: SparseHamiltonian, rtol: float = 1e-10):
    """Commuting Z2 lattice symmetries of H.

    Candidates are products of leg exchange, rung reflection and global spin flip
    (the latter only maps the sector to itself at half filling). Returns a list of
    independent generators, each a (name, permutation-of-ordinals) pair.
    """
    basis = H.basis
    L = basis.L
    scale = max(H.norm1, 1.0)
    valid = []
    for word in itertools.product((0, 1), repeat=3):
        if not any(word):
            continue
        if word[2] and 2 * basis.Q != basis.n_sites:
            continue
        perm = basis.index(_apply_word(word, basis.states, L))
        diff = H.matrix[perm][:, perm] - H.matrix
        if diff.nnz == 0 or abs(diff).max() <= rtol * scale:
            valid.append(word)
    # GF(2) basis of the subgroup spanned by the valid words
    gens, span = [], {(0, 0, 0)}
    for word in valid:
        if word in span:
            continue
        gens.append(word)
        span |= {tuple((a + b) % 2 for a, b in zip(word, s)) for s in span}
    out = []
    for word in gens:
        name = "*".join(g for g, w in zip(_GENERATORS, word) if w)
        out.append((name, basis.index(_apply_word(word, basis.states, L))))
    return out


@dataclass(frozen=True, eq=False)
class SymmetryBlock:
    label: str  # e.g. "leg=+1,reflect*flip=-1"
    isometry: sp.csr_matrix = field(repr=False)  # N x n_block, orthonormal columns

    @property
    def size(self) -> int:
        return self.isometry.shape[1]


def symmetry_blocks(H: SparseHamiltonian, generators=None) -> list[SymmetryBlock]:
    """Orthonormal symmetry-adapted bases, one per joint character of the generators."""
    if generators is None:
        generators = symmetry_group(H)
    n = H.dim
    if not generators:
        return [SymmetryBlock("trivial", sp.identity(n, format="csr"))]
    k = len(generators)
    # all group elements as (exponent vector, permutation)
    elements = []
    for exps in itertools.product((0, 1), repeat=k):
        perm = np.arange(n)
        for e, (_, g) in zip(exps, generators):
            if e:
                perm = g[perm]
        elements.append((np.array(exps), perm))
    # orbit representative = smallest ordinal in the orbit
    images = np.stack([perm for _, perm in elements])  # |G| x n
    rep = images.min(axis=0)
    reps = np.flatnonzero(rep == np.arange(n))

    blocks = []
    for signs in itertools.product((1, -1), repeat=k):
        chars = np.array([np.prod([s for s, e in zip(signs, exps) if e]) for exps, _ in elements],
                         dtype=np.float64)
        # column for each representative r: sum_g chi(g) |g r>
        rows = images[:, reps].ravel()
        cols = np.tile(np.arange(reps.size), len(elements))
        vals = np.repeat(chars, reps.size)
        B = sp.csr_matrix((vals, (rows, cols)), shape=(n, reps.size))
        B.sum_duplicates()
        B.eliminate_zeros()
        norms = np.sqrt(np.asarray(B.multiply(B).sum(axis=0))).ravel()
        keep = np.flatnonzero(norms > 1e-9)
        B = B[:, keep] @ sp.diags(1.0 / norms[keep])
        if B.shape[1]:
            label = ",".join(f"{name}={s:+d}" for (name, _), s in zip(generators, signs))
            blocks.append(SymmetryBlock(label, sp.csr_matrix(B)))
    assert sum(b.size for b in blocks) == n
    return blocks


def block_matrix(H: SparseHamiltonian, block: SymmetryBlock) -> np.ndarray:
    B = block.isometry
    return (B.T @ (H.matrix @ B)).toarray()


# --- decomposition ----------------------------------------------------------

@dataclass(eq=False)
class EigenDecomposition:
    """Full spectrum with eigenvectors kept per symmetry block.

    ``energies`` is globally ascending; ``vectors`` materializes the N x N matrix
    (column n is |E_n>) on first access.
    """

    energies: np.ndarray
    blocks: list[SymmetryBlock]
    block_energies: list[np.ndarray]
    block_vectors: list[np.ndarray]
    positions: list[np.ndarray]  # global index of each block eigenvalue
    _vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def vectors(self) -> np.ndarray:
        if self._vectors is None:
            out = np.empty((self.dim, self.dim))
            for blk, V, pos in zip(self.blocks, self.block_vectors, self.positions):
                out[:, pos] = blk.isometry @ V
            self._vectors = out
        return self._vectors

    def iter_vectors(self, chunk: int = 512):
        """Yield (global indices, N x k eigenvector chunk) without building the full matrix."""
        for blk, V, pos in zip(self.blocks, self.block_vectors, self.positions):
            for s in range(0, V.shape[1], chunk):
                yield pos[s:s + chunk], blk.isometry @ V[:, s:s + chunk]

    def expand(self, psi: np.ndarray) -> np.ndarray:
        """Coefficients <E_n|psi> in global order."""
        psi = np.asarray(psi)
        if psi.shape[0] != self.dim:
            raise ValueError(f"state has dimension {psi.shape[0]}, eigenbasis {self.dim}")
        out = np.zeros(self.dim, dtype=np.result_type(psi.dtype, np.float64))
        for blk, V, pos in zip(self.blocks, self.block_vectors, self.positions):
            out[pos] = V.T @ (blk.isometry.T @ psi)
        return out

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.result_type(coeffs.dtype, np.float64))
        for blk, V, pos in zip(self.blocks, self.block_vectors, self.positions):
            out += blk.isometry @ (V @ coeffs[pos])
        return out

    def block_of(self) -> np.ndarray:
        """Block number of every global eigenvalue."""
        out = np.empty(self.dim, dtype=np.int64)
        for b, pos in enumerate(self.positions):
            out[pos] = b
        return out


def diagonalize(H: SparseHamiltonian, dense_limit: int = DENSE_LIMIT,
                use_symmetry: bool = True) -> EigenDecomposition:
    if H.dim > dense_limit:
        raise CapacityError(f"sector dimension {H.dim} exceeds the dense limit {dense_limit}; "
                            "use the Krylov propagator for this size")
    if use_symmetry:
        blocks = symmetry_blocks(H)
    else:
        blocks = [SymmetryBlock("trivial", sp.identity(H.dim, format="csr"))]
    energies, vectors = [], []
    for blk in blocks:
        e, v = sla.eigh(block_matrix(H, blk))
        energies.append(e)
        vectors.append(v)
    allE = np.concatenate(energies)
    order = np.argsort(allE, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    positions, start = [], 0
    for e in energies:
        positions.append(rank[start:start + e.size])
        start += e.size
    return EigenDecomposition(allE[order], blocks, energies, vectors, positions)


# --- conservation laws beyond the lattice symmetries ------------------------------

def rung_transform(basis) -> sp.csr_matrix:
    """Orthogonal change of basis to rung-symmetric/antisymmetric single occupations.

    Singly occupied rungs |10>, |01> become S = (|10> + |01>)/sqrt2 and
    A = (|10> - |01>)/sqrt2; S is stored as bit m=1 and A as bit m=2, so the new
    basis is indexed by the same ordinals. The matrix is symmetric and squares to 1.
    """
    s = basis.states
    low = np.uint64(int("01" * basis.L, 2))
    m1 = s & low
    m2 = (s >> np.uint64(1)) & low
    single = m1 ^ m2
    kind = m2 & single  # 1 where the rung holds |01> (or A)
    key = ((m1 & m2) << np.uint64(1)) | single  # occupation pattern
    order = np.argsort(key, kind="stable")
    cuts = np.flatnonzero(np.diff(key[order])) + 1
    rows, cols, vals = [], [], []
    for grp in np.split(order, cuts):
        k = int(np.bitwise_count(single[grp[0]]))
        t = kind[grp]
        sign = 1.0 - 2.0 * (np.bitwise_count(t[:, None] & t[None, :]) & 1)
        rows.append(np.repeat(grp, grp.size))
        cols.append(np.tile(grp, grp.size))
        vals.append((sign * 2.0 ** (-k / 2)).ravel())
    n = basis.dim
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def hidden_sectors(H: SparseHamiltonian, generators=None, rtol: float = 1e-12):
    """Invariant subspaces that are disconnected in the rung S/A basis.

    With bondwise leg-symmetric couplings and potential, S and A rung states cannot
    pass each other, which splits the charge sector beyond the lattice symmetries.
    Components that the lattice symmetries map onto each other share a label, so the
    labels commute with the symmetry blocks. Returns (transform, label per ordinal),
    or None when the rotated Hamiltonian is connected.
    """
    if generators is None:
        generators = symmetry_group(H)
    U = rung_transform(H.basis)
    Hr = (U @ H.matrix @ U).tocsr()
    Hr.data[np.abs(Hr.data) <= rtol * max(H.norm1, 1.0)] = 0.0
    Hr.eliminate_zeros()
    n_comp, comp = csgraph.connected_components(Hr, directed=False)
    if n_comp == 1:
        return None
    n = H.dim
    src, dst = [np.arange(n_comp)], [np.arange(n_comp)]
    for _, perm in generators:
        # lattice symmetries act as signed permutations in the rotated basis
        P = sp.csr_matrix((np.ones(n), (perm, np.arange(n))), shape=(n, n))
        image = np.asarray(abs(U @ P @ U).argmax(axis=0)).ravel()
        src.append(comp)
        dst.append(comp[image])
    src, dst = np.concatenate(src), np.concatenate(dst)
    graph = sp.csr_matrix((np.ones(src.size), (src, dst)), shape=(n_comp, n_comp))
    _, orbit = csgraph.connected_components(graph, directed=False)
    return U, orbit[comp]


def _split_block(Hb: np.ndarray, blk: SymmetryBlock, U, labels) -> list[np.ndarray]:
    """Orthonormal bases (in block coordinates) of each hidden sector inside a block."""
    C = (U @ blk.isometry).tocsr()
    K = (C.T @ sp.diags(labels + 1.0) @ C).toarray()
    kv, kV = sla.eigh(K)
    kl = np.rint(kv).astype(np.int64)
    if np.abs(kv - kl).max() > 1e-6:
        raise ArithmeticError("hidden sector labels do not commute with the symmetry block")
    return [kV[:, kl == v] for v in np.unique(kl)]


def block_spectra(H: SparseHamiltonian, dense_limit: int = DENSE_LIMIT,
                  resolve_hidden: bool = True) -> list[np.ndarray]:
    """Eigenvalues per symmetry block (no eigenvectors).

    With ``resolve_hidden`` each block is further split along ``hidden_sectors``.
    """
    if H.dim > dense_limit:
        raise CapacityError(f"sector dimension {H.dim} exceeds the dense limit {dense_limit}")
    gens = symmetry_group(H)
    hidden = hidden_sectors(H, gens) if resolve_hidden else None
    out = []
    for blk in symmetry_blocks(H, gens):
        Hb = block_matrix(H, blk)
        if hidden is None:
            out.append(sla.eigvalsh(Hb))
            continue
        for Qs in _split_block(Hb, blk, *hidden):
            out.append(sla.eigvalsh(Qs.T @ Hb @ Qs))
    return out


# --- statistics -------------------------------------------------------------

def _central(energies: np.ndarray, window: float) -> np.ndarray:
    n = energies.size
    drop = int(round(n * (1.0 - window) / 2.0))
    return energies[drop:n - drop]


def level_spacing_ratios(energies, window: float = 0.5):
    """Adjacent-gap ratios min(d_n, d_n+1) / max(d_n, d_n+1) over the central ``window`` fraction.

    Spacings below 1e-12 of the bandwidth are treated as exact degeneracies and merged.
    Returns (ratios, mean).
    """
    E = np.sort(np.asarray(energies, dtype=np.float64))
    if not 0 < window <= 1:
        raise ValueError(f"window must be in (0, 1], got {window}")
    E = _central(E, window)
    if E.size < 3:
        raise ValueError("need at least 3 levels in the window")
    width = E[-1] - E[0]
    d = np.diff(E)
    d = d[d > DEGENERACY_RTOL * width] if width > 0 else d[:0]
    if d.size < 2:
        raise DegenerateSpectrumError("all level spacings are degenerate")
    r = np.minimum(d[:-1], d[1:]) / np.maximum(d[:-1], d[1:])
    return r, float(r.mean())


def gap_ratios(H: SparseHamiltonian, window: float = 0.5, dense_limit: int = DENSE_LIMIT,
               resolve_hidden: bool = True) -> np.ndarray:
    """Gap ratios of every invariant block, each restricted to its own central window."""
    ratios = []
    for E in block_spectra(H, dense_limit, resolve_hidden):
        if E.size < 3:
            continue
        try:
            ratios.append(level_spacing_ratios(E, window)[0])
        except (DegenerateSpectrumError, ValueError):
            continue
    if not ratios:
        raise DegenerateSpectrumError("no symmetry block has enough non-degenerate levels")
    return np.concatenate(ratios)


def mean_gap_ratio(H: SparseHamiltonian, window: float = 0.5,
                   dense_limit: int = DENSE_LIMIT, resolve_hidden: bool = True) -> float:
    """<r> pooled over invariant blocks."""
    return float(gap_ratios(H, window, dense_limit, resolve_hidden).mean())


def normalized_energy(E, E_min: float, E_max: float):
    if not E_max > E_min:
        raise ValueError(f"degenerate energy bounds [{E_min}, {E_max}]")
    return (np.asarray(E) - E_min) / (E_max - E_min)


def eigenstate_occupations(psi0: np.ndarray, eig: EigenDecomposition) -> np.ndarray:
    """Diagonal-ensemble weights |<psi0|E_n>|^2."""
    return np.abs(eig.expand(psi0)) ** 2


def diagonal_ensemble_average(psi0, eig: EigenDecomposition, diag_observable) -> float:
    """Infinite-time average of a basis-diagonal observable, sum_n w_n <E_n|O|E_n>."""
    w = eigenstate_occupations(psi0, eig)
    total = 0.0
    for idx, vecs in eig.iter_vectors():
        total += w[idx] @ (np.asarray(diag_observable) @ vecs ** 2)
    return float(total)
