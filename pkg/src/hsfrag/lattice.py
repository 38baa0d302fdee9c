"""Ladder geometry, bitmask configurations and fixed-charge sector bases.

Site (j, m) with rung j = 1..L and leg m = 1, 2 lives on bit ``2*(j-1) + (m-1)``;
a set bit means the qubit is excited.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

MAX_RUNGS = 32
# above this many sites the sector is built from combinations instead of a mask scan
_SCAN_LIMIT_SITES = 26


def site_bit(j: int, m: int) -> int:
    return 2 * (j - 1) + (m - 1)


def bit_site(bit: int) -> tuple[int, int]:
    return bit // 2 + 1, bit % 2 + 1


@dataclass(frozen=True)
class Edge:
    a: int  # bit index
    b: int
    J: float


@dataclass(frozen=True)
class LadderGeometry:
    """An L x 2 ladder and its hopping graph (couplings in units of the mean NN coupling)."""

    L: int
    edges: tuple[Edge, ...]

    def __post_init__(self):
        if not 1 <= self.L <= MAX_RUNGS:
            raise ValueError(f"rung count must be in 1..{MAX_RUNGS}, got {self.L}")
        seen = set()
        for e in self.edges:
            if e.a == e.b:
                raise ValueError(f"edge joins a site to itself: {e}")
            if not (0 <= e.a < self.n_sites and 0 <= e.b < self.n_sites):
                raise ValueError(f"edge references a site outside the ladder: {e}")
            key = (min(e.a, e.b), max(e.a, e.b))
            if key in seen:
                raise ValueError(f"duplicate edge {bit_site(key[0])}-{bit_site(key[1])}")
            seen.add(key)

    @property
    def n_sites(self) -> int:
        return 2 * self.L

    @classmethod
    def default(cls, L: int, J_leg: float = 1.0, J_rung: float = 1.0,
                J_diag: float = 1.0 / 6.0) -> "LadderGeometry":
        edges = []
        for j in range(1, L + 1):
            edges.append(Edge(site_bit(j, 1), site_bit(j, 2), J_rung))
            if j < L:
                for m in (1, 2):
                    edges.append(Edge(site_bit(j, m), site_bit(j + 1, m), J_leg))
                if J_diag != 0.0:
                    edges.append(Edge(site_bit(j, 1), site_bit(j + 1, 2), J_diag))
                    edges.append(Edge(site_bit(j, 2), site_bit(j + 1, 1), J_diag))
        return cls(L, tuple(edges))

    @classmethod
    def from_coupling_file(cls, path, L: int) -> "LadderGeometry":
        """Read ``j1 m1 j2 m2 J`` lines ('#' starts a comment)."""
        edges = []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 5:
                    raise ValueError(f"{path}:{lineno}: expected 'j1 m1 j2 m2 J', got {raw.strip()!r}")
                j1, m1, j2, m2 = (int(x) for x in parts[:4])
                for j, m in ((j1, m1), (j2, m2)):
                    if not (1 <= j <= L and m in (1, 2)):
                        raise ValueError(f"{path}:{lineno}: site ({j}, {m}) not on an L={L} ladder")
                edges.append(Edge(site_bit(j1, m1), site_bit(j2, m2), float(parts[4])))
        return cls(L, tuple(edges))


# --- configurations -------------------------------------------------------

def popcount(c):
    if isinstance(c, (int, np.integer)):
        return int(c).bit_count()
    return np.bitwise_count(np.asarray(c, dtype=np.uint64)).astype(np.int64)


def parse_configuration(text: str, L: int) -> int:
    """Parse a '0'/'1' string, site (1,1) first.

    A string of length L is the leg-doubled shorthand: each character sets both
    qubits of its rung.
    """
    text = text.strip().strip("|⟩>")
    if set(text) - {"0", "1"}:
        raise ValueError(f"configuration must contain only 0/1: {text!r}")
    if len(text) == 2 * L:
        bits = text
    elif len(text) == L:
        bits = "".join(ch * 2 for ch in text)
    else:
        raise ValueError(f"configuration {text!r} has length {len(text)}; expected {L} or {2 * L}")
    return sum(1 << k for k, ch in enumerate(bits) if ch == "1")


def format_configuration(c: int, L: int, shorthand: bool = False) -> str:
    bits = "".join("1" if (c >> k) & 1 else "0" for k in range(2 * L))
    if shorthand:
        if any(bits[2 * j] != bits[2 * j + 1] for j in range(L)):
            raise ValueError("configuration is not leg-symmetric")
        return bits[::2]
    return bits


def _spins(c, L: int) -> np.ndarray:
    """+-1 per site, shape (..., 2L)."""
    c = np.asarray(c, dtype=np.uint64)
    shifts = np.arange(2 * L, dtype=np.uint64)
    bits = (c[..., None] >> shifts) & np.uint64(1)
    return 2.0 * bits.astype(np.float64) - 1.0


def domain_wall_count(c, L: int):
    """Sum over neighbouring rungs of (1 - sbar_j sbar_{j+1}) / 2 with sbar the rung-averaged spin.

    Works on a single mask or an array of masks.
    """
    s = _spins(c, L)
    sbar = 0.5 * (s[..., 0::2] + s[..., 1::2])
    walls = 0.5 * (1.0 - sbar[..., :-1] * sbar[..., 1:]).sum(axis=-1)
    return float(walls) if np.ndim(walls) == 0 else walls


def dipole_moment(c):
    """Sum of rung indices j over excited sites."""
    if isinstance(c, (int, np.integer)):
        c = int(c)
        return float(sum(k // 2 + 1 for k in range(c.bit_length()) if (c >> k) & 1))
    c = np.asarray(c, dtype=np.uint64)
    out = np.zeros(c.shape)
    for k in range(64):
        out += ((c >> np.uint64(k)) & np.uint64(1)) * float(k // 2 + 1)
    return out


def spin_flip(c, L: int):
    full = (1 << (2 * L)) - 1
    if isinstance(c, (int, np.integer)):
        return int(c) ^ full
    return np.asarray(c, dtype=np.uint64) ^ np.uint64(full)


def hamming_distance(a, b):
    if isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer)):
        return (int(a) ^ int(b)).bit_count()
    return popcount(np.asarray(a, dtype=np.uint64) ^ np.asarray(b, dtype=np.uint64))


def leg_exchange(c, L: int):
    """Swap the two legs on every rung."""
    c = np.asarray(c, dtype=np.uint64)
    even = np.uint64(sum(1 << (2 * j) for j in range(L)))
    out = ((c & even) << np.uint64(1)) | ((c >> np.uint64(1)) & even)
    return int(out) if out.ndim == 0 else out


def reflect(c, L: int):
    """Map rung j to rung L + 1 - j, legs kept."""
    c = np.asarray(c, dtype=np.uint64)
    out = np.zeros_like(c)
    three = np.uint64(3)
    for j in range(L):
        pair = (c >> np.uint64(2 * j)) & three
        out |= pair << np.uint64(2 * (L - 1 - j))
    return int(out) if out.ndim == 0 else out


# --- sector basis ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SectorBasis:
    L: int
    Q: int
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_sites(self) -> int:
        return 2 * self.L

    def __len__(self):
        return self.dim

    def index(self, c) -> np.ndarray | int:
        """Ordinal(s) of configuration(s); KeyError when absent."""
        scalar = np.ndim(c) == 0
        c = np.atleast_1d(np.asarray(c, dtype=np.uint64))
        idx = np.searchsorted(self.states, c)
        ok = idx < self.dim
        ok[ok] = self.states[idx[ok]] == c[ok]
        if not ok.all():
            bad = int(c[~ok][0])
            raise KeyError(f"configuration {format_configuration(bad, self.L)} not in sector "
                           f"L={self.L}, Q={self.Q}")
        return int(idx[0]) if scalar else idx

    def contains(self, c) -> np.ndarray | bool:
        c = np.asarray(c, dtype=np.uint64)
        idx = np.minimum(np.searchsorted(self.states, c), self.dim - 1)
        hit = self.states[idx] == c
        return bool(hit) if hit.ndim == 0 else hit


def enumerate_sector(L: int, Q: int) -> SectorBasis:
    if not 1 <= L <= MAX_RUNGS:
        raise ValueError(f"rung count must be in 1..{MAX_RUNGS}, got {L}")
    n = 2 * L
    if not 0 <= Q <= n:
        raise ValueError(f"charge Q={Q} outside 0..{n}")
    if n <= _SCAN_LIMIT_SITES:
        allmasks = np.arange(1 << n, dtype=np.uint64)
        states = allmasks[np.bitwise_count(allmasks) == Q]
    else:
        states = np.fromiter(
            (sum(1 << k for k in combo) for combo in combinations(range(n), Q)),
            dtype=np.uint64, count=comb(n, Q))
        states.sort()
    states.setflags(write=False)
    return SectorBasis(L, Q, states)


def state_index(basis: SectorBasis, c) -> int:
    return basis.index(c)
