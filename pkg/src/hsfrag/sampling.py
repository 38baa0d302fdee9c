"""Simulated single-shot readout, charge post-selection and plug-in estimators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPostselectionError
from .hamiltonian import make_rng
from .lattice import SectorBasis, format_configuration, hamming_distance, popcount


@dataclass(frozen=True, eq=False)
class ShotRecord:
    """Outcome histogram over the full 2L-bit outcome space."""

    configs: np.ndarray = field(repr=False)  # ascending uint64 masks
    counts: np.ndarray = field(repr=False)
    n_sites: int
    seed: int | None = None

    @property
    def n_shots(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {int(c): int(n) for c, n in zip(self.configs, self.counts)}

    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def _flip_masks(n: int, n_sites: int, eps: float, rng: np.random.Generator) -> np.ndarray:
    masks = np.zeros(n, dtype=np.uint64)
    for b in range(n_sites):
        masks |= (rng.random(n) < eps).astype(np.uint64) << np.uint64(b)
    return masks


def sample_shots(p: np.ndarray, basis: SectorBasis, n_shots: int, seed: int,
                 readout_flip: float = 0.0) -> ShotRecord:
    """Multinomial draw from p, then optional i.i.d. symmetric bit-flip readout error."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (basis.dim,):
        raise ValueError(f"probability vector has shape {p.shape}, sector {basis.dim}")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ValueError("p must be a normalized non-negative vector")
    if n_shots < 1:
        raise ValueError(f"need at least one shot, got {n_shots}")
    if not 0.0 <= readout_flip <= 1.0:
        raise ValueError(f"readout_flip must be in [0, 1], got {readout_flip}")
    rng = make_rng(seed)
    counts = rng.multinomial(n_shots, p / p.sum())
    hit = np.flatnonzero(counts)
    configs, counts = basis.states[hit], counts[hit]
    if readout_flip > 0:
        shots = np.repeat(configs, counts)
        shots ^= _flip_masks(shots.size, basis.n_sites, readout_flip, rng)
        configs, counts = np.unique(shots, return_counts=True)
    return ShotRecord(configs.astype(np.uint64), counts.astype(np.int64), basis.n_sites, seed)


def postselect(record: ShotRecord, Q: int) -> tuple[ShotRecord, float]:
    """Keep outcomes with exactly Q excitations; returns (kept record, acceptance fraction)."""
    keep = popcount(record.configs) == Q
    kept = int(record.counts[keep].sum())
    if kept == 0:
        raise EmptyPostselectionError(f"no shot has charge {Q}")
    out = ShotRecord(record.configs[keep], record.counts[keep], record.n_sites, record.seed)
    return out, kept / record.n_shots


def estimate_pe(record: ShotRecord, miller_madow: bool = False) -> float:
    """Plug-in entropy of the empirical outcome frequencies."""
    f = record.frequencies()
    f = f[f > 0]
    s = float(0.0 - (f * np.log(f)).sum())
    if miller_madow:
        s += (f.size - 1) / (2.0 * record.n_shots)
    return s


def estimate_imbalance(record: ShotRecord, config: int) -> tuple[float, float]:
    """Mean and sample standard deviation of the per-shot imbalance."""
    n = record.n_shots
    if n < 2:
        raise ValueError("need at least two shots for a spread estimate")
    L = record.n_sites // 2
    vals = 1.0 - hamming_distance(record.configs, np.uint64(config)) / L
    mean = float(vals @ record.counts / n)
    var = float(((vals - mean) ** 2) @ record.counts / (n - 1))
    return mean, float(np.sqrt(var))


def empirical_distribution(record: ShotRecord, basis: SectorBasis) -> np.ndarray:
    """Frequencies on the sector basis; out-of-sector outcomes are ignored."""
    inside = basis.contains(record.configs)
    p = np.zeros(basis.dim)
    p[basis.index(record.configs[inside])] = record.counts[inside]
    return p / record.n_shots


def write_shots(path, record: ShotRecord) -> None:
    L = record.n_sites // 2
    with open(path, "w") as fh:
        fh.write("configuration_bits,count\n")
        for c, n in zip(record.configs, record.counts):
            fh.write(f"{format_configuration(int(c), L)},{int(n)}\n")
