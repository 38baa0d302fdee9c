"""Lanczos-Krylov time evolution with adaptive steps, and a dense reference propagator."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import NumericalFailure
from .hamiltonian import SparseHamiltonian, apply
from .spectral import DENSE_LIMIT, EigenDecomposition, diagonalize

log = logging.getLogger(__name__)

BREAKDOWN_RTOL = 1e-12
NORM_DRIFT_WARN = 1e-9


@dataclass(frozen=True)
class KrylovParams:
    m: int = 15
    step_tol: float = 1e-10
    max_step: float = 1.0
    reorthogonalize: bool = True

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"Krylov dimension must be >= 2, got {self.m}")
        if not self.step_tol > 0:
            raise ValueError(f"step_tol must be > 0, got {self.step_tol}")
        if not self.max_step > 0:
            raise ValueError(f"max_step must be > 0, got {self.max_step}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray | None = None  # (n_times, dim) when retained
    records: list = field(default_factory=list)  # observer output per time
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


@dataclass
class LanczosResult:
    basis: np.ndarray  # dim x k, orthonormal columns
    alpha: np.ndarray  # k
    beta: np.ndarray  # k-1 off-diagonals
    residual: float  # beta_k, norm of the component leaving the space
    breakdown: bool

    @property
    def tridiagonal(self) -> np.ndarray:
        k = self.alpha.size
        T = np.diag(self.alpha)
        if k > 1:
            T += np.diag(self.beta, 1) + np.diag(self.beta, -1)
        return T


def lanczos_factorize(H: SparseHamiltonian, v0: np.ndarray, m: int,
                      reorthogonalize: bool = True, scale: float | None = None) -> LanczosResult:
    """m-step Lanczos: K^T H K = tridiag(alpha, beta) with K[:, 0] = v0."""
    nrm = np.linalg.norm(v0)
    if nrm == 0:
        raise ValueError("Lanczos start vector is zero")
    if scale is None:
        scale = H.norm1
    thresh = BREAKDOWN_RTOL * max(scale, 1e-300)
    m = min(m, H.dim)
    dtype = np.result_type(v0.dtype, np.float64)
    V = np.zeros((m, H.dim), dtype=dtype)  # rows are Lanczos vectors (contiguous)
    alpha = np.zeros(m)
    beta = np.zeros(max(m - 1, 0))
    V[0] = v0 / nrm
    residual = 0.0
    k = m
    for i in range(m):
        w = apply(H, V[i])
        alpha[i] = np.vdot(V[i], w).real
        w -= alpha[i] * V[i]
        if i > 0:
            w -= beta[i - 1] * V[i - 1]
        if reorthogonalize:
            # two passes of classical Gram-Schmidt against the whole block
            for _ in range(2):
                # conj(V) w computed as conj(V conj(w)) so the block is never copied
                w -= (V[:i + 1] @ w.conj()).conj() @ V[:i + 1]
        b = np.linalg.norm(w)
        if not np.isfinite(b):
            raise NumericalFailure(f"non-finite Lanczos vector at step {i}")
        if i == m - 1:
            residual = b
            break
        if b < thresh:
            k = i + 1
            residual = b
            break
        beta[i] = b
        V[i + 1] = w / b
    breakdown = k < m or residual < thresh
    return LanczosResult(V[:k].T, alpha[:k], beta[:k - 1], float(residual), bool(breakdown))


class _SmallExp:
    """exp(-i tau T) e_1 via the eigendecomposition of the small tridiagonal T."""

    def __init__(self, lz: LanczosResult):
        self.theta, U = sla.eigh_tridiagonal(lz.alpha, lz.beta) if lz.alpha.size > 1 else (
            lz.alpha.copy(), np.ones((1, 1)))
        self.U = U
        self.first = U[0, :]

    def __call__(self, tau: float) -> np.ndarray:
        return self.U @ (np.exp(-1j * tau * self.theta) * self.first)


def evolve(H: SparseHamiltonian, psi: np.ndarray, times, params: KrylovParams = KrylovParams(),
           observe: Callable[[float, np.ndarray], object] | None = None,
           keep_states: bool = True) -> Trajectory:
    """Krylov propagation of psi to every requested time.

    Each step accepts the largest trial step (starting from max_step, halving on
    rejection, growing 1.5x after five consecutive accepts) whose local error estimate
    beta_m |[exp(-i h T_m)]_{m,1}| is below step_tol.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or (times.size and (times[0] < 0 or np.any(np.diff(times) < 0))):
        raise ValueError("target times must be non-negative and ascending")
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (H.dim,):
        raise ValueError(f"state has shape {psi.shape}, expected ({H.dim},)")
    n0 = np.linalg.norm(psi)
    if abs(n0 - 1.0) > 1e-9:
        raise ValueError(f"initial state must be normalized (norm {n0})")

    scale = H.norm1
    states = np.empty((times.size, H.dim), dtype=np.complex128) if keep_states else None
    records = []
    info = {"steps": 0, "rejected": 0, "breakdown": False, "max_norm_drift": 0.0,
            "error_estimate_sum": 0.0}
    t = 0.0
    h = params.max_step
    streak = 0
    current = psi.copy()

    def emit(k):
        if keep_states:
            states[k] = current
        if observe is not None:
            records.append(observe(times[k], current))

    for k, target in enumerate(times):
        while target - t > 1e-14 * max(1.0, target):
            lz = lanczos_factorize(H, current, params.m, params.reorthogonalize, scale)
            small = _SmallExp(lz)
            remaining = target - t
            if lz.breakdown:
                # invariant subspace: the projected exponential is exact for any step
                step = remaining
                info["breakdown"] = True
                coeffs = small(step)
                err = 0.0
            else:
                while True:
                    step = min(h, remaining)
                    coeffs = small(step)
                    err = lz.residual * abs(coeffs[-1])
                    if err <= params.step_tol:
                        break
                    h = step / 2
                    streak = 0
                    info["rejected"] += 1
                    if h < 1e-14 * max(1.0, target):
                        raise NumericalFailure(f"Krylov step collapsed at t={t}")
            new = lz.basis @ coeffs
            if not np.all(np.isfinite(new)):
                raise NumericalFailure(f"non-finite amplitudes at t={t + step}")
            nrm = np.linalg.norm(new)
            drift = abs(nrm - 1.0)
            if drift > NORM_DRIFT_WARN:
                log.warning("norm drift %.3e in one Krylov step at t=%.6g", drift, t + step)
            info["max_norm_drift"] = max(info["max_norm_drift"], drift)
            info["error_estimate_sum"] += err
            current = new / nrm
            t = target if step == remaining else t + step
            info["steps"] += 1
            if step == h:
                streak += 1
                if streak >= 5:
                    h = min(1.5 * h, params.max_step)
                    streak = 0
        emit(k)
    return Trajectory(times, states, records, info)


def evolve_dense(H: SparseHamiltonian, psi: np.ndarray, tau: float,
                 eig: EigenDecomposition | None = None,
                 dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Exact exp(-i tau H) psi from the full eigendecomposition."""
    if eig is None:
        eig = diagonalize(H, dense_limit)
    c = eig.expand(np.asarray(psi, dtype=np.complex128))
    return eig.synthesize(np.exp(-1j * tau * eig.energies) * c)


# --- binary trajectory dump ---------------------------------------------------

TRAJ_MAGIC = b"FRAGTRAJ"
TRAJ_VERSION = 1
_HEADER = struct.Struct("<8sII")  # magic, version, dimension: 16 bytes


def write_trajectory(path, traj: Trajectory) -> None:
    if traj.states is None:
        raise ValueError("trajectory has no retained states")
    dim = traj.states.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TRAJ_MAGIC, TRAJ_VERSION, dim))
        for tau, vec in zip(traj.times, traj.states):
            fh.write(struct.pack("<d", float(tau)))
            fh.write(np.ascontiguousarray(vec, dtype="<c16").tobytes())


def read_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        magic, version, dim = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != TRAJ_MAGIC:
            raise ValueError(f"{path}: not a trajectory dump")
        if version != TRAJ_VERSION:
            raise ValueError(f"{path}: unsupported dump version {version}")
        rec = np.dtype([("tau", "<f8"), ("amp", "<c16", (dim,))])
        data = np.frombuffer(fh.read(), dtype=rec)
    return Trajectory(data["tau"].copy(), data["amp"].copy())
