"""Experiment drivers: quench trajectories, eigenstate surveys, fragmentation and sweeps.

Each driver writes CSV files whose first lines are ``#`` comments carrying the
config digest, package version and unit constants. Work units run on a bounded
thread pool; results are folded in unit order, so outputs do not depend on the
thread count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError, NumericalFailure
from .hamiltonian import SparseHamiltonian, build_hamiltonian
from .lattice import domain_wall_count, format_configuration, spin_flip
from .observables import (cdf, domain_wall_expectation, entanglement_entropy, imbalance,
                          krylov_subset, participation_entropy, probabilities,
                          random_state_overlap, subspace_overlap)
from .propagator import evolve
from .sampling import estimate_imbalance, estimate_pe, postselect, sample_shots
from .spectral import diagonalize, gap_ratios, normalized_energy

log = logging.getLogger(__name__)


class RunAborted(NumericalFailure):
    """A work unit failed; rerun with ``resume`` set to ``realization``."""

    def __init__(self, realization: int, cause: Exception):
        self.realization = realization
        super().__init__(f"realization {realization} failed ({cause}); "
                         f"resume with --resume {realization}")


@dataclass
class RunResult:
    files: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


# --- csv i/o ----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def header_lines(cfg: ExperimentConfig, kind: str, extra: dict | None = None) -> list[str]:
    lines = [
        f"hsfrag {__version__} run={kind} config={cfg.digest()}",
        f"units: hbar=1 energy=J_NN tau=2*pi*f_NN*t f_NN_MHz={cfg.system.f_NN_MHz!r}",
    ]
    if extra:
        lines.append(" ".join(f"{k}={_fmt(v)}" for k, v in extra.items()))
    return lines


def write_csv(path: Path, header: list[str], columns: list[str], rows) -> Path:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


LABEL_COLUMNS = {"state", "partner", "observable", "parameter"}


def read_columns(path) -> dict[str, np.ndarray]:
    """Columns by name: labels as strings, everything else as float."""
    names, rows = read_csv(path)
    out = {}
    for k, name in enumerate(names):
        col = [r[k] for r in rows]
        out[name] = np.array(col) if name in LABEL_COLUMNS else np.array(col, dtype=np.float64)
    return out


# --- helpers ----------------------------------------------------------------

def sub_seed(seed: int, *keys) -> int:
    """Independent 64-bit seed for a (realization, state, time, ...) tuple."""
    tag = ":".join(str(k) for k in keys).encode()
    h = hashlib.blake2b(tag, digest_size=8, key=int(seed).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little")


def _sem(values: np.ndarray) -> float:
    return float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else float("nan")


def _pool_map(fn, units, threads: int):
    if threads <= 1:
        return [fn(u) for u in units]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, units))


class _Models:
    """Per-realization Hamiltonians (and decompositions), built once under a lock."""

    def __init__(self, cfg: ExperimentConfig, dense: bool, value: float | None = None):
        self.cfg, self.dense, self.value = cfg, dense, value
        self.geometry = cfg.geometry()
        self.basis = cfg.basis()
        self._cache: dict[int, tuple] = {}
        self._locks: dict[int, threading.Lock] = {}
        self._guard = threading.Lock()

    def get(self, r: int):
        with self._guard:
            lock = self._locks.setdefault(r, threading.Lock())
        with lock:
            if r not in self._cache:
                H = build_hamiltonian(self.geometry, self.cfg.potential_spec(r, self.value), self.basis)
                eig = diagonalize(H, self.cfg.system.dense_limit) if self.dense else None
                self._cache[r] = (H, eig)
            return self._cache[r]

    def release(self, r: int):
        with self._guard:
            self._cache.pop(r, None)


def _product_state(basis, c: int) -> np.ndarray:
    psi = np.zeros(basis.dim, dtype=np.complex128)
    psi[basis.index(c)] = 1.0
    return psi


def trajectory(cfg: ExperimentConfig, H: SparseHamiltonian, eig, psi0: np.ndarray,
               taus: np.ndarray, observe) -> tuple[list, dict]:
    """Observer output at every tau, with either propagator."""
    if eig is None:
        traj = evolve(H, psi0, taus, cfg.krylov, observe=observe, keep_states=False)
        return traj.records, traj.info
    coeffs = eig.expand(psi0)
    records = []
    for tau in taus:
        psi = eig.synthesize(np.exp(-1j * tau * eig.energies) * coeffs)
        records.append(observe(tau, psi))
    return records, {"steps": 0, "rejected": 0, "max_norm_drift": 0.0}


def _state_tag(i: int, c: int, L: int) -> str:
    return f"s{i}_{format_configuration(c, L)}"


# --- quench -----------------------------------------------------------------

QUENCH_COLUMNS = ("imbalance", "pe", "ee", "ndw", "kdelta")
SHOT_COLUMNS = ("pe_shots", "imbalance_shots", "imbalance_shots_std", "acceptance")


def _quench_columns(cfg: ExperimentConfig) -> list[str]:
    cols = [c for c in QUENCH_COLUMNS if c in cfg.analyses.enabled]
    if cfg.sampling.mode == "shots":
        cols += list(SHOT_COLUMNS)
    return cols


def _quench_observer(cfg, basis, c0: int, r: int, i: int, cols: list[str]):
    a = cfg.analyses
    sm = cfg.sampling
    state = {"k": 0, "p": None}

    def observe(tau, psi):
        k = state["k"]
        state["k"] += 1
        p = probabilities(psi)
        state["p"] = p
        row = {}
        if "imbalance" in cols:
            row["imbalance"] = imbalance(psi, c0, basis)
        if "pe" in cols:
            row["pe"] = participation_entropy(p)
        if "ee" in cols:
            row["ee"] = entanglement_entropy(psi, basis, a.ee_cut)
        if "ndw" in cols:
            row["ndw"] = domain_wall_expectation(psi, basis)
        if "kdelta" in cols:
            row["kdelta"] = krylov_subset(p, a.delta, basis).dim
        if sm.mode == "shots":
            rec = sample_shots(p / p.sum(), basis, sm.shots, sub_seed(sm.seed, r, i, k),
                               sm.readout_flip)
            acc = 1.0
            if sm.postselect:
                rec, acc = postselect(rec, basis.Q)
            row["pe_shots"] = estimate_pe(rec)
            row["imbalance_shots"], row["imbalance_shots_std"] = estimate_imbalance(rec, c0)
            row["acceptance"] = acc
        return row

    return observe, state


def run_quench(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1,
               resume: int = 0) -> RunResult:
    """Per (realization, initial state) observable files plus mean/late-window aggregates."""
    if not cfg.initial_states:
        raise ConfigError("initial_states", "quench needs at least one initial state")
    out = Path(out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    n_real = cfg.n_realizations()
    if not 0 <= resume < n_real:
        raise ConfigError("resume", f"must be in 0..{n_real - 1}, got {resume}")
    states = cfg.configurations()
    L = cfg.system.L
    t_ns = cfg.time_grid_ns()
    taus = cfg.ns_to_tau(t_ns)
    cols = _quench_columns(cfg)
    models = _Models(cfg, dense=cfg.method == "dense")
    basis = models.basis
    result = RunResult()

    def unit_path(r, i):
        return out / f"quench_r{r:03d}_{_state_tag(i, states[i], L)}.csv"

    def run_unit(unit):
        r, i = unit
        H, eig = models.get(r)
        obs, last = _quench_observer(cfg, basis, states[i], r, i, cols)
        try:
            records, info = trajectory(cfg, H, eig, _product_state(basis, states[i]), taus, obs)
        except (NumericalFailure, FloatingPointError) as exc:
            raise RunAborted(r, exc) from exc
        rows = [[t, tau] + [rec[c] for c in cols] for t, tau, rec in zip(t_ns, taus, records)]
        extra = {"realization": r, "state": format_configuration(states[i], L),
                 "n_dw": int(domain_wall_count(states[i], L)),
                 "steps": info["steps"], "max_norm_drift": info["max_norm_drift"]}
        path = write_csv(unit_path(r, i), header_lines(cfg, "quench", extra),
                         ["t_ns", "tau"] + cols, rows)
        if "cdf" in cfg.analyses.enabled:
            cum = cdf(last["p"])
            write_csv(out / f"cdf_r{r:03d}_{_state_tag(i, states[i], L)}.csv",
                      header_lines(cfg, "quench-cdf", {**extra, "tau": float(taus[-1])}),
                      ["rank", "cdf"], zip(range(1, cum.size + 1), cum))
        return path

    for r in range(resume, n_real):
        # one realization at a time keeps at most one decomposition alive
        units = [(r, i) for i in range(len(states))]
        result.files += _pool_map(run_unit, units, threads)
        models.release(r)
        log.info("realization %d/%d done", r + 1, n_real)

    result.files += _aggregate_quench(cfg, out, states, cols, n_real, unit_path)
    return result


def _aggregate_quench(cfg, out, states, cols, n_real, unit_path) -> list[Path]:
    """Fold the per-unit files (including resumed ones) into mean and late-window tables."""
    L = cfg.system.L
    w0, w1 = cfg.times.window_ns
    mean_rows, late_rows = [], []
    for i, c in enumerate(states):
        data = []
        for r in range(n_real):
            path = unit_path(r, i)
            if not path.exists():
                raise ConfigError("resume", f"missing output of realization {r}: {path}")
            data.append(read_columns(path))
        t_ns, taus = data[0]["t_ns"], data[0]["tau"]
        win = (t_ns >= w0 - 1e-9) & (t_ns <= w1 + 1e-9)
        tag = format_configuration(c, L)
        ndw = int(domain_wall_count(c, L))
        stack = {col: np.stack([d[col] for d in data]) for col in cols}
        for k in range(t_ns.size):
            row = [tag, ndw, t_ns[k], taus[k]]
            for col in cols:
                v = stack[col][:, k]
                row += [float(v.mean()), _sem(v)]
            mean_rows.append(row)
        if win.any():
            for col in cols:
                per_real = stack[col][:, win].mean(axis=1)
                late_rows.append([tag, ndw, col, float(per_real.mean()), _sem(per_real), n_real])
    mean_cols = ["state", "n_dw", "t_ns", "tau"] + [f"{c}_{s}" for c in cols for s in ("mean", "sem")]
    files = [write_csv(out / "quench_mean.csv", header_lines(cfg, "quench", {"realizations": n_real}),
                       mean_cols, mean_rows)]
    if late_rows:
        files.append(write_csv(out / "quench_late.csv",
                               header_lines(cfg, "quench", {"window_ns": f"{w0!r}-{w1!r}"}),
                               ["state", "n_dw", "observable", "mean", "sem", "realizations"],
                               late_rows))
    else:
        log.warning("late window %s ns lies outside the time grid", cfg.times.window_ns)
    return files


# --- eigenstate survey --------------------------------------------------------

def run_eigensurvey(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1,
                    resume: int = 0) -> RunResult:
    """One row per eigenstate (n, E, eps, pe, [ee], ndw, occupations) and <r>."""
    out = Path(out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    n_real = cfg.n_realizations()
    states = cfg.configurations()
    L = cfg.system.L
    models = _Models(cfg, dense=True)
    basis = models.basis
    with_ee = "ee" in cfg.analyses.enabled
    result = RunResult()
    rstat_rows = []
    for r in range(resume, n_real):
        H, eig = models.get(r)
        E = eig.energies
        eps = normalized_energy(E, E[0], E[-1])
        pe = np.empty(E.size)
        ndw = np.empty(E.size)
        ee = np.empty(E.size) if with_ee else None
        occ = np.empty((len(states), E.size))
        rows_c = basis.index(np.array(states, dtype=np.uint64)) if states else np.array([], int)
        for idx, vecs in eig.iter_vectors():
            pe[idx] = participation_entropy(vecs ** 2)
            ndw[idx] = domain_wall_expectation(vecs, basis)
            if with_ee:
                ee[idx] = entanglement_entropy(vecs, basis, cfg.analyses.ee_cut)
            if states:
                occ[:, idx] = vecs[rows_c] ** 2
        cols = ["n", "E", "eps", "pe"] + (["ee"] if with_ee else []) + ["ndw"]
        cols += [f"occ_{format_configuration(c, L)}" for c in states]
        rows = []
        for n in range(E.size):
            row = [n, E[n], eps[n], pe[n]] + ([ee[n]] if with_ee else []) + [ndw[n]]
            rows.append(row + list(occ[:, n]))
        result.files.append(write_csv(out / f"eigensurvey_r{r:03d}.csv",
                                      header_lines(cfg, "eigensurvey", {"realization": r}),
                                      cols, rows))
        ratios = gap_ratios(H, cfg.analyses.rstat_window, cfg.system.dense_limit)
        rstat_rows.append([r, cfg.analyses.rstat_window, float(ratios.mean()), ratios.size])
        models.release(r)
    result.files.append(write_csv(out / "rstat.csv", header_lines(cfg, "eigensurvey"),
                                  ["realization", "window", "r_mean", "n_ratios"], rstat_rows))
    result.summary["r_mean"] = [row[2] for row in rstat_rows]
    return result


# --- fragmentation ------------------------------------------------------------

def _subset_series(cfg, H, eig, basis, c, taus):
    delta = cfg.analyses.delta
    records, _ = trajectory(cfg, H, eig, _product_state(basis, c), taus,
                            lambda tau, psi: krylov_subset(probabilities(psi), delta, basis, tau))
    running, best = [], None
    for sub in records:
        if best is None or sub.dim > best.dim:
            best = sub
        running.append(best)
    return records, running


def run_fragmentation(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1,
                      resume: int = 0) -> RunResult:
    """K_delta dimension and partner overlap eta over time for every initial state."""
    if cfg.system.Q != cfg.system.L:
        raise ConfigError("system.Q", "fragmentation pairs states with spin-flipped partners, needs Q = L")
    if not cfg.initial_states:
        raise ConfigError("initial_states", "fragmentation needs at least one initial state")
    out = Path(out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    L = cfg.system.L
    states = cfg.configurations()
    t_ns = cfg.time_grid_ns(cfg.analyses.kdelta_tau_ns)
    taus = cfg.ns_to_tau(t_ns)
    models = _Models(cfg, dense=cfg.method == "dense")
    basis = models.basis
    eta_ref, eta_ref_std = random_state_overlap(basis.dim, cfg.analyses.delta,
                                                cfg.analyses.eta_pairs, cfg.analyses.eta_seed)
    result = RunResult()
    summary_rows = []
    n_real = cfg.n_realizations()

    def run_unit(unit):
        r, i = unit
        H, eig = models.get(r)
        c = states[i]
        try:
            own, own_run = _subset_series(cfg, H, eig, basis, c, taus)
            par, par_run = _subset_series(cfg, H, eig, basis, int(spin_flip(c, L)), taus)
        except (NumericalFailure, FloatingPointError) as exc:
            raise RunAborted(r, exc) from exc
        rows = []
        for k in range(taus.size):
            rows.append([t_ns[k], taus[k], own[k].dim, par[k].dim, own_run[k].dim, par_run[k].dim,
                         subspace_overlap(own[k], par[k]), subspace_overlap(own_run[k], par_run[k])])
        extra = {"realization": r, "state": format_configuration(c, L),
                 "partner": format_configuration(int(spin_flip(c, L)), L),
                 "delta": cfg.analyses.delta, "eta_random": eta_ref}
        path = write_csv(out / f"fragmentation_r{r:03d}_{_state_tag(i, c, L)}.csv",
                         header_lines(cfg, "fragmentation", extra),
                         ["t_ns", "tau", "dim_k", "dim_k_partner", "dim_k_running",
                          "dim_k_partner_running", "eta", "eta_running"], rows)
        last = rows[-1]
        summary = [r, format_configuration(c, L), format_configuration(int(spin_flip(c, L)), L),
                   int(domain_wall_count(c, L)), last[4], last[5], last[7], eta_ref, eta_ref_std]
        return path, summary

    for r in range(resume, n_real):
        for path, summary in _pool_map(run_unit, [(r, i) for i in range(len(states))], threads):
            result.files.append(path)
            summary_rows.append(summary)
        models.release(r)
    result.files.append(write_csv(
        out / "fragmentation_summary.csv", header_lines(cfg, "fragmentation"),
        ["realization", "state", "partner", "n_dw", "dim_k", "dim_k_partner", "eta",
         "eta_random_mean", "eta_random_std"], summary_rows))
    result.summary["eta_random"] = (eta_ref, eta_ref_std)
    return result


# --- parameter sweeps ---------------------------------------------------------

def run_sweep(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1,
              resume: int = 0) -> RunResult:
    """Late-window imbalance per (grid value, state) and optionally <r> per grid value."""
    sw = cfg.sweep
    if resume:
        raise ConfigError("resume", "sweeps restart from the first grid point")
    if sw.parameter is None:
        raise ConfigError("sweep.parameter", "missing; expected gamma or W")
    if not sw.values:
        raise ConfigError("sweep.values", "grid is empty")
    if not cfg.initial_states and "rstat" not in cfg.analyses.enabled:
        raise ConfigError("initial_states", "nothing to compute: no states and no rstat")
    out = Path(out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    L = cfg.system.L
    states = cfg.configurations()
    n_real = cfg.n_realizations()
    w0, w1 = cfg.times.window_ns
    t_ns = cfg.time_grid_ns()
    win = (t_ns >= w0 - 1e-9) & (t_ns <= w1 + 1e-9)
    if states and not win.any():
        raise ConfigError("times.window_ns", "late window contains no grid point")
    # propagate only as far as the window end
    t_use = t_ns[: np.flatnonzero(win)[-1] + 1] if states else t_ns[:0]
    taus = cfg.ns_to_tau(t_use)
    win = win[: t_use.size]
    want_r = "rstat" in cfg.analyses.enabled
    imb_rows, r_rows = [], []

    for v_idx, value in enumerate(sw.values):
        models = _Models(cfg, dense=cfg.method == "dense", value=value)
        basis = models.basis

        def run_unit(unit, models=models, basis=basis):
            r, i = unit
            H, eig = models.get(r)
            try:
                records, _ = trajectory(cfg, H, eig, _product_state(basis, states[i]), taus,
                                        lambda tau, psi: imbalance(psi, states[i], basis))
            except (NumericalFailure, FloatingPointError) as exc:
                raise RunAborted(r, exc) from exc
            return float(np.mean(np.asarray(records)[win]))

        late = np.empty((n_real, len(states)))
        rvals = []
        for r in range(n_real):
            late[r] = _pool_map(run_unit, [(r, i) for i in range(len(states))], threads)
            if want_r:
                H, _ = models.get(r)
                rvals.append(float(gap_ratios(H, cfg.analyses.rstat_window,
                                              cfg.system.dense_limit).mean()))
            models.release(r)
        for i, c in enumerate(states):
            imb_rows.append([sw.parameter, value, format_configuration(c, L),
                             int(domain_wall_count(c, L)), float(late[:, i].mean()),
                             _sem(late[:, i]), n_real])
        if want_r:
            rv = np.array(rvals)
            r_rows.append([sw.parameter, value, float(rv.mean()), _sem(rv), n_real])
        log.info("sweep point %s=%g done (%d/%d)", sw.parameter, value, v_idx + 1, len(sw.values))

    result = RunResult()
    head = header_lines(cfg, "sweep", {"window_ns": f"{w0!r}-{w1!r}"})
    if states:
        result.files.append(write_csv(out / "sweep_imbalance.csv", head,
                                      ["parameter", "value", "state", "n_dw", "late_imbalance",
                                       "sem", "realizations"], imb_rows))
    if want_r:
        result.files.append(write_csv(out / "sweep_rstat.csv", head,
                                      ["parameter", "value", "r_mean", "sem", "realizations"], r_rows))
    return result


RUNNERS = {
    "quench": run_quench,
    "eigensurvey": run_eigensurvey,
    "fragmentation": run_fragmentation,
    "sweep": run_sweep,
}
