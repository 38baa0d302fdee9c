"""Typed experiment configuration read from TOML.

Every validation failure raises ConfigError whose message starts with the
dotted path of the offending key, e.g. ``times.max_ns: must be > 0``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import CapacityError, ConfigError
from .hamiltonian import PotentialSpec, RandomUniform, Stark, derive_seed, load_potential_file
from .lattice import LadderGeometry, SectorBasis, enumerate_sector, parse_configuration, popcount
from .propagator import KrylovParams
from .spectral import DENSE_LIMIT

ANALYSES = ("imbalance", "pe", "ee", "ndw", "cdf", "kdelta", "eta", "rstat", "eigensurvey")
OUTPUT_FORMATS = ("csv", "svg")


@dataclass(frozen=True)
class SystemConfig:
    L: int
    Q: int
    couplings: str = "default"  # or a coupling file path
    f_NN_MHz: float = 7.0
    dense_limit: int = DENSE_LIMIT


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = "stark"  # stark | random | file
    gamma: float = 0.0
    W: float = 0.0
    seed: int = 0
    realizations: int = 1
    path: str | None = None


@dataclass(frozen=True)
class TimesConfig:
    max_ns: float = 800.0
    points: int = 101
    spacing: str = "linear"  # linear | log
    min_ns: float = 1.0  # first nonzero time for log spacing
    window_ns: tuple[float, float] = (600.0, 800.0)


@dataclass(frozen=True)
class AnalysisConfig:
    enabled: tuple[str, ...] = ("imbalance", "pe")
    delta: float = 0.01
    kdelta_tau_ns: float = 40_000.0
    rstat_window: float = 0.5
    eta_pairs: int = 1000
    eta_seed: int = 0
    ee_cut: int | None = None


@dataclass(frozen=True)
class SamplingConfig:
    mode: str = "exact"  # exact | shots
    shots: int = 500_000
    readout_flip: float = 0.0
    seed: int = 0
    postselect: bool = True


@dataclass(frozen=True)
class SweepConfig:
    parameter: str | None = None  # gamma | W
    values: tuple[float, ...] = ()


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv",)


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    potential: PotentialConfig = PotentialConfig()
    initial_states: tuple[str, ...] = ()
    times: TimesConfig = TimesConfig()
    krylov: KrylovParams = KrylovParams()
    method: str = "krylov"  # krylov | dense
    analyses: AnalysisConfig = AnalysisConfig()
    sampling: SamplingConfig = SamplingConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()
    base_dir: str = field(default=".", compare=False)

    # --- derived objects ---------------------------------------------------

    def geometry(self) -> LadderGeometry:
        if self.system.couplings == "default":
            return LadderGeometry.default(self.system.L)
        return LadderGeometry.from_coupling_file(self._path(self.system.couplings), self.system.L)

    def basis(self) -> SectorBasis:
        return enumerate_sector(self.system.L, self.system.Q)

    def configurations(self) -> list[int]:
        return [parse_configuration(s, self.system.L) for s in self.initial_states]

    def n_realizations(self) -> int:
        return self.potential.realizations if self.potential.kind == "random" else 1

    def potential_spec(self, realization: int = 0, value: float | None = None) -> PotentialSpec:
        p = self.potential
        if p.kind == "stark":
            return Stark(p.gamma if value is None else value)
        if p.kind == "random":
            W = p.W if value is None else value
            return RandomUniform(W, derive_seed(p.seed, realization))
        return load_potential_file(self._path(p.path), self.system.L)

    def ns_to_tau(self, t_ns):
        """Dimensionless time tau = 2 pi f_NN t."""
        return 2.0 * math.pi * self.system.f_NN_MHz * 1e-3 * t_ns

    def time_grid_ns(self, max_ns: float | None = None) -> np.ndarray:
        t = self.times
        top = t.max_ns if max_ns is None else max_ns
        if t.spacing == "linear":
            return np.linspace(0.0, top, t.points)
        return np.concatenate([[0.0], np.geomspace(t.min_ns, top, t.points - 1)])

    def _path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --- parsing ---------------------------------------------------------------

def _take(table: dict, path: str, key: str, kind, default=None, required=False):
    full = f"{path}.{key}" if path else key
    if key not in table:
        if required:
            raise ConfigError(full, "missing required key")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is int and isinstance(val, bool):
        raise ConfigError(full, f"expected integer, got {val!r}")
    if not isinstance(val, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(full, f"expected {names}, got {type(val).__name__}")
    return val


def _check(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(path, msg)


def _unknown(table: dict, path: str, allowed):
    extra = sorted(set(table) - set(allowed))
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigError(where, "unknown key")


def _table(raw: dict, key: str) -> dict:
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(key, "expected a table")
    return val


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    _unknown(raw, "", ("system", "potential", "initial_states", "times", "krylov", "method",
                       "analyses", "sampling", "sweep", "output"))

    s = _table(raw, "system")
    _unknown(s, "system", ("L", "Q", "couplings", "f_NN_MHz", "dense_limit"))
    L = _take(s, "system", "L", int, required=True)
    _check(L >= 1, "system.L", f"must be >= 1, got {L}")
    Q = _take(s, "system", "Q", int, L)
    _check(0 <= Q <= 2 * L, "system.Q", f"must be in 0..{2 * L}, got {Q}")
    system = SystemConfig(
        L, Q,
        couplings=_take(s, "system", "couplings", str, "default"),
        f_NN_MHz=_take(s, "system", "f_NN_MHz", float, 7.0),
        dense_limit=_take(s, "system", "dense_limit", int, DENSE_LIMIT),
    )
    _check(system.f_NN_MHz > 0, "system.f_NN_MHz", "must be > 0")
    if system.couplings != "default":
        cp = Path(system.couplings)
        cp = cp if cp.is_absolute() else Path(base_dir) / cp
        _check(cp.is_file(), "system.couplings", f"no such file {cp}")

    p = _table(raw, "potential")
    _unknown(p, "potential", ("kind", "gamma", "W", "seed", "realizations", "path"))
    potential = PotentialConfig(
        kind=_take(p, "potential", "kind", str, "stark"),
        gamma=_take(p, "potential", "gamma", float, 0.0),
        W=_take(p, "potential", "W", float, 0.0),
        seed=_take(p, "potential", "seed", int, 0),
        realizations=_take(p, "potential", "realizations", int, 20 if p.get("kind") == "random" else 1),
        path=_take(p, "potential", "path", str, None),
    )
    _check(potential.kind in ("stark", "random", "file"), "potential.kind",
           f"must be stark, random or file, got {potential.kind!r}")
    _check(potential.gamma >= 0, "potential.gamma", "must be >= 0")
    _check(potential.W >= 0, "potential.W", "must be >= 0")
    _check(potential.realizations >= 1, "potential.realizations", "must be >= 1")
    if potential.kind == "file":
        _check(potential.path is not None, "potential.path", "required when kind = 'file'")

    states = raw.get("initial_states", [])
    _check(isinstance(states, list) and all(isinstance(x, str) for x in states),
           "initial_states", "expected a list of configuration strings")
    for k, text in enumerate(states):
        try:
            c = parse_configuration(text, L)
        except ValueError as exc:
            raise ConfigError(f"initial_states[{k}]", str(exc)) from None
        _check(popcount(c) == Q, f"initial_states[{k}]",
               f"{text!r} has {popcount(c)} excitations, sector Q = {Q}")

    t = _table(raw, "times")
    _unknown(t, "times", ("max_ns", "points", "spacing", "min_ns", "window_ns"))
    window = _take(t, "times", "window_ns", list, [600.0, 800.0])
    _check(len(window) == 2 and all(isinstance(x, (int, float)) for x in window)
           and window[0] <= window[1], "times.window_ns", "expected [start, stop] with start <= stop")
    times = TimesConfig(
        max_ns=_take(t, "times", "max_ns", float, 800.0),
        points=_take(t, "times", "points", int, 101),
        spacing=_take(t, "times", "spacing", str, "linear"),
        min_ns=_take(t, "times", "min_ns", float, 1.0),
        window_ns=(float(window[0]), float(window[1])),
    )
    _check(times.max_ns > 0, "times.max_ns", "must be > 0")
    _check(times.points >= 2, "times.points", "must be >= 2")
    _check(times.spacing in ("linear", "log"), "times.spacing", "must be linear or log")
    _check(0 < times.min_ns < times.max_ns, "times.min_ns", "must be in (0, max_ns)")

    k = _table(raw, "krylov")
    _unknown(k, "krylov", ("m", "step_tol", "max_step", "reorthogonalize"))
    try:
        krylov = KrylovParams(
            m=_take(k, "krylov", "m", int, 15),
            step_tol=_take(k, "krylov", "step_tol", float, 1e-10),
            max_step=_take(k, "krylov", "max_step", float, 1.0),
            reorthogonalize=_take(k, "krylov", "reorthogonalize", bool, True),
        )
    except ValueError as exc:
        raise ConfigError("krylov", str(exc)) from None

    method = _take(raw, "", "method", str, "krylov")
    _check(method in ("krylov", "dense"), "method", "must be krylov or dense")

    a = _table(raw, "analyses")
    _unknown(a, "analyses", ("enabled", "delta", "kdelta_tau_ns", "rstat_window", "eta_pairs",
                             "eta_seed", "ee_cut"))
    enabled = _take(a, "analyses", "enabled", list, ["imbalance", "pe"])
    for k_, name in enumerate(enabled):
        _check(name in ANALYSES, f"analyses.enabled[{k_}]", f"unknown analysis {name!r}")
    analyses = AnalysisConfig(
        enabled=tuple(enabled),
        delta=_take(a, "analyses", "delta", float, 0.01),
        kdelta_tau_ns=_take(a, "analyses", "kdelta_tau_ns", float, 40_000.0),
        rstat_window=_take(a, "analyses", "rstat_window", float, 0.5),
        eta_pairs=_take(a, "analyses", "eta_pairs", int, 1000),
        eta_seed=_take(a, "analyses", "eta_seed", int, 0),
        ee_cut=_take(a, "analyses", "ee_cut", int, None),
    )
    _check(0 < analyses.delta < 1, "analyses.delta", "must be in (0, 1)")
    _check(analyses.kdelta_tau_ns > 0, "analyses.kdelta_tau_ns", "must be > 0")
    _check(0 < analyses.rstat_window <= 1, "analyses.rstat_window", "must be in (0, 1]")
    _check(analyses.eta_pairs >= 1, "analyses.eta_pairs", "must be >= 1")
    if analyses.ee_cut is not None:
        _check(1 <= analyses.ee_cut < L, "analyses.ee_cut", f"must be in 1..{L - 1}")
    if "eta" in analyses.enabled:
        _check(Q == L, "analyses.enabled",
               "eta pairs states with their spin-flipped partners, which needs Q = L")
    basis_dim = math.comb(2 * L, Q)
    if any(x in analyses.enabled for x in ("eigensurvey", "rstat")) or method == "dense":
        if basis_dim > system.dense_limit:
            raise CapacityError(f"sector dimension {basis_dim} exceeds the dense limit "
                                f"{system.dense_limit} required by dense analyses")

    sm = _table(raw, "sampling")
    _unknown(sm, "sampling", ("mode", "shots", "readout_flip", "seed", "postselect"))
    sampling = SamplingConfig(
        mode=_take(sm, "sampling", "mode", str, "exact"),
        shots=_take(sm, "sampling", "shots", int, 500_000),
        readout_flip=_take(sm, "sampling", "readout_flip", float, 0.0),
        seed=_take(sm, "sampling", "seed", int, 0),
        postselect=_take(sm, "sampling", "postselect", bool, True),
    )
    _check(sampling.mode in ("exact", "shots"), "sampling.mode", "must be exact or shots")
    _check(sampling.shots >= 2, "sampling.shots", "must be >= 2")
    _check(0 <= sampling.readout_flip <= 1, "sampling.readout_flip", "must be in [0, 1]")

    sw = _table(raw, "sweep")
    _unknown(sw, "sweep", ("parameter", "values"))
    values = _take(sw, "sweep", "values", list, [])
    _check(all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values),
           "sweep.values", "expected a list of numbers")
    sweep = SweepConfig(_take(sw, "sweep", "parameter", str, None), tuple(float(v) for v in values))
    if sweep.parameter is not None:
        _check(sweep.parameter in ("gamma", "W"), "sweep.parameter", "must be gamma or W")
        expected = "stark" if sweep.parameter == "gamma" else "random"
        _check(potential.kind == expected, "sweep.parameter",
               f"sweeping {sweep.parameter} needs potential.kind = {expected!r}")
        _check(all(v >= 0 for v in sweep.values), "sweep.values", "must be >= 0")

    o = _table(raw, "output")
    _unknown(o, "output", ("directory", "formats"))
    formats = _take(o, "output", "formats", list, ["csv"])
    for k_, f in enumerate(formats):
        _check(f in OUTPUT_FORMATS, f"output.formats[{k_}]", f"unknown format {f!r}")
    output = OutputConfig(_take(o, "output", "directory", str, "out"), tuple(formats))

    return ExperimentConfig(system, potential, tuple(states), times, krylov, method, analyses,
                            sampling, sweep, output, base_dir=str(base_dir))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not valid TOML: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(path), str(exc)) from None
    return parse_config(raw, base_dir=str(path.parent))
