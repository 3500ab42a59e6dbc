"""Monte-Carlo experiment harness: configuration, trials, sweeps and output.

A run is a cartesian product ``sweep values x modes x trials``.  Every trial
redraws user placement, channel phases, the CSIT error and the SAA samples
from seeds derived from ``master_seed``; all modes of one trial see the
same channel draw so their comparison is paired.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .channel import (SatelliteGeometry, dbm_to_watts, draw_saa_samples, impair_csit,
                      place_users, synth_channel)
from .qcqp import QcqpError
from .wmmse import Mode, WmmseError, WmmseParams, frr_rate, solve_maxmin

logger = logging.getLogger(__name__)

AXES = ("sigma_e", "k_users", "n_t", "p_t")
FIXED_COLUMNS = ("sweep_axis", "sweep_value", "mode", "trial", "min_se", "q",
                 "iterations", "runtime_ms")
SCHEMA = ",".join(FIXED_COLUMNS) + ",se_1..se_K"

_MASK64 = (1 << 64) - 1
_TAG_PLACE, _TAG_ERROR, _TAG_SAA, _TAG_HELD = 1, 3, 4, 5


class ConfigError(ValueError):
    pass


class TrialError(RuntimeError):
    """Solver failure inside a trial, annotated with the trial's coordinates."""


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(*keys: int) -> int:
    """Fold integer keys into one 64-bit seed with splitmix64."""
    h = 0
    for k in keys:
        h = splitmix64(h ^ (int(k) & _MASK64))
    return h


def _fmt(x: float) -> str:
    return "%.9g" % x


def _q9(x: float) -> float:
    # values are stored at the precision they are written with
    return float(_fmt(float(x)))


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one value")
        if self.axis in ("k_users", "n_t"):
            vals = tuple(int(v) for v in self.values)
            if any(v != w for v, w in zip(vals, self.values)):
                raise ConfigError(f"{self.axis} values must be integers")
        else:
            vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: SatelliteGeometry = field(default_factory=SatelliteGeometry)
    n_t: int = 2
    k_users: int = 8
    p_t: float = 1.0
    sigma_e: tuple = (1.0,)
    s_samples: int = 100
    n_trials: int = 100
    modes: tuple = (Mode.ST_RSMA, Mode.RSMA, Mode.SDMA, Mode.MULTICAST, Mode.FRR)
    eps: float = 1e-4
    max_iter: int = 200
    master_seed: int = 0
    sweep: SweepSpec | None = None
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1 or self.s_samples < 1:
            raise ConfigError("n_trials and s_samples must be at least 1")
        if self.n_t < 2 or self.k_users < 1:
            raise ConfigError("need n_t >= 2 and k_users >= 1")
        if self.p_t <= 0 or self.eps <= 0 or self.max_iter < 1 or self.workers < 1:
            raise ConfigError("p_t, eps, max_iter and workers must be positive")
        sig = tuple(float(s) for s in np.atleast_1d(self.sigma_e))
        if not sig or any(s < 0 for s in sig):
            raise ConfigError("sigma_e must be a nonempty list of nonnegative values")
        object.__setattr__(self, "sigma_e", sig)
        try:
            modes = tuple(Mode(m) for m in self.modes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not modes or len(set(modes)) != len(modes):
            raise ConfigError("modes must be a nonempty list without repeats")
        object.__setattr__(self, "modes", modes)
        if self.sweep is None:
            object.__setattr__(self, "sweep", SweepSpec("sigma_e", sig))
        elif self.sweep.axis != "sigma_e" and len(sig) != 1:
            raise ConfigError("sigma_e must be a single value when sweeping another axis")

    _KEYS = {"geometry", "n_t", "k_users", "p_t", "p_t_dbm", "sigma_e", "s_samples",
             "n_trials", "modes", "eps", "max_iter", "master_seed", "sweep", "workers"}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "p_t" in d and "p_t_dbm" in d:
            raise ConfigError("give either p_t (W) or p_t_dbm, not both")
        if "p_t_dbm" in d:
            d["p_t"] = float(dbm_to_watts(d.pop("p_t_dbm")))
        try:
            if "geometry" in d:
                d["geometry"] = SatelliteGeometry.from_dict(d["geometry"] or {})
            if "sweep" in d and d["sweep"] is not None:
                s = d["sweep"]
                extra = set(s) - {"axis", "values"}
                if extra:
                    raise ConfigError(f"unknown sweep keys: {sorted(extra)}")
                d["sweep"] = SweepSpec(s["axis"], tuple(s["values"]))
            for key in ("n_t", "k_users", "s_samples", "n_trials", "max_iter",
                        "master_seed", "workers"):
                if key in d:
                    if isinstance(d[key], bool) or int(d[key]) != d[key]:
                        raise ConfigError(f"{key} must be an integer")
                    d[key] = int(d[key])
            if "modes" in d:
                d["modes"] = tuple(d["modes"])
            return cls(**d)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    def with_sweep(self, axis: str, values) -> "ScenarioConfig":
        sweep = SweepSpec(axis, tuple(values))
        sig = self.sigma_e if axis == "sigma_e" else self.sigma_e[:1]
        return replace(self, sweep=sweep, sigma_e=sig)

    def point(self, sweep_value) -> dict:
        """Scenario parameters at one sweep value."""
        p = {"n_t": self.n_t, "k_users": self.k_users, "p_t": self.p_t,
             "sigma_e": self.sigma_e[0]}
        p[self.sweep.axis] = sweep_value
        return p

    def to_dict(self) -> dict:
        g = asdict(self.geometry)
        return {
            "geometry": g, "n_t": self.n_t, "k_users": self.k_users, "p_t": self.p_t,
            "sigma_e": list(self.sigma_e), "s_samples": self.s_samples,
            "n_trials": self.n_trials, "modes": [m.value for m in self.modes],
            "eps": self.eps, "max_iter": self.max_iter, "master_seed": self.master_seed,
            "sweep": {"axis": self.sweep.axis, "values": list(self.sweep.values)},
            "workers": self.workers,
        }


@dataclass(frozen=True)
class TrialRow:
    sweep_axis: str
    sweep_value: float
    mode: str
    trial: int
    min_se: float
    q: float
    iterations: int
    runtime_ms: float
    per_user: tuple

    def __post_init__(self):
        pu = tuple(_q9(v) for v in self.per_user)
        object.__setattr__(self, "per_user", pu)
        object.__setattr__(self, "min_se", min(pu))
        for name in ("sweep_value", "q", "runtime_ms"):
            object.__setattr__(self, name, _q9(getattr(self, name)))

    def cells(self, width: int, runtime: bool = True) -> list[str]:
        out = [self.sweep_axis, _fmt(self.sweep_value), self.mode, str(self.trial),
               _fmt(self.min_se), _fmt(self.q), str(self.iterations)]
        if runtime:
            out.append(_fmt(self.runtime_ms))
        out += [_fmt(v) for v in self.per_user]
        return out + [""] * (width - len(self.per_user))


def trial_seeds(config: ScenarioConfig, trial: int) -> dict:
    """Seeds of one trial; independent of mode and sweep value."""
    base = derive_seed(config.master_seed, AXES.index(config.sweep.axis), trial)
    return {"trial": base,
            "placement": derive_seed(base, _TAG_PLACE),
            "error": derive_seed(base, _TAG_ERROR),
            "saa": derive_seed(base, _TAG_SAA),
            "held_out": derive_seed(base, _TAG_HELD)}


def trial_channels(config: ScenarioConfig, sweep_value, trial: int):
    pt = config.point(sweep_value)
    seeds = trial_seeds(config, trial)
    placement = place_users(config.geometry, pt["n_t"], pt["k_users"], seeds["placement"])
    ch = synth_channel(config.geometry, placement, seed=seeds["placement"])
    ch = impair_csit(ch, pt["sigma_e"], seeds["error"])
    return draw_saa_samples(ch, config.s_samples, seeds["saa"]), pt, seeds


def run_trial(config: ScenarioConfig, sweep_value, mode, trial: int) -> TrialRow:
    """One realization: place users, build channels, optimise, score on held-out samples."""
    mode = Mode(mode)
    start = time.perf_counter()
    ch, pt, seeds = trial_channels(config, sweep_value, trial)
    if mode == Mode.FRR:
        report = frr_rate(draw_saa_samples(ch, config.s_samples, seeds["held_out"]), pt["p_t"])
        q = frr_rate(ch, pt["p_t"]).min_rate
        iterations = 0
    else:
        params = WmmseParams(p_t=pt["p_t"], eps=config.eps, max_iter=config.max_iter,
                             seed=seeds["held_out"])
        try:
            sol = solve_maxmin(ch, mode, params)
        except (WmmseError, QcqpError, np.linalg.LinAlgError) as exc:
            raise TrialError(f"{mode.value} failed at {config.sweep.axis}={sweep_value}, "
                             f"trial {trial}, trial seed {seeds['trial']}: {exc}") from exc
        report, q, iterations = sol.held_out, sol.q, sol.iterations
    runtime = (time.perf_counter() - start) * 1e3
    return TrialRow(config.sweep.axis, float(sweep_value), mode.value, trial,
                    report.min_rate, q, iterations, runtime, tuple(report.per_user))


@dataclass
class ResultTable:
    rows: list

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return max((len(r.per_user) for r in self.rows), default=0)

    def header(self, runtime: bool = True) -> list[str]:
        cols = [c for c in FIXED_COLUMNS if runtime or c != "runtime_ms"]
        return cols + [f"se_{i + 1}" for i in range(self.width)]

    def select(self, mode=None, sweep_value=None) -> list:
        return [r for r in self.rows
                if (mode is None or r.mode == Mode(mode).value)
                and (sweep_value is None or r.sweep_value == sweep_value)]

    def min_se(self, mode, sweep_value=None) -> np.ndarray:
        return np.array([r.min_se for r in self.select(mode, sweep_value)])

    def aggregates(self) -> list[dict]:
        """Mean/std/min/max of min_se per (sweep value, mode), in row order."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.sweep_axis, r.sweep_value, r.mode), []).append(r.min_se)
        out = []
        for (axis, value, mode), vals in groups.items():
            v = np.array(vals)
            out.append({"sweep_axis": axis, "sweep_value": value, "mode": mode,
                        "n": len(v), "mean": float(v.mean()), "std": float(v.std()),
                        "min": float(v.min()), "max": float(v.max())})
        return out


def _run_one(args):
    return run_trial(*args)


def sweep(config: ScenarioConfig, workers: int | None = None) -> ResultTable:
    """Run every (sweep value, mode, trial); rows come back in that nested order."""
    jobs = [(config, v, m, t) for v in config.sweep.values for m in config.modes
            for t in range(config.n_trials)]
    workers = config.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs, chunksize=1))
    else:
        rows = []
        for job in jobs:
            rows.append(run_trial(*job))
            logger.info("%s=%s %s trial %d min_se=%.4f", config.sweep.axis, job[1],
                        job[2].value, job[3], rows[-1].min_se)
    return ResultTable(rows)


def to_csv(table: ResultTable, runtime: bool = True) -> str:
    if not table.rows:
        raise ValueError("cannot emit an empty result table")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header(runtime))
    width = table.width
    for r in table.rows:
        w.writerow(r.cells(width, runtime))
    return buf.getvalue()


def aggregates_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep_axis", "sweep_value", "mode", "n", "mean", "std", "min", "max"])
    for a in table.aggregates():
        w.writerow([a["sweep_axis"], _fmt(a["sweep_value"]), a["mode"], a["n"],
                    _fmt(a["mean"]), _fmt(a["std"]), _fmt(a["min"]), _fmt(a["max"])])
    return buf.getvalue()


def to_json(table: ResultTable) -> str:
    if not table.rows:
        raise ValueError("cannot emit an empty result table")
    return json.dumps({"columns": table.header(),
                       "rows": [asdict(r) | {"per_user": list(r.per_user)} for r in table.rows]},
                      indent=1)


def parse_csv(text: str) -> ResultTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header[:len(FIXED_COLUMNS)]) != FIXED_COLUMNS:
        raise ValueError("unexpected CSV header")
    rows = []
    for cells in reader:
        rec = dict(zip(FIXED_COLUMNS, cells))
        per_user = tuple(float(c) for c in cells[len(FIXED_COLUMNS):] if c != "")
        rows.append(TrialRow(rec["sweep_axis"], float(rec["sweep_value"]), rec["mode"],
                             int(rec["trial"]), float(rec["min_se"]), float(rec["q"]),
                             int(rec["iterations"]), float(rec["runtime_ms"]), per_user))
    return ResultTable(rows)


def parse_json(text: str) -> ResultTable:
    doc = json.loads(text)
    return ResultTable([TrialRow(**(r | {"per_user": tuple(r["per_user"])}))
                        for r in doc["rows"]])


def emit(table: ResultTable, path, fmt: str = "csv") -> None:
    """Write the table as CSV or JSON; I/O errors propagate."""
    if fmt == "csv":
        text = to_csv(table)
    elif fmt == "json":
        text = to_json(table)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def manifest(config: ScenarioConfig, table: ResultTable, started: datetime,
             finished: datetime) -> dict:
    return {
        "config": config.to_dict(),
        "schema": SCHEMA,
        "rows": len(table),
        "seeds": {"master_seed": config.master_seed,
                  "mixing": "splitmix64 fold of (master_seed, axis index, trial)",
                  "trials": {str(t): trial_seeds(config, t)["trial"]
                             for t in range(config.n_trials)}},
        "realizations": "placement, phases, CSIT error and SAA samples redrawn every trial; "
                        "shared by all modes and sweep values of a trial",
        "versions": {"strsma": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "started": started.isoformat(timespec="seconds"),
        "finished": finished.isoformat(timespec="seconds"),
        "runtime_s": round((finished - started).total_seconds(), 3),
    }


def run(config: ScenarioConfig, workers: int | None = None) -> tuple[ResultTable, dict]:
    started = datetime.now(timezone.utc)
    table = sweep(config, workers)
    return table, manifest(config, table, started, datetime.now(timezone.utc))


def relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    """``mean(a) / mean(b) - 1``; NaN when ``mean(b)`` is not positive."""
    mb = float(np.mean(b))
    return float(np.mean(a)) / mb - 1.0 if mb > 0 else math.nan
