"""Experiment presets, parameter heuristics and result persistence."""
from __future__ import annotations

import csv
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import SimulationParams
from .engine import (
    NumericBreakdown,
    bloch_coordinates,
    run_ensemble,
    run_trajectory,
    stationary_mean,
)
from .entanglement import max_mean_coherence
from .twosite import bloch_disk_histogram

PRESETS = ("fig1", "fig2a", "fig2b", "fig2cd", "fig3", "fig4", "custom")
FORMAT_VERSION = 1
DESK_L = 11
FULL_L = 21

DEFAULT_GRIDS = {
    "fig1": ([0.01, 10.0], [0.99, 0.01]),
    "fig2a": ([0.1], [1.0, 0.5, 0.0]),
    "fig2b": ([2.0], [1.0, 0.5, 0.0]),
    "fig2cd": ([0.03, 0.1, 0.3, 1.0, 3.0, 10.0], [0.25, 0.5, 0.75, 1.0]),
    "fig3": ([0.5], [0.0, 0.5, 1.0]),
    "fig4": ([1.0, 2.0, 4.0, 8.0], [0.1, 0.2, 0.3, 0.4, 0.5]),
    "custom": ([], []),
}

UNITS = {
    "k": "J", "eta": "1", "t": "1/J", "b": "bond", "site": "site", "n_traj": "1",
    "y": "1", "z": "1", "density": "1", "cn": "1", "cn_sem": "1", "cn_mean": "1",
    "cn_max": "1", "cn_max_sem": "1", "t_max": "1/J", "cn_stationary": "1",
    "cn_final": "1", "pole_mass": "1", "mean_purity": "1",
}
SORT_KEYS = ("k", "eta", "t", "b", "site", "y", "z")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit status 2)."""


# --- heuristics ------------------------------------------------------------------

def stopping_time(k: float, L: int) -> float:
    """Final time after which averaged quantities have settled.

    Two sites: the unread coherence envelope falls below 1e-3 for
    ``k < 2``; ``5 k`` otherwise. Longer chains: the time the spreading
    particle needs to reach the walls, ballistic or diffusive.
    """
    if L == 2:
        if not k > 0:
            raise ValueError("a two-site stopping time needs k > 0")
        if k < 2:
            return -math.log(2e-3 * (1.0 - (k / 2) ** 2)) / k
        return 5.0 * k
    return max((L / 4) ** 2 * k, float(L))


def _ceil_int(x: float) -> int:
    # 1000 * 0.3 = 300.00000000000006 must not round up
    return int(math.ceil(round(x, 9)))


def table1_defaults(figure: str, k: float, eta: float, L: int = 2, seed: int = 0,
                    sample_dt: float = 0.01) -> SimulationParams:
    """Timestep, final time and trajectory count for a figure cell."""
    small_dt = min(1.0, 1.0 / k) if k > 0 else 1.0
    if figure in ("figapp1", "fig1", "fig2cd", "figapp2"):
        dt = small_dt * 1e-3
        t_f = stopping_time(k, L)
        n = {"figapp1": 1, "fig1": 10000}.get(figure) or max(_ceil_int(1000 * eta), 100)
    elif figure in ("fig2a", "fig2b"):
        if not k > 0:
            raise ValueError(f"{figure} needs k > 0")
        dt = 1e-3 if figure == "fig2a" else 5e-4
        t_f = 10.0 / k
        counts = {"fig2a": {0.0: 1, 0.5: 1800, 1.0: 2200},
                  "fig2b": {0.0: 1, 0.5: 1900, 1.0: 1700}}[figure]
        if eta not in counts:
            raise ValueError(f"{figure} defines trajectory counts only for eta in {sorted(counts)}")
        n = counts[eta]
    elif figure == "fig3":
        dt, t_f, n = 1e-3, 15.0, 100
    elif figure == "fig4":
        dt = small_dt * 1e-2
        t_f = max((L / 4) ** 2 * k, float(L))
        n = 1 if eta == 0 else 200 * max(1, _ceil_int(10 * eta * k))
    else:
        raise ValueError(f"unknown preset {figure!r}")
    init_site = 1 if L == 2 else (L + 1) // 2
    return SimulationParams(L=L, k=k, eta=eta, dt=dt, t_f=t_f, seed=seed, n_traj=n,
                            init_site=init_site,
                            sample_stride=max(1, int(round(sample_dt / dt))))


def cell_seed(master_seed: int, k: float, eta: float) -> int:
    """Seed of one (k, eta) grid cell, independent of the rest of the grid."""
    bits = [struct.unpack("<Q", struct.pack("<d", float(v)))[0] for v in (k, eta)]
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=(0xCE11, *bits))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


# --- configuration -------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    preset: str = "custom"
    k_values: list[float] | None = None
    eta_values: list[float] | None = None
    L: int | None = None
    seed: int = 0
    output_dir: str = "runs"
    emit_states: bool = False
    paper_scale: bool = False
    max_traj: int = 200
    threads: int = 1
    sample_dt: float = 0.01
    stationary_window: float = 0.1
    # custom preset only
    dt: float | None = None
    t_f: float | None = None
    n_traj: int | None = None
    init_site: int | None = None
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        ks, etas = DEFAULT_GRIDS[self.preset]
        if self.k_values is None:
            self.k_values = list(ks)
        if self.eta_values is None:
            self.eta_values = list(etas)
        for k in self.k_values:
            if not (math.isfinite(k) and k > 0):
                raise ConfigError(f"grid k values must be finite and > 0, got {k}")
        for eta in self.eta_values:
            if not 0.0 <= eta <= 1.0:
                raise ConfigError(f"grid eta values must lie in [0, 1], got {eta}")
        if self.format_version != FORMAT_VERSION:
            raise ConfigError(f"unsupported format_version {self.format_version}")
        if self.preset == "custom" and self.k_values and (self.dt is None or self.t_f is None):
            raise ConfigError("custom runs need dt and t_f")
        if self.max_traj < 1 or self.threads < 1:
            raise ConfigError("max_traj and threads must be >= 1")

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def chain_length(self) -> int:
        if self.L is not None:
            return self.L
        if self.preset in ("fig3", "fig4"):
            return FULL_L if self.paper_scale else DESK_L
        return 2

    def cell_params(self, k: float, eta: float) -> SimulationParams:
        L = self.chain_length
        seed = cell_seed(self.seed, k, eta)
        if self.preset == "custom":
            params = SimulationParams(
                L=L, k=k, eta=eta, dt=self.dt, t_f=self.t_f, seed=seed,
                n_traj=self.n_traj or 1, init_site=self.init_site or (1 if L == 2 else (L + 1) // 2),
                sample_stride=max(1, int(round(self.sample_dt / self.dt))),
            )
        else:
            params = table1_defaults(self.preset, k, eta, L, seed, self.sample_dt)
            if not self.paper_scale:
                params = params.replace(n_traj=min(params.n_traj, self.max_traj))
            if self.n_traj is not None:
                params = params.replace(n_traj=self.n_traj)
        return params


# --- result tables ------------------------------------------------------------------

@dataclass
class ResultTable:
    name: str
    columns: list[str]
    data: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(self.columns))

    @property
    def units(self) -> list[str]:
        return [UNITS.get(c, "1") for c in self.columns]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def sorted(self) -> "ResultTable":
        keys = [self.columns.index(c) for c in SORT_KEYS if c in self.columns]
        if not keys or len(self.data) == 0:
            return self
        order = np.lexsort([self.data[:, i] for i in reversed(keys)])
        return ResultTable(self.name, self.columns, self.data[order], self.metadata)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_csv(table: ResultTable, path) -> Path:
    """Write ``table`` with a ``name (unit)`` header, rows in key order."""
    path = Path(path)
    table = table.sorted()
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{c} ({u})" for c, u in zip(table.columns, table.units)])
            for row in table.data:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> ResultTable:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    columns = [h.split(" (")[0] for h in rows[0]]
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(columns))
    return ResultTable(path.stem, columns, data)


# --- presets ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    tables: dict[str, ResultTable]
    metadata: dict
    states: dict[str, np.ndarray]

    @property
    def failures(self) -> list[dict]:
        return self.metadata["failures"]


def _cells(config):
    return [(k, eta) for k in config.k_values for eta in config.eta_values]


def _series_rows(k, eta, ens, name="cn_mean"):
    n = len(ens.times)
    return np.column_stack([np.full(n, k), np.full(n, eta), ens.times,
                            ens.mean[name], ens.sem[name]])


def _profile_rows(k, eta, times, values, label_offset=1):
    # values: (n_times, n_labels) -> long format
    n, m = values.shape
    return np.column_stack([np.full(n * m, k), np.full(n * m, eta), np.repeat(times, m),
                            np.tile(np.arange(label_offset, m + label_offset), n), values.ravel()])


def run_preset(config: ExperimentConfig) -> RunOutcome:
    """Run every (k, eta) cell of ``config`` and collect the preset's tables.

    A cell that breaks down numerically is recorded under
    ``metadata["failures"]`` and skipped; the remaining cells still run.
    """
    started = time.time()
    preset = config.preset
    rows: dict[str, list] = {}
    states: dict[str, np.ndarray] = {}
    failures, timings = [], []

    def add(name, block):
        rows.setdefault(name, []).append(np.atleast_2d(block))

    for k, eta in _cells(config):
        params = config.cell_params(k, eta)
        t0 = time.perf_counter()
        try:
            ens = run_ensemble(params, threads=config.threads)
            if preset == "fig1":
                v = bloch_coordinates(ens.final_states)
                hist = bloch_disk_histogram(v)
                r = hist.rows()
                add("histogram", np.column_stack([np.full(len(r), k), np.full(len(r), eta), r]))
                pur = np.einsum("bij,bji->b", ens.final_states, ens.final_states).real
                add("summary", [k, eta, ens.n_traj, hist.pole_mass(0.1), pur.mean()])
            elif preset in ("fig2a", "fig2b"):
                add("series", _series_rows(k, eta, ens))
            elif preset == "fig2cd":
                val, err = stationary_mean(ens, params.t_f * (1 - config.stationary_window))
                add("stationary", [k, eta, ens.n_traj, val, err])
            elif preset == "fig3":
                add("ens_mean_cn", _series_rows(k, eta, ens))
                add("ens_densities", _profile_rows(k, eta, ens.times, ens.mean.densities))
                add("ens_bond_cn", _profile_rows(k, eta, ens.times, ens.mean.bond_cn))
                traj = run_trajectory(params)
                add("traj_densities", _profile_rows(k, eta, traj.times, traj.observables.densities))
                add("traj_bond_cn", _profile_rows(k, eta, traj.times, traj.observables.bond_cn))
            elif preset == "fig4":
                t_max, c_max = max_mean_coherence(ens.times, ens.mean.cn_mean)
                i = int(np.argmax(ens.mean.cn_mean))
                add("max_cn", [k, eta, ens.n_traj, c_max, t_max, ens.sem.cn_mean[i]])
            else:
                add("series", _series_rows(k, eta, ens))
                t_max, c_max = max_mean_coherence(ens.times, ens.mean.cn_mean)
                add("summary", [k, eta, ens.n_traj, c_max, t_max, ens.mean.cn_mean[-1]])
            if config.emit_states:
                tag = f"k={k!r}_eta={eta!r}"
                states[f"{tag}_mean"] = ens.mean_state
                states[f"{tag}_final"] = ens.final_states
        except NumericBreakdown as exc:
            failures.append({"k": k, "eta": eta, "error": str(exc), "step": exc.step,
                             "trajectory": exc.index, "seed": exc.seed})
        timings.append({"k": k, "eta": eta, "n_traj": params.n_traj,
                        "seconds": time.perf_counter() - t0})

    schemas = {
        "histogram": ["k", "eta", "y", "z", "density"],
        "summary": (["k", "eta", "n_traj", "pole_mass", "mean_purity"] if preset == "fig1"
                    else ["k", "eta", "n_traj", "cn_max", "t_max", "cn_final"]),
        "series": ["k", "eta", "t", "cn_mean", "cn_sem"],
        "stationary": ["k", "eta", "n_traj", "cn_stationary", "cn_sem"],
        "ens_mean_cn": ["k", "eta", "t", "cn_mean", "cn_sem"],
        "ens_densities": ["k", "eta", "t", "site", "density"],
        "ens_bond_cn": ["k", "eta", "t", "b", "cn"],
        "traj_densities": ["k", "eta", "t", "site", "density"],
        "traj_bond_cn": ["k", "eta", "t", "b", "cn"],
        "max_cn": ["k", "eta", "n_traj", "cn_max", "t_max", "cn_max_sem"],
    }
    expected = {
        "fig1": ["histogram", "summary"], "fig2a": ["series"], "fig2b": ["series"],
        "fig2cd": ["stationary"], "fig4": ["max_cn"], "custom": ["series", "summary"],
        "fig3": ["ens_mean_cn", "ens_densities", "ens_bond_cn", "traj_densities", "traj_bond_cn"],
    }[preset]
    metadata = {
        "config": asdict(config),
        "master_seed": config.seed,
        "chain_length": config.chain_length,
        "code_version": __version__,
        "backend": _backend(),
        "started": started,
        "wall_seconds": time.time() - started,
        "cells": timings,
        "failures": failures,
    }
    tables = {}
    for name in expected:
        blocks = rows.get(name, [])
        data = np.vstack(blocks) if blocks else np.empty((0, len(schemas[name])))
        tables[name] = ResultTable(f"{preset}_{name}", schemas[name], data, metadata).sorted()
    return RunOutcome(tables, metadata, states)


def _backend():
    from .kernel import BACKEND
    return BACKEND


def write_outcome(outcome: RunOutcome, output_dir) -> list[Path]:
    """Persist tables as CSV, metadata as JSON and optional state snapshots."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [emit_csv(t, out / f"{t.name}.csv") for t in outcome.tables.values()]
        meta = dict(outcome.metadata, tables=[p.name for p in paths])
        with open(out / "metadata.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
        paths.append(out / "metadata.json")
        if outcome.states:
            np.savez_compressed(out / "states.npz", **outcome.states)
            paths.append(out / "states.npz")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return paths


# --- scaling fits ------------------------------------------------------------------------

@dataclass
class LineFit:
    group: float
    slope: float
    intercept: float
    r2: float
    n: int
    monotone: bool


@dataclass
class FitReport:
    """Power law in k (per eta) and exponential in eta (per k).

    ``power_law[i].slope`` is the exponent ``a`` of ``C ~ k^-a``;
    ``exponential[i].slope`` is the rate ``b`` of ``C ~ exp(b eta)``.
    """

    power_law: list[LineFit]
    exponential: list[LineFit]
    notices: list[str]

    def as_dict(self):
        return {"power_law": [asdict(f) for f in self.power_law],
                "exponential": [asdict(f) for f in self.exponential],
                "notices": self.notices}


def _line(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return float(slope), float(icpt), r2


def fit_scalings(table: ResultTable, k_min: float = 1.0, eta_max: float = 0.5,
                 value: str = "cn_max") -> FitReport:
    """Least-squares straight lines through log C vs log k and log C vs eta."""
    k = table.column("k")
    eta = table.column("eta")
    c = table.column(value)
    notices = []
    power, expo = [], []
    pos = c > 0
    if np.any(~pos):
        notices.append(f"{int(np.sum(~pos))} non-positive {value} values excluded")
    for e in np.unique(eta):
        sel = (eta == e) & (k >= k_min) & pos
        if sel.sum() < 3:
            notices.append(f"power-law fit at eta={e:g} skipped: {int(sel.sum())} points with k >= {k_min:g}")
            continue
        order = np.argsort(k[sel])
        x, y = np.log(k[sel][order]), np.log(c[sel][order])
        slope, icpt, r2 = _line(x, y)
        power.append(LineFit(float(e), -slope, icpt, r2, int(sel.sum()), bool(np.all(np.diff(y) < 0))))
    for kk in np.unique(k):
        sel = (k == kk) & (eta <= eta_max) & pos
        if sel.sum() < 3:
            notices.append(f"exponential fit at k={kk:g} skipped: {int(sel.sum())} points with eta <= {eta_max:g}")
            continue
        order = np.argsort(eta[sel])
        x, y = eta[sel][order], np.log(c[sel][order])
        slope, icpt, r2 = _line(x, y)
        expo.append(LineFit(float(kk), slope, icpt, r2, int(sel.sum()), bool(np.all(np.diff(y) > 0))))
    return FitReport(power, expo, notices)
