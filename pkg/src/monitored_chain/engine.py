"""Stochastic evolution of a monitored single particle.

The production stepper is the positivity-preserving Kraus update with a
half-step unitary on either side of the measurement operator. A literal
Euler-Maruyama step of the stochastic master equation is kept as an
independent oracle; it does not renormalise and can leave the state
space.

Trajectory ``i`` of a run with master seed ``s`` always draws from the
stream ``trajectory_rng(s, i)``, so results do not depend on batch size,
thread count or evaluation order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernel
from .core import (
    SimulationParams,
    build_hamiltonian,
    build_propagator,
    init_localized,
    local_densities,
)
from .entanglement import bond_coherences, mean_coherence

TRACE_FLOOR = 1e-12
_CHUNK_TARGET = 2048

Observer = Callable[[np.ndarray], np.ndarray]


class NumericBreakdown(ArithmeticError):
    """Unnormalised trace collapsed during a Kraus step (dt too coarse)."""

    def __init__(self, message, step=None, index=None, seed=None):
        super().__init__(message)
        self.step = step
        self.index = index
        self.seed = seed


# --- random streams -------------------------------------------------------

def trajectory_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trajectory ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=(int(index),))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trajectory_seed(master_seed, index)))


def sample_wiener(rng: np.random.Generator, L: int, dt: float, n_steps: int | None = None):
    """Independent N(0, dt) increments; shape ``(L,)`` or ``(n_steps, L)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    shape = (L,) if n_steps is None else (n_steps, L)
    return rng.standard_normal(shape) * math.sqrt(dt)


# --- single steps -----------------------------------------------------------

def kraus_operator(rho, k, eta, dt, dW) -> np.ndarray:
    """Diagonal of the (Hermitian, real) measurement Kraus operator."""
    p = local_densities(rho)
    dW = np.asarray(dW, dtype=float)
    sk = math.sqrt(eta * k)
    return (1.0 - 0.5 * k * dt) + sk * (2.0 * sk * p * dt + dW) + 0.5 * eta * k * (dW**2 - dt)


def kraus_step(rho, U, k, eta, dt, dW) -> np.ndarray:
    """One normalised Kraus update with half-step propagator ``U``.

    ``U rho U^dag`` is rescaled by the measurement operator on both sides,
    the unread part of the measurement adds back ``(1-eta) k dt`` times
    its diagonal, and a second half-step closes the update.
    """
    m = kraus_operator(rho, k, eta, dt, dW)
    sigma = U @ rho @ U.conj().T
    X = m[:, None] * sigma * m[None, :]
    X[np.diag_indices_from(X)] += (1.0 - eta) * k * dt * np.diag(sigma).real
    tr = np.trace(X).real
    if not tr > TRACE_FLOOR:
        raise NumericBreakdown(f"unnormalised trace {tr:.3g} <= {TRACE_FLOOR:g}")
    out = U @ X @ U.conj().T / tr
    return 0.5 * (out + out.conj().T)


def plain_kraus_step(rho, H, k, eta, dt, dW) -> np.ndarray:
    """Kraus update without the half-step propagators (first-order in H)."""
    m = kraus_operator(rho, k, eta, dt, dW)
    Mt = np.diag(m.astype(complex)) - 1j * H * dt
    X = Mt @ rho @ Mt.conj().T
    X[np.diag_indices_from(X)] += (1.0 - eta) * k * dt * np.diag(rho).real
    tr = np.trace(X).real
    if not tr > TRACE_FLOOR:
        raise NumericBreakdown(f"unnormalised trace {tr:.3g} <= {TRACE_FLOOR:g}")
    out = X / tr
    return 0.5 * (out + out.conj().T)


def sme_increment(rho, H, k, eta, dt, dW) -> np.ndarray:
    """Right-hand side of the stochastic master equation for one step."""
    p = local_densities(rho)
    dW = np.asarray(dW, dtype=float)
    drho = -1j * (H @ rho - rho @ H) * dt
    # sum_i n_i rho n_i - {n_i, rho}/2 keeps the diagonal and removes the rest
    drho += k * (np.diag(np.diag(rho)) - rho) * dt
    # sum_i (n_i rho + rho n_i - 2 p_i rho) dW_i
    stoch = dW[:, None] * rho + rho * dW[None, :] - 2.0 * np.dot(p, dW) * rho
    drho += math.sqrt(eta * k) * stoch
    return drho


def euler_maruyama_step(rho, H, k, eta, dt, dW) -> np.ndarray:
    """Literal Euler-Maruyama update; no renormalisation, no positivity."""
    return rho + sme_increment(rho, H, k, eta, dt, dW)


def lindblad_drift(rho, H, k) -> np.ndarray:
    """Deterministic part of the SME per unit time (the averaged generator)."""
    return -1j * (H @ rho - rho @ H) + k * (np.diag(np.diag(rho)) - rho)


def _advance_plain(states, H, k, eta, dt, dW):
    status = np.full(states.shape[0], -1, dtype=np.int64)
    for b in range(states.shape[0]):
        for s in range(dW.shape[1]):
            try:
                states[b] = plain_kraus_step(states[b], H, k, eta, dt, dW[b, s])
            except NumericBreakdown:
                status[b] = s
                break
    return status


# --- observers ----------------------------------------------------------------

def bloch_coordinates(states):
    """(x, y, z) of two-site states; broadcasts over leading axes."""
    r21 = states[..., 1, 0]
    return np.stack(
        [2.0 * r21.real, 2.0 * r21.imag, (states[..., 0, 0] - states[..., 1, 1]).real], axis=-1
    )


def default_observers(L: int) -> dict[str, Observer]:
    obs = {
        "densities": local_densities,
        "bond_cn": bond_coherences,
        "cn_mean": mean_coherence,
    }
    if L == 2:
        obs["bloch"] = bloch_coordinates
    return obs


def _resolve_observers(L, observers) -> dict[str, Observer]:
    obs = default_observers(L)
    if observers is None:
        return obs
    if isinstance(observers, Mapping):
        obs.update(observers)
    else:
        for f in observers:
            obs[getattr(f, "__name__", f"obs{len(obs)}")] = f
    return obs


# --- results ------------------------------------------------------------------

@dataclass
class TimeSeries:
    """Observables sampled on a uniform grid of ``times``."""

    times: np.ndarray
    data: dict[str, np.ndarray]

    def __getitem__(self, name):
        return self.data[name]

    @property
    def densities(self):
        return self.data["densities"]

    @property
    def bond_cn(self):
        return self.data["bond_cn"]

    @property
    def cn_mean(self):
        return self.data["cn_mean"]

    @property
    def bloch(self):
        return self.data["bloch"]


@dataclass
class TrajectoryResult:
    times: np.ndarray
    observables: TimeSeries
    final_state: np.ndarray
    seed: int
    index: int = 0
    states: np.ndarray | None = None


@dataclass
class EnsembleResult:
    """Trajectory means of every observer plus the averaged state.

    ``sem`` holds standard errors of the mean (NaN for a single
    trajectory). ``state_sem`` is the standard error of each complex
    matrix element in modulus, ``sqrt(var(Re) + var(Im)) / sqrt(M)``.
    """

    params: SimulationParams
    times: np.ndarray
    mean: TimeSeries
    sem: TimeSeries
    mean_state: np.ndarray
    state_sem: np.ndarray
    final_states: np.ndarray
    seeds: list[int] = field(default_factory=list)

    @property
    def n_traj(self) -> int:
        return self.final_states.shape[0]


# --- drivers --------------------------------------------------------------------

def _sample_steps(params: SimulationParams) -> np.ndarray:
    return np.arange(0, params.n_steps + 1, params.sample_stride)


@dataclass
class _Setup:
    params: SimulationParams
    H: np.ndarray
    U: np.ndarray
    observers: dict
    scheme: str
    backend: str | None

    @classmethod
    def make(cls, params, observers, scheme, backend):
        if scheme not in ("improved", "plain"):
            raise ValueError(f"unknown scheme {scheme!r}")
        H = build_hamiltonian(params.L, params.J)
        return cls(params, H, build_propagator(H, params.dt), _resolve_observers(params.L, observers),
                   scheme, backend)

    def advance(self, states, dW):
        p = self.params
        if self.scheme == "plain":
            return _advance_plain(states, self.H, p.k, p.eta, p.dt, dW)
        return kernel.advance(states, self.U, p.k, p.eta, p.dt, dW, backend=self.backend)


def _run_batch(setup: _Setup, indices, keep_series: bool, keep_states: bool):
    """Evolve trajectories ``indices`` together; returns series or running sums."""
    p = setup.params
    B, L = len(indices), p.L
    seeds = [trajectory_seed(p.seed, i) for i in indices]
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seeds]
    noiseless = p.eta == 0.0 or p.k == 0.0
    sqdt = math.sqrt(p.dt)

    states = np.repeat(init_localized(L, p.init_site)[None], B, axis=0)
    sample_steps = _sample_steps(p)
    n_samp = len(sample_steps)
    stride = p.sample_stride
    chunk = max(1, _CHUNK_TARGET // stride) * stride

    series = {}
    sums, sqs = {}, {}
    state_sum = np.zeros((n_samp, L, L), dtype=complex)
    state_sq = np.zeros((n_samp, L, L))
    snapshots = np.empty((B, n_samp, L, L), dtype=complex) if keep_states else None

    def record(j):
        for name, f in setup.observers.items():
            val = np.asarray(f(states), dtype=float)
            if keep_series:
                if name not in series:
                    series[name] = np.empty((B, n_samp) + val.shape[1:])
                series[name][:, j] = val
            else:
                if name not in sums:
                    sums[name] = np.zeros((n_samp,) + val.shape[1:])
                    sqs[name] = np.zeros((n_samp,) + val.shape[1:])
                sums[name][j] += val.sum(axis=0)
                sqs[name][j] += (val**2).sum(axis=0)
        state_sum[j] += states.sum(axis=0)
        state_sq[j] += (states.real**2 + states.imag**2).sum(axis=0)
        if keep_states:
            snapshots[:, j] = states

    record(0)
    j = 1
    step = 0
    n_steps = p.n_steps
    while step < n_steps:
        n = min(chunk, n_steps - step)
        if noiseless:
            dW = np.zeros((B, n, L))
        else:
            dW = np.stack([g.standard_normal((n, L)) for g in rngs]) * sqdt
        a = 0
        while a < n:
            # stop at the next sampling point or the end of the chunk
            nxt = min(n, (((step + a) // stride) + 1) * stride - step)
            status = setup.advance(states, dW[:, a:nxt])
            bad = np.flatnonzero(status >= 0)
            if bad.size:
                b0 = int(bad[0])
                at = step + a + int(status[b0])
                raise NumericBreakdown(
                    f"trajectory {indices[b0]} (seed {seeds[b0]}) broke down at step {at}",
                    step=at, index=indices[b0], seed=seeds[b0],
                )
            a = nxt
            if (step + a) % stride == 0 and j < n_samp:
                record(j)
                j += 1
        step += n

    return dict(series=series, sums=sums, sqs=sqs, state_sum=state_sum, state_sq=state_sq,
                final=states, seeds=seeds, snapshots=snapshots)


def run_trajectory(
    params: SimulationParams,
    observers: Mapping[str, Observer] | Sequence[Observer] | None = None,
    index: int = 0,
    store_states: bool = False,
    scheme: str = "improved",
    backend: str | None = None,
) -> TrajectoryResult:
    """Single quantum trajectory from the localised initial state.

    Deterministic in ``(params, index)``. Observers map a stack of states
    of shape ``(B, L, L)`` to arrays of shape ``(B, ...)``; they extend the
    defaults (densities, per-bond and mean coherence, Bloch vector at L=2).
    """
    setup = _Setup.make(params, observers, scheme, backend)
    out = _run_batch(setup, [index], keep_series=True, keep_states=store_states)
    times = _sample_steps(params) * params.dt
    data = {name: v[0] for name, v in out["series"].items()}
    return TrajectoryResult(
        times=times,
        observables=TimeSeries(times, data),
        final_state=out["final"][0].copy(),
        seed=out["seeds"][0],
        index=index,
        states=None if out["snapshots"] is None else out["snapshots"][0],
    )


def run_ensemble(
    params: SimulationParams,
    observers: Mapping[str, Observer] | Sequence[Observer] | None = None,
    batch_size: int = 256,
    threads: int = 1,
    scheme: str = "improved",
    backend: str | None = None,
) -> EnsembleResult:
    """Average ``params.n_traj`` independent trajectories.

    Scalar observables are averaged per trajectory first, so nonlinear
    quantities such as the coherence are trajectory averages and not
    functions of the averaged state. Batches are reduced in index order,
    which keeps the result bit-identical for any ``threads``.
    """
    setup = _Setup.make(params, observers, scheme, backend)
    M = params.n_traj
    batches = [list(range(a, min(M, a + batch_size))) for a in range(0, M, batch_size)]

    def work(idx):
        return _run_batch(setup, idx, keep_series=False, keep_states=False)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, batches))
    else:
        parts = [work(b) for b in batches]

    sums = {name: sum(p["sums"][name] for p in parts) for name in parts[0]["sums"]}
    sqs = {name: sum(p["sqs"][name] for p in parts) for name in parts[0]["sqs"]}
    state_sum = sum(p["state_sum"] for p in parts)
    state_sq = sum(p["state_sq"] for p in parts)

    mean = {name: s / M for name, s in sums.items()}
    mean_state = state_sum / M
    if M > 1:
        sem = {name: np.sqrt(np.maximum(sqs[name] / M - mean[name] ** 2, 0.0) * M / (M - 1) / M)
               for name in mean}
        var_state = np.maximum(state_sq / M - np.abs(mean_state) ** 2, 0.0) * M / (M - 1)
        state_sem = np.sqrt(var_state / M)
    else:
        sem = {name: np.full_like(v, np.nan) for name, v in mean.items()}
        state_sem = np.full(mean_state.shape, np.nan)

    times = _sample_steps(params) * params.dt
    return EnsembleResult(
        params=params,
        times=times,
        mean=TimeSeries(times, mean),
        sem=TimeSeries(times, sem),
        mean_state=mean_state,
        state_sem=state_sem,
        final_states=np.concatenate([p["final"] for p in parts]),
        seeds=[s for p in parts for s in p["seeds"]],
    )


def stationary_mean(ens: EnsembleResult, t_start: float, name: str = "cn_mean"):
    """Time average of an ensemble-mean observable over ``t >= t_start``.

    Returns ``(value, error)``. The error is the average per-sample
    standard error; samples inside the window are correlated, so it is a
    conservative single-sample bound rather than a reduced one.
    """
    sel = ens.times >= t_start - 1e-12
    if not sel.any():
        raise ValueError("no samples in the stationary window")
    vals = ens.mean[name][sel]
    errs = ens.sem[name][sel]
    return float(vals.mean(axis=0)), float(np.nanmean(errs))
