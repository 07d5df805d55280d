"""Single-particle states on an open chain.

States live in the one-particle sector, so a density matrix is L x L in
the site basis |i> = a_i^dag |0>. Sites and bonds are 1-based wherever a
user passes them in; arrays are 0-based internally.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

TOL_TRACE = 1e-10
TOL_HERM = 1e-10
TOL_PSD = 1e-8
TOL_UNITARY = 1e-12


class InvalidDimensionError(ValueError):
    """Chain length or matrix shape not supported."""


class NumericError(ArithmeticError):
    """Non-finite input or output in a numerical routine."""


@dataclass(frozen=True)
class SimulationParams:
    """Physical and numerical knobs of a run.

    ``k`` and ``dt`` are in units of the hopping ``J`` (fixed to 1 in all
    presets). ``init_site`` is 1-based. ``seed`` is the master seed from
    which every trajectory stream is derived.
    """

    L: int = 2
    J: float = 1.0
    k: float = 1.0
    eta: float = 0.0
    dt: float = 1e-3
    t_f: float = 1.0
    seed: int = 0
    n_traj: int = 1
    init_site: int = 1
    sample_stride: int = 10

    def __post_init__(self):
        if int(self.L) < 2:
            raise InvalidDimensionError(f"chain length must be >= 2, got {self.L}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if not (self.dt > 0 and self.t_f > 0):
            raise ValueError("dt and t_f must be positive")
        if self.n_traj < 1 or self.sample_stride < 1:
            raise ValueError("n_traj and sample_stride must be >= 1")
        if not 1 <= self.init_site <= self.L:
            raise ValueError(f"init_site {self.init_site} outside 1..{self.L}")
        # relative slack so that k * dt landing a hair above 0.01 stays silent
        kdt = self.k * self.dt * (1.0 - 1e-9)
        if kdt > 0.1:
            raise ValueError(f"k*dt = {kdt:g} > 0.1; reduce dt")
        if kdt > 0.01:
            warnings.warn(f"k*dt = {kdt:g} exceeds 0.01", RuntimeWarning, stacklevel=3)

    @property
    def n_steps(self) -> int:
        # guard against t_f/dt landing a hair above an integer
        return max(1, math.ceil(self.t_f / self.dt - 1e-9))

    def replace(self, **changes) -> "SimulationParams":
        fields = {**self.__dict__, **changes}
        return SimulationParams(**fields)


def build_hamiltonian(L: int, J: float = 1.0) -> np.ndarray:
    """Open-chain hopping Hamiltonian with ``J/2`` on the first off-diagonals."""
    if L < 2:
        raise InvalidDimensionError(f"chain length must be >= 2, got {L}")
    off = np.full(L - 1, 0.5 * J)
    return np.diag(off, 1) + np.diag(off, -1)


def build_propagator(H: np.ndarray, dt: float) -> np.ndarray:
    """Half-step propagator ``exp(-i H dt / 2)``.

    Computed from the eigendecomposition of the real symmetric ``H``; the
    caller builds it once per run.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    H = np.asarray(H)
    if not np.all(np.isfinite(H)) or not math.isfinite(dt):
        raise NumericError("non-finite Hamiltonian or timestep")
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-0.5j * dt * w)) @ V.conj().T
    return np.ascontiguousarray(U)


def init_localized(L: int, site: int) -> np.ndarray:
    """Projector onto the 1-based ``site``."""
    if L < 2:
        raise InvalidDimensionError(f"chain length must be >= 2, got {L}")
    if not 1 <= site <= L:
        raise ValueError(f"site {site} outside 1..{L}")
    rho = np.zeros((L, L), dtype=complex)
    rho[site - 1, site - 1] = 1.0
    return rho


def local_densities(rho: np.ndarray) -> np.ndarray:
    """Occupations <n_i>; broadcasts over leading axes."""
    return np.real(np.diagonal(rho, axis1=-2, axis2=-1)).copy()


def position_variance(rho: np.ndarray, origin: int) -> np.ndarray | float:
    """Second moment of the position about the 1-based ``origin``."""
    n = local_densities(rho)
    x = np.arange(1, n.shape[-1] + 1) - origin
    return (n * x**2).sum(axis=-1)


def purity(rho: np.ndarray) -> np.ndarray | float:
    return np.real(np.einsum("...ij,...ji->...", rho, rho))


@dataclass
class ValidationReport:
    herm_dev: float
    trace_dev: float
    min_eig: float
    purity: float
    hermitian_ok: bool
    trace_ok: bool
    psd_ok: bool
    purity_ok: bool

    @property
    def ok(self) -> bool:
        return self.hermitian_ok and self.trace_ok and self.psd_ok and self.purity_ok

    def violations(self) -> list[str]:
        out = []
        if not self.hermitian_ok:
            out.append(f"hermiticity deviation {self.herm_dev:.3g}")
        if not self.trace_ok:
            out.append(f"trace deviation {self.trace_dev:.3g}")
        if not self.psd_ok:
            out.append(f"minimum eigenvalue {self.min_eig:.3g}")
        if not self.purity_ok:
            out.append(f"purity {self.purity:.6g} outside [1/L, 1]")
        return out


def validate_state(
    rho: np.ndarray,
    tol_herm: float = TOL_HERM,
    tol_trace: float = TOL_TRACE,
    tol_psd: float = TOL_PSD,
) -> ValidationReport:
    """Audit a density matrix against the physicality tolerances.

    Never raises on an unphysical input; inspect ``report.ok`` or
    ``report.violations()``.
    """
    rho = np.asarray(rho)
    L = rho.shape[-1]
    herm_dev = float(np.max(np.abs(rho - rho.conj().T)))
    trace_dev = float(abs(np.trace(rho) - 1.0))
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    p = float(purity(rho))
    tol_p = max(tol_trace, tol_psd) * L
    return ValidationReport(
        herm_dev=herm_dev,
        trace_dev=trace_dev,
        min_eig=min_eig,
        purity=p,
        hermitian_ok=herm_dev <= tol_herm,
        trace_ok=trace_dev <= tol_trace,
        psd_ok=min_eig >= -tol_psd,
        purity_ok=(1.0 / L - tol_p) <= p <= (1.0 + tol_p),
    )
