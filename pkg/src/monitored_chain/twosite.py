"""Two-site reductions: Bloch vectors, the Bloch SDE and closed forms.

North pole ``z = +1`` is the particle on site 1, south pole on site 2.
These routines serve as independent checks of the matrix engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidDimensionError

BLOCH_TOL = 1e-10


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm2(self) -> float:
        return self.x**2 + self.y**2 + self.z**2


def bloch_from_rho(rho) -> BlochVector:
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise InvalidDimensionError(f"need a 2x2 state, got shape {rho.shape}")
    r21 = rho[1, 0]
    return BlochVector(2.0 * r21.real, 2.0 * r21.imag, float((rho[0, 0] - rho[1, 1]).real))


def rho_from_bloch(v) -> np.ndarray:
    x, y, z = v.as_array() if isinstance(v, BlochVector) else np.asarray(v, dtype=float)
    if x * x + y * y + z * z > 1.0 + BLOCH_TOL:
        raise ValueError("Bloch vector lies outside the unit ball")
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


def bloch_drift_diffusion(v, k, eta):
    """Drift and diffusion vectors of the two-site SDE at ``v``."""
    x, y, z = v
    g = math.sqrt(2.0 * eta * k)
    drift = np.array([-x * k, -y * k - z, y])
    diff = np.array([-x * z * g, -y * z * g, (1.0 - z * z) * g])
    return drift, diff


def bloch_sde_step(v, k, eta, dt, dW):
    """Euler-Maruyama step; ``dW`` is the combined increment ``(dW1 - dW2)/sqrt 2``."""
    arr = v.as_array() if isinstance(v, BlochVector) else np.asarray(v, dtype=float)
    drift, diff = bloch_drift_diffusion(arr, k, eta)
    out = arr + drift * dt + diff * dW
    return BlochVector(*out) if isinstance(v, BlochVector) else out


def combined_increment(dW_sites):
    """Map per-site increments ``(..., 2)`` to the single Bloch-sphere increment."""
    dW_sites = np.asarray(dW_sites)
    return (dW_sites[..., 0] - dW_sites[..., 1]) / math.sqrt(2.0)


def integrate_bloch(v0, k, eta, dt, dW):
    """Integrate the Bloch SDE along the combined increments ``dW``.

    ``v0`` has shape ``(3,)`` or ``(B, 3)``; ``dW`` has shape ``(n,)`` or
    ``(B, n)``. Returns the final vectors.
    """
    v = np.array(v0, dtype=float)
    dW = np.asarray(dW, dtype=float)
    g = math.sqrt(2.0 * eta * k)
    x, y, z = v[..., 0].copy(), v[..., 1].copy(), v[..., 2].copy()
    for s in range(dW.shape[-1]):
        w = dW[..., s]
        x, y, z = (
            x - x * k * dt - x * z * g * w,
            y - y * k * dt - z * dt - y * z * g * w,
            z + y * dt + (1.0 - z * z) * g * w,
        )
    return np.stack([x, y, z], axis=-1)


def analytical_cn_eta0(k, t):
    """Coherence of the unread (eta = 0) two-site evolution from site 1.

    Underdamped for ``k < 2``, critical at ``k = 2``, overdamped above.
    """
    t = np.asarray(t, dtype=float)
    if k < 0:
        raise ValueError("k must be >= 0")
    if k < 2:
        w = math.sqrt(1.0 - (k / 2) ** 2)
        out = np.exp(-k * t) / (2 * w * w) * np.sin(w * t) ** 2
    elif k == 2:
        out = 0.5 * t**2 * np.exp(-2.0 * t)
    else:
        w = math.sqrt((k / 2) ** 2 - 1.0)
        # e^{-kt} sinh^2(wt) = (e^{(w-k)t} - e^{-(w+k)t})^2 / 4 with e^{-kt} split evenly
        out = (np.exp((w - k / 2) * t) - np.exp(-(w + k / 2) * t)) ** 2 / (8 * w * w)
    return out if out.ndim else float(out)


def small_eta_stationary_moments(k, eta):
    """Stationary E[y^2], E[z^2], E[yz] and mean coherence for small ``eta``.

    Linearised about the maximally mixed state, so meaningful only for
    ``eta << 1``. ``E[z^2] = eta (1 - k)`` turns negative for ``k > 1``,
    where the linearisation no longer holds; it is returned unchanged.
    """
    return eta, eta * (1.0 - k), -eta * k, eta / 2.0


def avg_pure_state_coherence(n_nodes: int | None = None) -> float:
    """Mean coherence of pure two-site states on the ``x = 0`` circle.

    With ``n_nodes`` the circle average is done by the trapezoid rule over
    states ``cos t |1> + i sin t |2>`` instead of returning 1/4.
    """
    if n_nodes is None:
        return 0.25
    from .entanglement import config_coherence

    theta = np.linspace(0.0, 2.0 * np.pi, n_nodes + 1)
    psi = np.stack([np.cos(theta), 1j * np.sin(theta)], axis=-1)
    rho = psi[:, :, None] * psi[:, None, :].conj()
    vals = config_coherence(rho, 1)
    return float(np.trapezoid(vals, theta) / (2.0 * np.pi))


@dataclass
class BlochHistogram:
    """Probability mass on a regular (y, z) grid over [-1, 1]^2."""

    y_edges: np.ndarray
    z_edges: np.ndarray
    mass: np.ndarray
    outside: np.ndarray

    @property
    def y_centers(self):
        return 0.5 * (self.y_edges[1:] + self.y_edges[:-1])

    @property
    def z_centers(self):
        return 0.5 * (self.z_edges[1:] + self.z_edges[:-1])

    @property
    def density(self):
        area = np.outer(np.diff(self.y_edges), np.diff(self.z_edges))
        return self.mass / area

    def pole_mass(self, radius: float) -> float:
        """Mass in bins whose centre lies within ``radius`` of either pole."""
        Y, Z = np.meshgrid(self.y_centers, self.z_centers, indexing="ij")
        near = (np.hypot(Y, Z - 1) <= radius) | (np.hypot(Y, Z + 1) <= radius)
        return float(self.mass[near].sum())

    def rows(self):
        Y, Z = np.meshgrid(self.y_centers, self.z_centers, indexing="ij")
        return np.column_stack([Y.ravel(), Z.ravel(), self.density.ravel()])


def bloch_disk_histogram(vectors, bins: int = 101, x_tol: float = 1e-6,
                         mass_tol: float = 1e-12) -> BlochHistogram:
    """Histogram final Bloch vectors on the ``x = 0`` disk.

    Bins lying wholly outside the unit disk are kept and flagged; the
    histogram is rejected if they carry mass.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    if v.size and np.max(np.abs(v[:, 0])) > x_tol:
        raise ValueError(f"|x| = {np.max(np.abs(v[:, 0])):.3g} exceeds {x_tol:g}; not on the x = 0 disk")
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _, _ = np.histogram2d(v[:, 1], v[:, 2], bins=[edges, edges])
    total = counts.sum()
    mass = counts / total if total else counts
    # nearest point of each bin to the origin
    lo, hi = edges[:-1], edges[1:]
    near = np.where(lo > 0, lo, np.where(hi < 0, -hi, 0.0))
    outside = np.hypot(near[:, None], near[None, :]) > 1.0
    if mass[outside].sum() > mass_tol:
        raise ValueError("histogram mass found outside the unit disk")
    return BlochHistogram(edges, edges.copy(), mass, outside)
