"""Configuration coherence across bonds of a single-particle chain.

For one particle the coherence across bond ``b`` is twice the squared
Frobenius norm of the off-diagonal block linking sites ``<= b`` to sites
``> b``. All array functions broadcast over leading axes so they can be
evaluated on whole trajectory batches.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoherenceProfile:
    per_bond: np.ndarray
    mean: float


def bond_coherences(rho: np.ndarray) -> np.ndarray:
    """C_N for every bond ``b = 1 .. L-1``; shape ``(..., L-1)``.

    Uses the cumulative block sum of ``|rho_ij|^2``: the cross block for
    bond ``b`` is rows ``< b`` (0-based) by columns ``>= b``.
    """
    a2 = np.abs(rho) ** 2
    L = a2.shape[-1]
    # S[r, c] = sum_{i<=r, j>=c} a2[i, j]
    rows = np.cumsum(a2, axis=-2)
    S = np.flip(np.cumsum(np.flip(rows, axis=-1), axis=-1), axis=-1)
    b = np.arange(L - 1)
    return 2.0 * S[..., b, b + 1]


def config_coherence(rho: np.ndarray, b: int) -> float:
    """C_N(rho, b) for the 1-based bond ``b``."""
    rho = np.asarray(rho)
    L = rho.shape[-1]
    if not 1 <= b <= L - 1:
        raise ValueError(f"bond {b} outside 1..{L - 1}")
    block = rho[..., :b, b:]
    return 2.0 * np.sum(np.abs(block) ** 2, axis=(-2, -1))


def mean_coherence(rho: np.ndarray) -> np.ndarray | float:
    """Bond-averaged configuration coherence."""
    return bond_coherences(rho).mean(axis=-1)


def coherence_profile(rho: np.ndarray) -> CoherenceProfile:
    per_bond = bond_coherences(np.asarray(rho))
    return CoherenceProfile(per_bond=per_bond, mean=float(per_bond.mean()))


def negativity_from_coherence(cn: float) -> float:
    """Negativity of a single-particle state from its configuration coherence."""
    if cn < 0:
        raise ValueError(f"configuration coherence must be >= 0, got {cn}")
    return float(np.sqrt(cn / 2.0))


def max_mean_coherence(times, values=None) -> tuple[float, float]:
    """Time and value of the largest sampled mean coherence.

    Ties resolve to the earliest sample. ``times`` may instead be a series
    object carrying ``times`` and ``cn_mean`` attributes.
    """
    if values is None:
        times, values = times.times, times.cn_mean
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty series")
    i = int(np.argmax(values))
    return float(times[i]), float(values[i])
