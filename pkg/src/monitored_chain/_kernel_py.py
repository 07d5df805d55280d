"""Pure-numpy trajectory kernel, vectorised across the trajectory batch.

Mirrors ``_kernel.pyx`` argument for argument; used when the compiled
extension is unavailable or ``MONITORED_CHAIN_BACKEND=python``.
"""
import numpy as np

TRACE_FLOOR = 1e-12


def advance(states, U, k, eta, dt, dW):
    """Advance a batch of states through ``dW.shape[1]`` Kraus steps in place.

    Parameters
    ----------
    states : complex ndarray, shape (B, L, L)
        Density matrices, overwritten with the evolved states.
    U : complex ndarray, shape (L, L)
        Half-step propagator ``exp(-i H dt / 2)``.
    k, eta, dt : float
        Measurement strength, readout efficiency, timestep.
    dW : float ndarray, shape (B, n, L)
        Wiener increments, one row of L sites per step.

    Returns
    -------
    ndarray of int64, shape (B,)
        ``-1`` where the trajectory completed, otherwise the 0-based step
        at which the unnormalised trace fell below ``TRACE_FLOOR``. A
        failed trajectory keeps its last good state.
    """
    B, L, _ = states.shape
    n = dW.shape[1]
    Ud = U.conj().T
    idx = np.arange(L)
    sk = np.sqrt(eta * k)
    c0 = 1.0 - 0.5 * k * dt
    c_deph = (1.0 - eta) * k * dt
    status = np.full(B, -1, dtype=np.int64)
    alive = np.ones(B, dtype=bool)

    for s in range(n):
        p = states[:, idx, idx].real
        sigma = U @ states @ Ud
        w = dW[:, s, :]
        m = c0 + sk * (2.0 * sk * p * dt + w) + 0.5 * eta * k * (w * w - dt)
        X = sigma * m[:, :, None] * m[:, None, :]
        X[:, idx, idx] = X[:, idx, idx].real + c_deph * sigma[:, idx, idx].real
        tr = X[:, idx, idx].real.sum(axis=1)
        bad = alive & ~(tr > TRACE_FLOOR)
        if bad.any():
            status[bad] = s
            alive &= ~bad
            tr = np.where(alive, tr, 1.0)
        new = (U @ X @ Ud) / tr[:, None, None]
        new = 0.5 * (new + np.conj(np.swapaxes(new, 1, 2)))
        if alive.all():
            states[...] = new
        else:
            states[alive] = new[alive]
    return status
