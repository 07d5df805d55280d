import numpy as np
import pytest
from hypothesis import strategies as st
from scipy.linalg import expm


def random_density(rng, L, rank=None):
    """Random density matrix of the given rank (full rank by default)."""
    r = rank or L
    A = rng.standard_normal((L, r)) + 1j * rng.standard_normal((L, r))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def random_pure(rng, L):
    return random_density(rng, L, rank=1)


def liouvillian(H, k):
    """Superoperator of d rho/dt = -i[H, rho] + k (diag(rho) - rho), row-major vec."""
    L = H.shape[0]
    eye = np.eye(L)
    sup = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    deph = np.zeros((L * L, L * L))
    for i in range(L):
        deph[i * L + i, i * L + i] = 1.0
    return sup + k * (deph - np.eye(L * L))


def lindblad_states(H, k, rho0, times):
    """Exact unread evolution at ``times`` by matrix exponentials."""
    L = H.shape[0]
    gen = liouvillian(H, k)
    v0 = rho0.reshape(-1)
    return np.array([(expm(gen * t) @ v0).reshape(L, L) for t in times])


seeds = st.integers(min_value=0, max_value=2**32 - 1)
chain_lengths = st.integers(min_value=2, max_value=12)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
