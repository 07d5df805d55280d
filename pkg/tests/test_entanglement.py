import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monitored_chain.core import init_localized
from monitored_chain.entanglement import (
    bond_coherences,
    coherence_profile,
    config_coherence,
    max_mean_coherence,
    mean_coherence,
    negativity_from_coherence,
)

from conftest import chain_lengths, random_density, random_pure, seeds


def brute_force(rho, b):
    L = rho.shape[0]
    return 2 * sum(abs(rho[i, j]) ** 2 for i in range(b) for j in range(b, L))


def bell(L, i, j):
    psi = np.zeros(L, dtype=complex)
    psi[i - 1] = psi[j - 1] = 1 / np.sqrt(2)
    return np.outer(psi, psi.conj())


class TestConfigCoherence:
    def test_two_site_bell(self):
        assert np.isclose(config_coherence(bell(2, 1, 2), 1), 0.5)

    def test_localized_zero(self):
        rho = init_localized(6, 3)
        assert np.all(bond_coherences(rho) == 0)

    def test_two_site_expression(self, rng):
        rho = random_density(rng, 2)
        assert np.isclose(config_coherence(rho, 1), 2 * abs(rho[0, 1]) ** 2)

    def test_distant_superposition_spans_bonds(self):
        # sites 1 and 4 of L=5: bonds 1..3 cut the pair, bond 4 does not
        np.testing.assert_allclose(bond_coherences(bell(5, 1, 4)), [0.5, 0.5, 0.5, 0.0])

    @pytest.mark.parametrize("b", [0, 4])
    def test_bond_out_of_range(self, b):
        with pytest.raises(ValueError):
            config_coherence(np.eye(4) / 4, b)

    @given(chain_lengths, seeds)
    def test_vectorised_matches_brute_force(self, L, seed):
        rho = random_density(np.random.default_rng(seed), L)
        expected = [brute_force(rho, b) for b in range(1, L)]
        np.testing.assert_allclose(bond_coherences(rho), expected, rtol=1e-12, atol=1e-15)
        for b in (1, L - 1):
            assert np.isclose(config_coherence(rho, b), expected[b - 1])

    @given(chain_lengths, seeds)
    def test_pure_state_bound(self, L, seed):
        rho = random_pure(np.random.default_rng(seed), L)
        cn = bond_coherences(rho)
        # pure state: C_N = 2 w (1 - w) with w the weight left of the bond
        w = np.cumsum(np.real(np.diag(rho)))[:-1]
        np.testing.assert_allclose(cn, 2 * w * (1 - w), atol=1e-12)
        assert np.all(cn <= 0.5 + 1e-12)

    @given(chain_lengths, seeds)
    def test_dephasing_kills_coherence(self, L, seed):
        rho = random_density(np.random.default_rng(seed), L)
        assert np.all(bond_coherences(np.diag(np.diag(rho))) == 0)

    @given(chain_lengths, seeds)
    def test_mirror_symmetry_palindrome(self, L, seed):
        rho = random_density(np.random.default_rng(seed), L)
        P = np.eye(L)[::-1]
        sym = 0.5 * (rho + P @ rho @ P)
        cn = bond_coherences(sym)
        np.testing.assert_allclose(cn, cn[::-1], atol=1e-14)

    def test_broadcast(self, rng):
        stack = np.stack([random_density(rng, 4) for _ in range(5)])
        assert bond_coherences(stack).shape == (5, 3)
        assert mean_coherence(stack).shape == (5,)
        assert config_coherence(stack, 2).shape == (5,)


class TestProfile:
    def test_mean_is_average(self, rng):
        prof = coherence_profile(random_density(rng, 7))
        assert prof.per_bond.shape == (6,)
        assert np.isclose(prof.mean, prof.per_bond.mean())

    def test_entries_in_range(self, rng):
        for _ in range(20):
            cn = coherence_profile(random_density(rng, 6)).per_bond
            assert np.all((cn >= 0) & (cn <= 0.5))


class TestNegativity:
    def test_bell(self):
        assert np.isclose(negativity_from_coherence(0.5), 0.5)

    def test_zero(self):
        assert negativity_from_coherence(0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            negativity_from_coherence(-1e-3)

    @given(st.floats(0, 0.5))
    def test_inverse(self, cn):
        assert np.isclose(2 * negativity_from_coherence(cn) ** 2, cn)


class TestMaximum:
    def test_example(self):
        assert max_mean_coherence([0, 1, 2], [0, 0.3, 0.1]) == (1.0, 0.3)

    def test_monotone_decreasing(self):
        assert max_mean_coherence([0, 1, 2], [0.3, 0.2, 0.1]) == (0.0, 0.3)

    def test_tie_takes_earliest(self):
        assert max_mean_coherence([0, 1, 2, 3], [0.1, 0.4, 0.4, 0.2])[0] == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            max_mean_coherence([], [])

    def test_series_object(self):
        class S:
            times = np.array([0.0, 0.5])
            cn_mean = np.array([0.0, 0.2])

        assert max_mean_coherence(S()) == (0.5, 0.2)
