"""Photon-loss channel against scipy-built Kraus matrices and RK4.

The dense oracle below assembles K_k = sqrt(eta^k/k!) e^{-gamma t n/2} a^k
from explicit matrix powers, sharing no code with the banded fast path.
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from catkeeper import closedform, fock, lindblad
from catkeeper.errors import IntegrationDivergedError, TruncationError


def dense_kraus(gamma: float, t: float, dim: int) -> list[np.ndarray]:
    """Independent oracle: textbook Kraus matrices via matrix powers."""
    eta = 1.0 - math.exp(-gamma * t)
    a = fock.annihilation(dim)
    decay = np.diag(np.exp(-0.5 * gamma * t * np.arange(dim)))
    ops = []
    a_pow = np.eye(dim, dtype=np.complex128)
    for k in range(dim):
        coeff = math.sqrt(eta**k / math.factorial(k)) if eta > 0 else (
            1.0 if k == 0 else 0.0
        )
        ops.append(coeff * decay @ a_pow)
        a_pow = a @ a_pow
    return ops


def dense_evolve(rho: np.ndarray, gamma: float, t: float) -> np.ndarray:
    out = np.zeros_like(rho)
    for op in dense_kraus(gamma, t, rho.shape[0]):
        out += op @ rho @ op.conj().T
    return out


def random_density(dim: int, seed: int) -> np.ndarray:
    gen = np.random.default_rng(seed)
    mat = gen.normal(size=(dim, dim)) + 1j * gen.normal(size=(dim, dim))
    rho = mat @ mat.conj().T
    return rho / np.trace(rho).real


class TestDampingBands:
    def test_zero_time_is_identity_band(self):
        offsets, coeffs = lindblad.damping_bands(1.0, 0.0, 8)
        assert list(offsets) == [0]
        np.testing.assert_array_equal(coeffs, np.ones((1, 8)))

    def test_full_relaxation_collapses_to_vacuum(self):
        rho = random_density(6, 3)
        out = lindblad.kraus_evolve(rho, 1.0, 1e9)
        expect = np.zeros((6, 6), dtype=np.complex128)
        expect[0, 0] = 1.0
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_completeness(self):
        for gt in (0.01, 0.3, 2.0):
            offsets, coeffs = lindblad.damping_bands(1.0, gt, 32)
            total = (coeffs**2).sum(axis=0)
            assert np.abs(total - 1.0).max() <= 1e-10

    def test_matches_dense_kraus_oracle(self):
        gamma, t, dim = 0.8, 0.45, 18
        chan = lindblad.DampingChannel(gamma, t, dim)
        dense = dense_kraus(gamma, t, dim)
        banded = chan.kraus_operators()
        assert chan.kraus_count <= dim
        for k, op in enumerate(banded):
            np.testing.assert_allclose(op, dense[k], atol=1e-12)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            lindblad.damping_bands(-1.0, 0.1, 8)
        with pytest.raises(ValueError):
            lindblad.damping_bands(1.0, -0.1, 8)


class TestKrausEvolve:
    def test_vacuum_stationary(self):
        vac = np.zeros((8, 8), dtype=np.complex128)
        vac[0, 0] = 1.0
        out = lindblad.kraus_evolve(vac, 1.7, 2.3)
        np.testing.assert_allclose(out, vac, atol=1e-14)

    def test_coherent_stays_coherent(self):
        alpha, gamma, t = 1.4, 1.0, 0.6
        dim = fock.truncation_dim(alpha)
        rho = fock.density_matrix(fock.coherent_state(alpha, dim))
        out = lindblad.kraus_evolve(rho, gamma, t)
        target = fock.coherent_state(alpha * math.exp(-0.5 * gamma * t), dim)
        assert fock.state_fidelity(target, out) >= 1.0 - 1e-8
        assert abs(fock.purity(out) - 1.0) <= 1e-8

    def test_cat_matches_closed_form(self):
        alpha, gamma, t = 2.0, 1.0, 0.1
        dim = fock.truncation_dim(alpha)
        rho = fock.density_matrix(fock.cat_state(alpha, "even", dim))
        out = lindblad.kraus_evolve(rho, gamma, t)
        dec = closedform.damped_cat(alpha, gamma, t)
        expect = closedform.reconstruct_density(dec, dim)
        assert fock.trace_distance(out, expect) <= 1e-6

    def test_matches_dense_oracle_on_random_density(self):
        rho = random_density(14, 11)
        out = lindblad.kraus_evolve(rho, 0.9, 0.7)
        expect = dense_evolve(rho, 0.9, 0.7)
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_trace_and_positivity(self):
        rho = random_density(12, 5)
        out = lindblad.kraus_evolve(rho, 1.3, 0.8)
        assert abs(np.trace(out).real - 1.0) <= 1e-9
        assert np.linalg.eigvalsh(out).min() >= -1e-9

    def test_semigroup(self):
        rho = random_density(16, 7)
        one = lindblad.kraus_evolve(rho, 1.0, 0.9)
        two = lindblad.kraus_evolve(
            lindblad.kraus_evolve(rho, 1.0, 0.4), 1.0, 0.5
        )
        assert fock.trace_distance(one, two) <= 1e-8

    def test_photon_number_decays_exponentially(self):
        alpha, gamma, t = 1.8, 0.7, 1.1
        dim = fock.truncation_dim(alpha)
        rho = fock.density_matrix(fock.cat_state(alpha, "even", dim))
        out = lindblad.kraus_evolve(rho, gamma, t)
        expect = math.exp(-gamma * t) * lindblad.mean_photon(rho)
        assert abs(lindblad.mean_photon(out) - expect) <= 1e-8

    def test_completeness_guard_raises(self):
        # A coarse cutoff keeps too few bands to resolve the channel.
        with pytest.raises(TruncationError):
            lindblad.damping_bands(1.0, 0.5, 24, cutoff=1e-2)


class TestTwoModeEvolve:
    def test_product_state_evolves_per_mode(self):
        da, db = 14, 10
        rho_a = fock.density_matrix(fock.coherent_state(1.0, da))
        rho_b = fock.density_matrix(fock.coherent_state(0.6, db))
        joint = fock.tensor(rho_a, rho_b)
        out = lindblad.kraus_evolve_two_mode(joint, 0.9, 0.5, da, db)
        expect = fock.tensor(
            lindblad.kraus_evolve(rho_a, 0.9, 0.5),
            lindblad.kraus_evolve(rho_b, 0.9, 0.5),
        )
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_joint_cat_weights(self):
        dim = 14
        psi = closedform.joint_cat_state(1.0, 0.5, "even", dim, dim)
        rho = fock.density_matrix(psi)
        out = lindblad.kraus_evolve_two_mode(rho, 1.0, 0.2, dim, dim)
        assert abs(np.trace(out).real - 1.0) <= 1e-10
        dec = closedform.two_cavity_weights(1.0, 0.5, 1.0, 0.2)
        n = np.arange(dim)
        sign = np.where(((n[:, None] + n[None, :]) % 2 == 0), 1.0, -1.0)
        parity = float(np.sum(sign.reshape(-1) * np.diagonal(out).real))
        assert abs(parity - (dec.p_even - dec.p_odd)) <= 1e-8

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            lindblad.kraus_evolve_two_mode(np.eye(12) / 12.0, 1.0, 0.1, 3, 5)


class TestRk4Evolve:
    def test_zero_rate_is_identity(self):
        rho = random_density(10, 1)
        out = lindblad.rk4_evolve(rho, 0.0, 5.0)
        np.testing.assert_array_equal(out, rho)

    def test_vacuum_stationary(self):
        vac = np.zeros((6, 6), dtype=np.complex128)
        vac[0, 0] = 1.0
        out = lindblad.rk4_evolve(vac, 1.0, 1.0)
        np.testing.assert_allclose(out, vac, atol=1e-12)

    def test_step_rule(self):
        assert lindblad.rk4_steps(1.0, 0.1, 26) == max(
            100, math.ceil(200.0 * 0.1 * 26 / 64.0)
        )
        assert lindblad.rk4_steps(2.0, 3.0, 64) == 1200
        assert lindblad.rk4_steps(0.0, 1.0, 512) == 100

    def test_matches_kraus(self):
        alpha, gamma, t = 2.0, 1.0, 0.1
        dim = fock.truncation_dim(alpha)
        rho = fock.density_matrix(fock.cat_state(alpha, "even", dim))
        via_rk4 = lindblad.rk4_evolve(rho, gamma, t)
        via_kraus = lindblad.kraus_evolve(rho, gamma, t)
        assert fock.trace_distance(via_rk4, via_kraus) <= 1e-7
        assert abs(np.trace(via_rk4).real - 1.0) <= 1e-9

    def test_matches_exact_exponential_map(self):
        # Third route: vectorize the generator and take one matrix
        # exponential of the superoperator.
        gamma, t, dim = 0.8, 0.35, 10
        a = fock.annihilation(dim)
        n_op = fock.number_operator(dim)
        eye = np.eye(dim)
        lind = 0.5 * gamma * (
            2.0 * np.kron(a, a.conj())
            - np.kron(n_op, eye)
            - np.kron(eye, n_op.conj())
        )
        rho = random_density(dim, 23)
        expect = (expm(lind * t) @ rho.reshape(-1)).reshape(dim, dim)
        out = lindblad.rk4_evolve(rho, gamma, t)
        np.testing.assert_allclose(out, expect, atol=1e-9)

    def test_unstable_step_count_raises(self):
        dim = fock.truncation_dim(2.0)
        rho = fock.density_matrix(fock.cat_state(2.0, "even", dim))
        with pytest.raises(IntegrationDivergedError):
            lindblad.rk4_evolve(rho, 2.0, 1.5, steps=8)


class TestObservables:
    def test_vacuum(self):
        vac = np.zeros((5, 5))
        vac[0, 0] = 1.0
        assert lindblad.mean_photon(vac) == 0.0
        assert lindblad.parity_expectation(vac) == 1.0

    def test_even_cat_parity(self):
        dim = fock.truncation_dim(2.2)
        rho = fock.density_matrix(fock.cat_state(2.2, "even", dim))
        assert abs(lindblad.parity_expectation(rho) - 1.0) <= 1e-10

    def test_damped_cat_parity_matches_weights(self):
        alpha, gamma, t = 2.0, 1.0, 0.1
        dim = fock.truncation_dim(alpha)
        rho = lindblad.kraus_evolve(
            fock.density_matrix(fock.cat_state(alpha, "even", dim)), gamma, t
        )
        dec = closedform.damped_cat(alpha, gamma, t)
        expect = 2.0 * dec.p_even - 1.0
        assert abs(lindblad.parity_expectation(rho) - expect) <= 1e-8
