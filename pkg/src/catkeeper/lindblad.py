"""Zero-temperature photon loss: exact Kraus channel and RK4 integrator.

The master equation drho/dt = (gamma/2)(2 a rho a+ - n rho - rho n) is
solved exactly over a finite interval by the amplitude-damping Kraus
family

    K_k = sqrt((1 - eta)^n_hat eta^k / k!) a^k,   eta = 1 - exp(-gamma t)

Each K_k is a single k-th diagonal band, so applying the whole channel is
elementwise: (K_k rho K_k+)[i, j] = c_k[i+k] c_k[j+k] rho[i+k, j+k] with

    c_k[n] = sqrt(binom(n, k) eta^k (1 - eta)^(n-k))

On the truncated space the completeness sum over bands is exactly the
binomial theorem, so trace is preserved to rounding error rather than to a
truncation error. The RK4 path integrates the generator directly and is
kept as an independent cross-check of the Kraus route.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import IntegrationDivergedError, TruncationError

COMPLETENESS_TOL = 1e-10
TRACE_DRIFT_TOL = 1e-6
BAND_CUTOFF = 1e-14

__all__ = [
    "DampingChannel",
    "damping_bands",
    "kraus_evolve",
    "kraus_evolve_two_mode",
    "mean_photon",
    "parity_expectation",
    "rk4_evolve",
    "rk4_steps",
]


def damping_bands(
    gamma: float, t: float, dim: int, cutoff: float = BAND_CUTOFF
) -> tuple[np.ndarray, np.ndarray]:
    """Band coefficients of the amplitude-damping Kraus family.

    Returns (offsets, coeffs) where offsets[b] = k is the number of lost
    photons and coeffs[b, n] is the factor K_k applies when mapping level
    n to level n - k (zero for n < k). Bands are truncated once the
    binomial tail at the top level drops below `cutoff`; completeness on
    the kept bands is verified to COMPLETENESS_TOL.
    """
    if gamma < 0.0 or t < 0.0:
        raise ValueError("gamma and t must be nonnegative")
    if dim < 1:
        raise ValueError("dim must be positive")
    eta = -math.expm1(-gamma * t)  # 1 - exp(-gamma t)
    if eta <= 0.0:
        offsets = np.zeros(1, dtype=np.int64)
        coeffs = np.ones((1, dim), dtype=np.float64)
        return offsets, coeffs
    if eta >= 1.0:
        # Everything relaxes to vacuum: K_k = |0><k|.
        offsets = np.arange(dim, dtype=np.int64)
        coeffs = np.eye(dim, dtype=np.float64)
        return offsets, coeffs

    n = np.arange(dim, dtype=np.float64)
    log_eta = math.log(eta)
    log_keep = math.log1p(-eta)
    rows = []
    total = np.zeros(dim)
    for k in range(dim):
        coeff = np.zeros(dim)
        m = n[k:]
        log_binom = gammaln(m + 1.0) - gammaln(m - k + 1.0) - gammaln(k + 1.0)
        log_w = log_binom + k * log_eta + (m - k) * log_keep
        coeff[k:] = np.exp(0.5 * log_w)
        rows.append(coeff)
        total += coeff**2
        # Binomial tail above k at the top level bounds every column's
        # remaining mass, since the tail is monotone in n.
        if 1.0 - total[-1] <= cutoff:
            break
    defect = float(np.max(np.abs(total - 1.0)))
    if defect > COMPLETENESS_TOL:
        raise TruncationError(
            f"Kraus completeness defect {defect:.3g} at dim {dim}, "
            f"gamma t = {gamma * t:.3g}"
        )
    offsets = np.arange(len(rows), dtype=np.int64)
    coeffs = np.asarray(rows, dtype=np.float64)
    return offsets, coeffs


class DampingChannel:
    """Amplitude-damping channel over a fixed interval on a fixed space."""

    def __init__(self, gamma: float, t: float, dim: int):
        self.gamma = float(gamma)
        self.t = float(t)
        self.dim = int(dim)
        self.offsets, self.coeffs = damping_bands(gamma, t, dim)

    @property
    def kraus_count(self) -> int:
        return len(self.offsets)

    def kraus_operators(self) -> list[np.ndarray]:
        """Dense Kraus matrices, mainly for inspection and tests."""
        ops = []
        for k, coeff in zip(self.offsets, self.coeffs):
            op = np.zeros((self.dim, self.dim), dtype=np.complex128)
            idx = np.arange(self.dim - k)
            op[idx, idx + k] = coeff[k:]
            ops.append(op)
        return ops

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply the channel to a density operator (or a batch of them)."""
        rho = np.asarray(rho, dtype=np.complex128)
        out = np.zeros_like(rho)
        d = self.dim
        for k, coeff in zip(self.offsets, self.coeffs):
            v = coeff[k:]
            block = v[:, None] * v[None, :]
            out[..., : d - k, : d - k] += block * rho[..., k:, k:]
        return out


@lru_cache(maxsize=128)
def _cached_channel(gamma: float, t: float, dim: int) -> DampingChannel:
    return DampingChannel(gamma, t, dim)


def kraus_evolve(rho: np.ndarray, gamma: float, t: float) -> np.ndarray:
    """Exact amplitude damping of rho for time t."""
    rho = np.asarray(rho, dtype=np.complex128)
    return _cached_channel(float(gamma), float(t), rho.shape[-1]).apply(rho)


def kraus_evolve_two_mode(
    rho: np.ndarray, gamma: float, t: float, dim_a: int, dim_b: int
) -> np.ndarray:
    """Exact damping of both modes of a joint density operator.

    The two single-mode channels commute, so they are applied one mode at
    a time through a reshape to (dim_a, dim_b, dim_a, dim_b).
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (dim_a * dim_b, dim_a * dim_b):
        raise ValueError("joint density shape does not match mode dimensions")
    work = rho.reshape(dim_a, dim_b, dim_a, dim_b)

    chan_a = _cached_channel(float(gamma), float(t), dim_a)
    out = np.zeros_like(work)
    for k, coeff in zip(chan_a.offsets, chan_a.coeffs):
        v = coeff[k:]
        block = v[:, None] * v[None, :]
        out[: dim_a - k, :, : dim_a - k, :] += (
            block[:, None, :, None] * work[k:, :, k:, :]
        )
    work = out

    chan_b = _cached_channel(float(gamma), float(t), dim_b)
    out = np.zeros_like(work)
    for k, coeff in zip(chan_b.offsets, chan_b.coeffs):
        v = coeff[k:]
        block = v[:, None] * v[None, :]
        out[:, : dim_b - k, :, : dim_b - k] += (
            block[None, :, None, :] * work[:, k:, :, k:]
        )
    return out.reshape(dim_a * dim_b, dim_a * dim_b)


def rk4_steps(gamma: float, t: float, dim: int) -> int:
    """Fixed step count scaled to the fastest decay rate in the space."""
    return max(100, math.ceil(200.0 * gamma * t * dim / 64.0))


def rk4_evolve(
    rho: np.ndarray, gamma: float, t: float, steps: int | None = None
) -> np.ndarray:
    """Integrate the photon-loss master equation with fixed-step RK4.

    Independent of the Kraus route: it discretizes
    drho/dt = (gamma/2)(2 a rho a+ - n rho - rho n) directly. Raises
    IntegrationDivergedError if the final trace drifts from 1 by more
    than TRACE_DRIFT_TOL.
    """
    rho = np.asarray(rho, dtype=np.complex128).copy()
    dim = rho.shape[-1]
    if steps is None:
        steps = rk4_steps(gamma, t, dim)
    if t == 0.0 or gamma == 0.0:
        return rho
    n = np.arange(dim, dtype=np.float64)
    sqrt_n = np.sqrt(n)

    def generator(r: np.ndarray) -> np.ndarray:
        # a r a+ shifts both indices down one with sqrt weights.
        jump = np.zeros_like(r)
        jump[:-1, :-1] = (sqrt_n[1:, None] * sqrt_n[None, 1:]) * r[1:, 1:]
        damp = n[:, None] + n[None, :]
        return 0.5 * gamma * (2.0 * jump - damp * r)

    h = t / steps
    for _ in range(steps):
        k1 = generator(rho)
        k2 = generator(rho + 0.5 * h * k1)
        k3 = generator(rho + 0.5 * h * k2)
        k4 = generator(rho + h * k3)
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    drift = abs(np.trace(rho).real - 1.0)
    if drift > TRACE_DRIFT_TOL:
        raise IntegrationDivergedError(
            f"trace drifted by {drift:.3g} after {steps} RK4 steps"
        )
    return rho


def mean_photon(rho: np.ndarray) -> float:
    """<n> from the diagonal of a (single-mode) density operator."""
    diag = np.diagonal(np.asarray(rho))
    n = np.arange(diag.shape[0])
    return float(np.real(np.sum(n * diag)))


def parity_expectation(rho: np.ndarray) -> float:
    """<(-1)^n> from the diagonal of a (single-mode) density operator."""
    diag = np.diagonal(np.asarray(rho))
    signs = np.where(np.arange(diag.shape[0]) % 2 == 0, 1.0, -1.0)
    return float(np.real(np.sum(signs * diag)))
