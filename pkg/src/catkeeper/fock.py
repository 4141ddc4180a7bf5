"""Truncated Fock-space states, operators, and metrics.

States are 1-D complex128 arrays of Fock amplitudes and density operators
are 2-D complex128 arrays; there is no wrapper class. All constructors
take an explicit dimension so that every object in a computation lives on
the same truncated space.

Amplitudes are computed in log space, so constructors stay finite for any
amplitude whose truncated support actually fits in the allowed dimension.
"""

import warnings

import numpy as np
from scipy.special import gammaln

from .errors import (
    DegenerateStateError,
    DimensionOverflowError,
    TruncationWarning,
)

DIM_FLOOR = 4
DIM_CAP = 512
JOINT_DIM_CAP = 4096
TAIL_EPS = 1e-12

# Mass allowed past the truncation edge before constructors warn.
DEFICIT_WARN = 1e-8

__all__ = [
    "DIM_CAP",
    "DIM_FLOOR",
    "JOINT_DIM_CAP",
    "TAIL_EPS",
    "annihilation",
    "cat_state",
    "coherent_state",
    "coherent_deficit",
    "density_matrix",
    "fidelity",
    "number_operator",
    "parity_projectors",
    "phase_diagonal",
    "phase_operator",
    "purity",
    "state_fidelity",
    "tensor",
    "trace_distance",
    "truncation_dim",
]


def _poisson_logpmf(nbar: float, dim: int) -> np.ndarray:
    """log of the photon-number distribution of |alpha|, nbar = |alpha|^2."""
    n = np.arange(dim)
    if nbar == 0.0:
        out = np.full(dim, -np.inf)
        out[0] = 0.0
        return out
    return n * np.log(nbar) - nbar - gammaln(n + 1.0)


def coherent_deficit(alpha: complex, dim: int) -> float:
    """Photon-number mass of |alpha> that lies at or above level `dim`."""
    nbar = abs(alpha) ** 2
    mass = np.exp(_poisson_logpmf(nbar, dim)).sum()
    return float(max(0.0, 1.0 - mass))


def truncation_dim(alpha: complex, eps: float = TAIL_EPS) -> int:
    """Smallest dimension keeping the coherent tail mass at or below eps.

    The result is clamped below by DIM_FLOOR; if no dimension up to
    DIM_CAP suffices, DimensionOverflowError is raised.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    nbar = abs(alpha) ** 2
    logpmf = _poisson_logpmf(nbar, DIM_CAP + 1)
    # tail[d] = mass at levels >= d when truncating to dimension d
    pmf = np.exp(logpmf)
    tail = 1.0 - np.cumsum(pmf)
    for dim in range(DIM_FLOOR, DIM_CAP + 1):
        if tail[dim - 1] <= eps:
            return dim
    raise DimensionOverflowError(
        f"no dimension <= {DIM_CAP} holds |alpha|^2 = {nbar:.6g} "
        f"with tail <= {eps:g}"
    )


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    """Truncated and renormalized coherent state |alpha>.

    Warns with TruncationWarning when the discarded tail mass exceeds
    DEFICIT_WARN.
    """
    _check_dim(dim)
    alpha = complex(alpha)
    logmag = 0.5 * _poisson_logpmf(abs(alpha) ** 2, dim)
    psi = np.exp(logmag).astype(np.complex128)
    if alpha != 0.0:
        theta = np.angle(alpha)
        psi *= np.exp(1j * theta * np.arange(dim))
    deficit = coherent_deficit(alpha, dim)
    if deficit > DEFICIT_WARN:
        warnings.warn(
            f"coherent state |alpha|^2 = {abs(alpha)**2:.6g} loses "
            f"{deficit:.3g} mass at dim {dim}",
            TruncationWarning,
            stacklevel=2,
        )
    norm = np.linalg.norm(psi)
    return psi / norm


def cat_state(alpha: complex, parity: str, dim: int) -> np.ndarray:
    """Even or odd coherent superposition (|alpha> +/- |-alpha>), normalized.

    The |-alpha> component reuses the |alpha> amplitudes with exact (-1)^n
    signs, so the opposite-parity amplitudes cancel identically and the
    returned vector is supported on a single parity sector.
    """
    sign = _parity_sign(parity)
    alpha = complex(alpha)
    if alpha == 0.0 and sign < 0:
        raise DegenerateStateError("odd cat is undefined at alpha = 0")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        base = coherent_state(alpha, dim)
    deficit = coherent_deficit(alpha, dim)
    if deficit > DEFICIT_WARN:
        warnings.warn(
            f"cat state |alpha|^2 = {abs(alpha)**2:.6g} loses "
            f"{deficit:.3g} mass at dim {dim}",
            TruncationWarning,
            stacklevel=2,
        )
    signs = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    psi = base + sign * signs * base
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise DegenerateStateError(f"{parity} cat vanishes at alpha = {alpha}")
    return psi / norm


def annihilation(dim: int) -> np.ndarray:
    """Lowering operator a with a|n> = sqrt(n)|n-1>."""
    _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), k=1).astype(
        np.complex128
    )


def number_operator(dim: int) -> np.ndarray:
    _check_dim(dim)
    return np.diag(np.arange(dim, dtype=np.float64)).astype(np.complex128)


def phase_diagonal(phi: float, dim: int) -> np.ndarray:
    """Diagonal of exp(i phi n) as a 1-D array."""
    _check_dim(dim)
    return np.exp(1j * phi * np.arange(dim))


def phase_operator(phi: float, dim: int) -> np.ndarray:
    """Photon-number phase rotation exp(i phi n)."""
    return np.diag(phase_diagonal(phi, dim))


def parity_projectors(phi: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Measurement-branch operators (exp(i phi n) + 1)/2 and (exp(i phi n) - 1)/2.

    At phi = pi these are the orthogonal projectors onto even and odd
    photon number; at other phases they remain diagonal and satisfy
    P+ + P- = exp(i phi n) and P+ - P- = 1, but are not projectors.
    """
    d = phase_diagonal(phi, dim)
    return np.diag((d + 1.0) / 2.0), np.diag((d - 1.0) / 2.0)


def density_matrix(psi: np.ndarray) -> np.ndarray:
    """Rank-one density operator |psi><psi|."""
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())


def tensor(a: np.ndarray, b: np.ndarray, max_dim: int = JOINT_DIM_CAP) -> np.ndarray:
    """Kronecker product of two states or two operators.

    Mode a is the slow index, so a joint ket has amplitude
    psi[n1 * dim_b + n2]. Raises DimensionOverflowError when the joint
    dimension exceeds max_dim.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise ValueError("tensor expects two kets or two operators")
    joint = a.shape[0] * b.shape[0]
    if joint > max_dim:
        raise DimensionOverflowError(
            f"joint dimension {joint} exceeds cap {max_dim}"
        )
    return np.kron(a, b)


def purity(rho: np.ndarray) -> float:
    """Tr(rho^2), via the Frobenius norm since rho is Hermitian."""
    rho = np.asarray(rho)
    return float(np.vdot(rho, rho).real)


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, in [0, 1].

    When either argument is (numerically) pure this reduces to
    <psi| other |psi>.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.complex128)
    sqrt_rho = _sqrtm_psd(rho)
    inner = sqrt_rho @ sigma @ sqrt_rho
    vals = np.linalg.eigvalsh(inner)
    # Eigenvalues below the eigh noise scale are unresolvable; zeroing them
    # stops sqrt from amplifying O(eps) noise into O(sqrt(eps)) error.
    floor = max(vals[-1], 0.0) * len(vals) * np.finfo(np.float64).eps
    vals = np.where(vals > floor, vals, 0.0)
    f = float(np.sqrt(vals).sum() ** 2)
    return min(1.0, max(0.0, f))


def state_fidelity(psi: np.ndarray, rho: np.ndarray) -> float:
    """<psi| rho |psi> for a ket against a density operator."""
    psi = np.asarray(psi, dtype=np.complex128)
    val = np.real(psi.conj() @ np.asarray(rho) @ psi)
    return float(min(1.0, max(0.0, val)))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of rho - sigma."""
    diff = np.asarray(rho, dtype=np.complex128) - np.asarray(
        sigma, dtype=np.complex128
    )
    vals = np.linalg.eigvalsh(diff)
    return float(0.5 * np.abs(vals).sum())


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    floor = max(float(vals[-1]), 0.0) * len(vals) * np.finfo(np.float64).eps
    vals = np.where(vals > floor, vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def _parity_sign(parity: str) -> int:
    if parity == "even":
        return 1
    if parity == "odd":
        return -1
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def _check_dim(dim: int) -> None:
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise ValueError(f"dimension must be a positive integer, got {dim!r}")
    if dim > JOINT_DIM_CAP:
        raise DimensionOverflowError(
            f"dimension {dim} exceeds cap {JOINT_DIM_CAP}"
        )
