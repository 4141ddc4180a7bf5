"""Closed-form description of a cat state under photon loss and parity probes.

A cat state evolving under zero-temperature amplitude damping stays an
even/odd cat mixture at the decayed amplitude alpha_t = alpha
exp(-gamma t / 2). The whole evolution is captured by three scalars:

    F(t) = exp(-2 |alpha|^2 (1 - exp(-gamma t)))   inter-branch coherence
    G(t) = exp(-2 |alpha_t|^2)                      overlap <-a_t|a_t>^2
    N+-^2 = 1 / (2 (1 +- exp(-2 |alpha|^2)))        cat normalizations

Starting from the even cat, the parity weights at time t are

    p_even = N+^2 (1 + F)(1 + G),   p_odd = N+^2 (1 - F)(1 - G)

which sum to one identically because F G = exp(-2 |alpha|^2). Everything
else in this module (detection probabilities, weight transfer between
probes, missed-probe updates, the two-cavity joint version) is algebra on
these scalars.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import fock
from .errors import DegenerateStateError, TruncationError, TruncationWarning

__all__ = [
    "CatDecomposition",
    "StepProbabilities",
    "damped_cat",
    "decoherence_time",
    "detection_probabilities",
    "joint_cat_state",
    "missed_probe_update",
    "normalization_factor",
    "propagate_weights",
    "reconstruct_density",
    "reconstruct_two_cavity_density",
    "sequence_all_upper",
    "sequence_all_upper_product",
    "two_cavity_weights",
]


@dataclass(frozen=True)
class CatDecomposition:
    """Even/odd cat mixture at a decayed amplitude.

    coherence_factor is the scalar F weighting the cross terms between
    the two coherent branches; 1 means a pure superposition, 0 a fully
    decohered statistical mixture. For a joint two-cavity state beta_t
    carries the second amplitude and the parity refers to total photon
    number.
    """

    alpha_t: complex
    coherence_factor: float
    p_even: float
    p_odd: float
    beta_t: complex | None = None


@dataclass(frozen=True)
class StepProbabilities:
    """Detection probabilities for the two atomic readout outcomes."""

    p_upper: float
    p_lower: float


def normalization_factor(alpha: complex, parity: str) -> float:
    """Cat normalization 1 / sqrt(2 (1 +- exp(-2 |alpha|^2)))."""
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    sign = 1.0 if parity == "even" else -1.0
    overlap = math.exp(-2.0 * abs(alpha) ** 2)
    denom = 2.0 * (1.0 + sign * overlap)
    if denom == 0.0:
        raise DegenerateStateError("odd cat is undefined at alpha = 0")
    return 1.0 / math.sqrt(denom)


def decoherence_time(alpha: complex, gamma: float, beta: complex = 0.0) -> float:
    """Coherence lifetime 1 / (2 gamma (|alpha|^2 + |beta|^2))."""
    size = abs(alpha) ** 2 + abs(beta) ** 2
    if gamma <= 0.0 or size == 0.0:
        raise ValueError("decoherence time needs gamma > 0 and a nonzero state")
    return 1.0 / (2.0 * gamma * size)


def _fg(size: float, gamma: float, t: float) -> tuple[float, float]:
    """Coherence factor F and branch overlap G for |alpha|^2 (+|beta|^2) = size."""
    if gamma < 0.0 or t < 0.0:
        raise ValueError("gamma and t must be nonnegative")
    decay = -math.expm1(-gamma * t)  # 1 - exp(-gamma t), stable near 0
    f = math.exp(-2.0 * size * decay)
    g = math.exp(-2.0 * size * math.exp(-gamma * t))
    return f, g


def _start_weights(size: float, gamma: float, t: float, parity: str) -> tuple[float, float]:
    """(p_even, p_odd) at time t for a cat of the given parity at t = 0."""
    f, g = _fg(size, gamma, t)
    overlap = math.exp(-2.0 * size)
    if parity == "even":
        n2 = 1.0 / (2.0 * (1.0 + overlap))
        return n2 * (1.0 + f) * (1.0 + g), n2 * (1.0 - f) * (1.0 - g)
    if parity == "odd":
        if size == 0.0:
            raise DegenerateStateError("odd cat is undefined at alpha = 0")
        n2 = 1.0 / (2.0 * (1.0 - overlap))
        return n2 * (1.0 - f) * (1.0 + g), n2 * (1.0 + f) * (1.0 - g)
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def damped_cat(alpha: complex, gamma: float, t: float) -> CatDecomposition:
    """Decomposition of an even cat after free damping for time t."""
    alpha = complex(alpha)
    size = abs(alpha) ** 2
    f, _ = _fg(size, gamma, t)
    p_even, p_odd = _start_weights(size, gamma, t, "even")
    alpha_t = alpha * math.exp(-0.5 * gamma * t)
    return CatDecomposition(alpha_t, f, p_even, p_odd)


def two_cavity_weights(
    alpha: complex, beta: complex, gamma: float, t: float
) -> CatDecomposition:
    """Joint-parity decomposition of a two-cavity even cat after damping.

    Both cavities damp at the same rate, so the joint formulas are the
    single-cavity ones with |alpha|^2 replaced by |alpha|^2 + |beta|^2
    and parity meaning total photon number.
    """
    alpha = complex(alpha)
    beta = complex(beta)
    size = abs(alpha) ** 2 + abs(beta) ** 2
    f, _ = _fg(size, gamma, t)
    p_even, p_odd = _start_weights(size, gamma, t, "even")
    scale = math.exp(-0.5 * gamma * t)
    return CatDecomposition(alpha * scale, f, p_even, p_odd, beta_t=beta * scale)


def detection_probabilities(
    alpha: complex, gamma: float, t: float, beta: complex = 0.0
) -> StepProbabilities:
    """Upper/lower readout probabilities for a parity probe at time t.

    Equal to the even/odd weights of the freely damped cat, so
    p_upper + p_lower = 1 holds identically.
    """
    size = abs(alpha) ** 2 + abs(beta) ** 2
    p_even, p_odd = _start_weights(size, gamma, t, "even")
    return StepProbabilities(p_even, p_odd)


def propagate_weights(
    p_even: float,
    p_odd: float,
    alpha_t: complex,
    gamma: float,
    t: float,
    beta_t: complex = 0.0,
) -> tuple[float, float]:
    """Damp an even/odd cat mixture at amplitude alpha_t for a further time t.

    Each branch damps independently; the new weights mix through the
    branch-specific transfer formulas.
    """
    size = abs(alpha_t) ** 2 + abs(beta_t) ** 2
    ee, eo = _start_weights(size, gamma, t, "even")
    if p_odd != 0.0:
        oe, oo = _start_weights(size, gamma, t, "odd")
    else:
        oe, oo = 0.0, 0.0
    return p_even * ee + p_odd * oe, p_even * eo + p_odd * oo


def sequence_all_upper(
    alpha: complex,
    gamma: float,
    delta_t: float,
    n_atoms: int,
    beta: complex = 0.0,
) -> float:
    """Probability that every one of n_atoms consecutive probes reads upper.

    Chains the exact per-step conditioning: after each upper readout the
    state is the even cat at the decayed amplitude, so the next step's
    upper probability is the even weight over one more interval.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    size = abs(alpha) ** 2 + abs(beta) ** 2
    prob = 1.0
    for step in range(n_atoms):
        size_now = size * math.exp(-gamma * delta_t * step)
        p_even, _ = _start_weights(size_now, gamma, delta_t, "even")
        prob *= p_even
    return prob


def sequence_all_upper_product(
    alpha: complex, gamma: float, delta_t: float, n_atoms: int
) -> float:
    """Product of unconditioned per-step upper probabilities.

    Diagnostic companion to sequence_all_upper: it multiplies the
    midpoint detection probabilities p_upper(alpha_k, delta_t) with
    alpha_k = alpha exp(-gamma k delta_t / 2) for k = 0..n_atoms. It is
    not the exact chained value and is kept only for comparison.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    prob = 1.0
    for step in range(n_atoms + 1):
        size_now = abs(alpha) ** 2 * math.exp(-gamma * delta_t * step)
        p_even, _ = _start_weights(size_now, gamma, delta_t, "even")
        prob *= p_even
    return prob


def missed_probe_update(
    dec: CatDecomposition, gamma: float, delta_t: float
) -> tuple[CatDecomposition, StepProbabilities]:
    """Advance a decomposition across one undetected probe interval.

    An undetected probe leaves a parity-diagonal state untouched (the two
    branch projectors sum to the identity on each parity sector), so the
    update is pure damping of the mixture for delta_t. The returned
    probabilities are the readout weights a following probe would see.
    """
    beta_t = dec.beta_t if dec.beta_t is not None else 0.0
    p_even, p_odd = propagate_weights(
        dec.p_even, dec.p_odd, dec.alpha_t, gamma, delta_t, beta_t
    )
    scale = math.exp(-0.5 * gamma * delta_t)
    alpha_next = dec.alpha_t * scale
    beta_next = dec.beta_t * scale if dec.beta_t is not None else None
    size_next = abs(alpha_next) ** 2 + abs(
        beta_next if beta_next is not None else 0.0
    ) ** 2
    g = math.exp(-2.0 * size_next)
    coherence = _mixture_coherence(p_even, p_odd, g)
    new = replace(
        dec,
        alpha_t=alpha_next,
        beta_t=beta_next,
        coherence_factor=coherence,
        p_even=p_even,
        p_odd=p_odd,
    )
    return new, StepProbabilities(p_even, p_odd)


def _mixture_coherence(p_even: float, p_odd: float, g: float) -> float:
    """Effective F for a cat mixture with weights (p_even, p_odd).

    Solves p_even = N+^2 (1 + F)(1 + G) style weights for F given G, the
    branch overlap at the current amplitude. With u = p_even / (1 + G)
    and v = p_odd / (1 - G), F = (u - v) / (u + v).
    """
    u = p_even / (1.0 + g)
    if p_odd == 0.0:
        return 1.0
    if g >= 1.0:
        return -1.0
    v = p_odd / (1.0 - g)
    return (u - v) / (u + v)


def reconstruct_density(dec: CatDecomposition, dim: int) -> np.ndarray:
    """Density operator of a single-cavity decomposition on a truncated space.

    rho = p_even |C+(a_t)><C+| + p_odd |C-(a_t)><C-| with the cross-term
    structure already folded into the weights. Raises TruncationError when
    the amplitude does not fit the requested dimension.
    """
    if dec.beta_t is not None:
        raise ValueError("use reconstruct_two_cavity_density for joint states")
    _check_fits(dec.alpha_t, dim)
    even = fock.cat_state(dec.alpha_t, "even", dim)
    rho = dec.p_even * fock.density_matrix(even)
    if dec.p_odd > 0.0:
        odd = fock.cat_state(dec.alpha_t, "odd", dim)
        rho = rho + dec.p_odd * fock.density_matrix(odd)
    return rho


def reconstruct_two_cavity_density(
    dec: CatDecomposition, dim_a: int, dim_b: int
) -> np.ndarray:
    """Joint density operator for a two-cavity decomposition.

    The branches are the joint coherent states |a_t, b_t> and |-a_t, -b_t>;
    even/odd refer to total photon number.
    """
    if dec.beta_t is None:
        raise ValueError("decomposition has no second amplitude")
    _check_fits(dec.alpha_t, dim_a)
    _check_fits(dec.beta_t, dim_b)
    even = _joint_cat(dec.alpha_t, dec.beta_t, 1.0, dim_a, dim_b)
    rho = dec.p_even * fock.density_matrix(even)
    if dec.p_odd > 0.0:
        odd = _joint_cat(dec.alpha_t, dec.beta_t, -1.0, dim_a, dim_b)
        rho = rho + dec.p_odd * fock.density_matrix(odd)
    return rho


def joint_cat_state(
    alpha: complex, beta: complex, parity: str, dim_a: int, dim_b: int
) -> np.ndarray:
    """Two-cavity cat (|alpha, beta> +/- |-alpha, -beta>), normalized.

    Even/odd refer to total photon number n1 + n2.
    """
    if parity == "even":
        return _joint_cat(alpha, beta, 1.0, dim_a, dim_b)
    if parity == "odd":
        return _joint_cat(alpha, beta, -1.0, dim_a, dim_b)
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def _joint_cat(
    alpha: complex, beta: complex, sign: float, dim_a: int, dim_b: int
) -> np.ndarray:
    """Normalized (|alpha, beta> + sign |-alpha, -beta>) with exact parity signs."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        ka = fock.coherent_state(alpha, dim_a)
        kb = fock.coherent_state(beta, dim_b)
    sa = np.where(np.arange(dim_a) % 2 == 0, 1.0, -1.0)
    sb = np.where(np.arange(dim_b) % 2 == 0, 1.0, -1.0)
    joint = fock.tensor(ka, kb)
    mirror = fock.tensor(sa * ka, sb * kb)
    psi = joint + sign * mirror
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise DegenerateStateError("joint cat vanishes at zero amplitudes")
    return psi / norm


def _check_fits(alpha: complex, dim: int) -> None:
    deficit = fock.coherent_deficit(alpha, dim)
    if deficit > 1e-8:
        raise TruncationError(
            f"amplitude |alpha|^2 = {abs(alpha)**2:.6g} loses {deficit:.3g} "
            f"mass at dim {dim}"
        )
