"""Vectorized numpy trajectory kernel.

Steps a batch of trajectories through the probe cycle: exact damping over
one interval (banded Kraus application), a Bernoulli detection draw, then
either a parity-branch projection (detected) or the unconditioned branch
sum (missed). States are per-trajectory density matrices, so the batch is
a (B, d, d) complex array and every operation is elementwise or banded.

All backends implement run_batch with the same semantics and consume the
same per-step uniform layout (detection draw first, branch draw second).
"""

import numpy as np

from .errors import MeasurementDegenerateError

# Branch probabilities may legitimately shrink as trace leaks past the
# truncation, but both vanishing together means the state is gone.
DEGENERACY_FLOOR = 1e-14

OUTCOME_UPPER = 0
OUTCOME_LOWER = 1
OUTCOME_MISS = 2


def run_batch(plan, uniforms: np.ndarray, record_final: bool = False) -> dict:
    """Run a batch of trajectories and return per-step records.

    uniforms has shape (B, 2 * n_steps) with the detection draw at even
    offsets and the branch draw at odd offsets. Returns arrays of shape
    (B, n_steps): outcomes (int8 codes), branch probabilities, fidelity
    against the ideal per-step reference, mean photon number, and parity
    expectation; plus the final states when record_final is set.
    """
    uniforms = np.asarray(uniforms, dtype=np.float64)
    batch = uniforms.shape[0]
    steps = plan.n_steps
    d = plan.dim
    if uniforms.shape[1] != 2 * steps:
        raise ValueError("uniform block does not match step count")

    rho = np.broadcast_to(plan.rho0, (batch, d, d)).copy()
    mask_plus = np.outer(plan.d_plus, plan.d_plus.conj())
    mask_minus = np.outer(plan.d_minus, plan.d_minus.conj())
    mask_miss = mask_plus + mask_minus

    outcomes = np.empty((batch, steps), dtype=np.int8)
    prob_upper = np.empty((batch, steps), dtype=np.float64)
    prob_lower = np.empty((batch, steps), dtype=np.float64)
    fidelity = np.empty((batch, steps), dtype=np.float64)
    nbar = np.empty((batch, steps), dtype=np.float64)
    parity = np.empty((batch, steps), dtype=np.float64)

    for s in range(steps):
        rho = _apply_bands(rho, plan.band_offsets, plan.band_coeffs, d)
        diag = np.einsum("bii->bi", rho).real
        p_plus = diag @ plan.w_plus
        p_minus = diag @ plan.w_minus
        total = p_plus + p_minus
        if np.any(total < DEGENERACY_FLOOR):
            raise MeasurementDegenerateError(
                f"both branch probabilities vanished at step {s}"
            )
        u_detect = uniforms[:, 2 * s]
        u_branch = uniforms[:, 2 * s + 1]
        if plan.forced_miss[s]:
            detected = np.zeros(batch, dtype=bool)
        else:
            detected = u_detect < plan.efficiency
        upper = detected & (u_branch * total < p_plus)
        lower = detected & ~upper
        missed = ~detected

        idx = np.nonzero(upper)[0]
        if idx.size:
            rho[idx] = mask_plus * rho[idx] / p_plus[idx, None, None]
        idx = np.nonzero(lower)[0]
        if idx.size:
            rho[idx] = mask_minus * rho[idx] / p_minus[idx, None, None]
        idx = np.nonzero(missed)[0]
        if idx.size:
            rho[idx] = mask_miss * rho[idx]

        outcomes[:, s] = np.where(
            upper, OUTCOME_UPPER, np.where(lower, OUTCOME_LOWER, OUTCOME_MISS)
        )
        prob_upper[:, s] = p_plus
        prob_lower[:, s] = p_minus
        ref = plan.refs[s]
        fidelity[:, s] = np.real(
            np.einsum("i,bij,j->b", ref.conj(), rho, ref)
        )
        diag = np.einsum("bii->bi", rho).real
        nbar[:, s] = diag @ plan.photon
        parity[:, s] = diag @ plan.parity_sign

    result = {
        "outcomes": outcomes,
        "prob_upper": prob_upper,
        "prob_lower": prob_lower,
        "fidelity": fidelity,
        "nbar": nbar,
        "parity": parity,
    }
    if record_final:
        result["final"] = rho
    return result


def _apply_bands(
    rho: np.ndarray, offsets: np.ndarray, coeffs: np.ndarray, d: int
) -> np.ndarray:
    out = np.zeros_like(rho)
    for k, coeff in zip(offsets, coeffs):
        v = coeff[k:]
        block = v[:, None] * v[None, :]
        out[:, : d - k, : d - k] += block * rho[:, k:, k:]
    return out
