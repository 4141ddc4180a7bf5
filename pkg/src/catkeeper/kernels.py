"""Trajectory kernel backends and dispatch.

Two interchangeable kernels step batches of trajectories: the compiled
Cython extension (preferred) and the vectorized numpy fallback. The
available set is probed once at import; callers can force a backend by
name, and CATKEEPER_BACKEND overrides the default. Both consume the same
uniform stream layout, so outcome sequences are identical bit for bit.
"""

import os

import numpy as np

from . import _kernel_py
from .errors import MeasurementDegenerateError

try:
    from . import _fastkernel

    HAVE_FAST = True
except ImportError:
    _fastkernel = None
    HAVE_FAST = False

__all__ = [
    "HAVE_FAST",
    "available_backends",
    "default_backend",
    "run_batch",
]


def available_backends() -> tuple[str, ...]:
    if HAVE_FAST:
        return ("cython", "numpy")
    return ("numpy",)


def default_backend() -> str:
    forced = os.environ.get("CATKEEPER_BACKEND")
    if forced:
        if forced not in available_backends():
            raise ValueError(
                f"backend {forced!r} not available; have {available_backends()}"
            )
        return forced
    return "cython" if HAVE_FAST else "numpy"


def run_batch(
    plan,
    uniforms: np.ndarray,
    backend: str | None = None,
    record_final: bool = False,
) -> dict:
    """Dispatch a batch of trajectories to the chosen kernel."""
    name = backend or default_backend()
    if name == "numpy":
        return _kernel_py.run_batch(plan, uniforms, record_final)
    if name == "cython":
        if not HAVE_FAST:
            raise ValueError("compiled kernel is not available")
        return _run_fast(plan, uniforms, record_final)
    raise ValueError(f"unknown backend {name!r}")


def _run_fast(plan, uniforms: np.ndarray, record_final: bool) -> dict:
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    batch = uniforms.shape[0]
    steps = plan.n_steps
    if uniforms.shape[1] != 2 * steps:
        raise ValueError("uniform block does not match step count")
    d = plan.dim

    outcomes = np.empty((batch, steps), dtype=np.int8)
    prob_upper = np.empty((batch, steps), dtype=np.float64)
    prob_lower = np.empty((batch, steps), dtype=np.float64)
    fidelity = np.empty((batch, steps), dtype=np.float64)
    nbar = np.empty((batch, steps), dtype=np.float64)
    parity = np.empty((batch, steps), dtype=np.float64)
    if record_final:
        final = np.empty((batch, d, d), dtype=np.complex128)
    else:
        final = np.empty((0, d, d), dtype=np.complex128)

    err_step = _fastkernel.run_batch(
        d,
        steps,
        np.ascontiguousarray(plan.rho0),
        np.ascontiguousarray(plan.band_offsets),
        np.ascontiguousarray(plan.band_coeffs),
        np.ascontiguousarray(plan.d_plus),
        np.ascontiguousarray(plan.d_plus.conj()),
        np.ascontiguousarray(plan.d_minus),
        np.ascontiguousarray(plan.d_minus.conj()),
        np.ascontiguousarray(plan.w_plus),
        np.ascontiguousarray(plan.w_minus),
        np.ascontiguousarray(plan.refs),
        np.ascontiguousarray(plan.refs.conj()),
        np.ascontiguousarray(plan.photon),
        np.ascontiguousarray(plan.parity_sign),
        float(plan.efficiency),
        np.ascontiguousarray(plan.forced_miss.view(np.uint8)),
        uniforms,
        outcomes,
        prob_upper,
        prob_lower,
        fidelity,
        nbar,
        parity,
        final,
        1 if record_final else 0,
        _kernel_py.DEGENERACY_FLOOR,
    )
    if err_step >= 0:
        raise MeasurementDegenerateError(
            f"both branch probabilities vanished at step {err_step}"
        )
    result = {
        "outcomes": outcomes,
        "prob_upper": prob_upper,
        "prob_lower": prob_lower,
        "fidelity": fidelity,
        "nbar": nbar,
        "parity": parity,
    }
    if record_final:
        result["final"] = final
    return result
