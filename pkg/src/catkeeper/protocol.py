"""Repeated-parity-probe protocol: configuration, trajectories, ensembles.

A run sends n_atoms probe atoms through the cavity at interval delta_t.
Each step damps the field exactly over the interval, entangles a two-level
probe with photon-number parity through a dispersive phase phi, and reads
the probe out. The upper reading projects the field with
(exp(i phi n) + 1)/2, the lower with (exp(i phi n) - 1)/2; an undetected
probe applies the unnormalized sum of both branches. At phi = pi the
branches are the even/odd parity projectors and the upper reading heralds
the even cat.

Two physical probe schemes (a cascade configuration with Ramsey zones and
a driven lambda configuration) produce identical branch operators; they
are both constructed explicitly in dispersive_step and differ only in the
readout labels.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py, closedform, fock, kernels, lindblad, rng
from .errors import ConfigError, MeasurementDegenerateError

OUTCOME_NAMES = ("upper", "lower", "miss")
SCHEMES = ("cascade", "lambda")
SCHEME_LABELS = {"cascade": ("e", "g"), "lambda": ("b", "c")}

__all__ = [
    "AtomStepRecord",
    "EnsembleStats",
    "ProtocolConfig",
    "TrajectoryPlan",
    "TrajectoryResult",
    "build_plan",
    "dispersive_step",
    "measure_atom",
    "prepare_atom",
    "run_ensemble",
    "run_trajectory",
]


@dataclass(frozen=True)
class ProtocolConfig:
    """Full description of a protocol run.

    delta_t defaults to the coherence lifetime divided by n_atoms and dim
    to the automatic truncation for the initial amplitude; both can be
    overridden. forced_miss lists 0-based step indices whose probe is
    discarded regardless of detector efficiency. Two-cavity runs set beta;
    dim then applies to each mode separately.
    """

    alpha: complex
    gamma: float = 1.0
    n_atoms: int = 10
    delta_t: float | None = None
    phi: float = math.pi
    scheme: str = "cascade"
    detector_efficiency: float = 1.0
    seed: int = 0
    dim: int | None = None
    beta: complex | None = None
    forced_miss: tuple[int, ...] = ()

    def __post_init__(self):
        if not math.isfinite(abs(complex(self.alpha))):
            raise ConfigError("alpha must be finite")
        if self.beta is not None and not math.isfinite(abs(complex(self.beta))):
            raise ConfigError("beta must be finite")
        if not (math.isfinite(self.gamma) and self.gamma >= 0.0):
            raise ConfigError("gamma must be finite and nonnegative")
        if not (isinstance(self.n_atoms, int) and self.n_atoms >= 1):
            raise ConfigError("n_atoms must be a positive integer")
        if self.delta_t is not None and not (
            math.isfinite(self.delta_t) and self.delta_t > 0.0
        ):
            raise ConfigError("delta_t must be positive")
        if not math.isfinite(self.phi):
            raise ConfigError("phi must be finite")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if not (0.0 <= self.detector_efficiency <= 1.0):
            raise ConfigError("detector_efficiency must lie in [0, 1]")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if self.dim is not None and not (
            isinstance(self.dim, int) and self.dim >= 1
        ):
            raise ConfigError("dim must be a positive integer")
        misses = tuple(self.forced_miss)
        for idx in misses:
            if not (isinstance(idx, int) and 0 <= idx < self.n_atoms):
                raise ConfigError(
                    f"forced_miss index {idx!r} outside [0, {self.n_atoms})"
                )
        object.__setattr__(self, "forced_miss", misses)

    @property
    def coherence_time(self) -> float:
        """Lifetime 1 / (2 gamma (|alpha|^2 + |beta|^2)) of the cat coherence."""
        beta = self.beta if self.beta is not None else 0.0
        return closedform.decoherence_time(self.alpha, self.gamma, beta)

    def resolved_delta_t(self) -> float:
        if self.delta_t is not None:
            return self.delta_t
        beta = self.beta if self.beta is not None else 0.0
        size = abs(complex(self.alpha)) ** 2 + abs(complex(beta)) ** 2
        if self.gamma == 0.0 or size == 0.0:
            raise ConfigError(
                "delta_t must be given explicitly when gamma or |alpha| is zero"
            )
        return self.coherence_time / self.n_atoms


@dataclass(frozen=True, eq=False)
class TrajectoryPlan:
    """Precomputed arrays one batch of trajectories needs.

    For two-cavity runs the arrays live on the joint space with mode a as
    the slow index; photon holds the total photon number per basis state
    and the damping bands are products of the per-mode bands.
    """

    dim: int
    n_steps: int
    delta_t: float
    rho0: np.ndarray
    band_offsets: np.ndarray
    band_coeffs: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    refs: np.ndarray
    photon: np.ndarray
    parity_sign: np.ndarray
    efficiency: float
    forced_miss: np.ndarray
    labels: tuple[str, str]
    dims: tuple[int, ...]


@dataclass(frozen=True)
class AtomStepRecord:
    """One probe atom's step: readout and post-measurement field summary."""

    step: int
    time: float
    outcome: str
    p_upper: float
    p_lower: float
    fidelity_even: float
    mean_photon: float
    parity: float


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    """One trajectory: per-step records plus the final conditioned state."""

    config: ProtocolConfig
    trial: int
    records: list[AtomStepRecord]
    outcomes: np.ndarray
    all_upper: bool
    final_state: np.ndarray


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Aggregates over a trajectory ensemble.

    Frequencies count outcomes over all trials (misses included), so with
    detector efficiency eta the analytic per-step upper probability is
    eta times the even weight of the freely damped cat. Standard errors
    are binomial.
    """

    config: ProtocolConfig
    trials: int
    backend: str
    all_upper_frequency: float
    all_upper_se: float
    per_step_upper_frequency: np.ndarray
    per_step_upper_se: np.ndarray
    per_step_upper_analytic: np.ndarray
    per_step_fidelity_mean: np.ndarray
    per_step_parity_mean: np.ndarray
    mean_final_fidelity_even: float
    times: np.ndarray


def prepare_atom(scheme: str) -> np.ndarray:
    """Probe state entering the dispersive zone, in the readout basis.

    The cascade probe has passed its first Ramsey zone, so it arrives in
    (|e> + |g>)/sqrt(2); the lambda probe arrives in |b>.
    """
    if scheme == "cascade":
        return np.array([1.0, 1.0], dtype=np.complex128) / math.sqrt(2.0)
    if scheme == "lambda":
        return np.array([1.0, 0.0], dtype=np.complex128)
    raise ValueError(f"scheme must be one of {SCHEMES}")


def dispersive_step(
    rho_field: np.ndarray,
    scheme: str = "cascade",
    phi: float = math.pi,
    number_diag: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, tuple[str, str]]:
    """Entangle one probe with the field and split on the readout.

    Returns the two unnormalized field branches (upper, lower) and their
    readout labels. number_diag gives each basis state's photon number
    and defaults to 0..d-1; joint two-cavity fields pass n1 + n2.

    Both schemes are built from their actual probe-field unitaries rather
    than from the known branch operators, so their equivalence is checked
    rather than assumed.
    """
    rho_field = np.asarray(rho_field, dtype=np.complex128)
    d = rho_field.shape[0]
    if number_diag is None:
        number_diag = np.arange(d, dtype=np.float64)
    phase = np.exp(1j * phi * np.asarray(number_diag, dtype=np.float64))

    if scheme == "cascade":
        # Atom basis (e, g). The dispersive zone phases the field only
        # when the atom is excited; the second Ramsey zone mixes
        # e -> (e+g)/sqrt(2), g -> (e-g)/sqrt(2).
        atom = prepare_atom(scheme)
        rho_atom = np.outer(atom, atom.conj())
        joint = np.kron(rho_field, rho_atom).reshape(d, 2, d, 2)
        u_diag = np.empty((d, 2), dtype=np.complex128)
        u_diag[:, 0] = phase
        u_diag[:, 1] = 1.0
        joint = (
            u_diag[:, :, None, None] * joint * u_diag[None, None, :, :].conj()
        )
        ramsey = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128)
        ramsey /= math.sqrt(2.0)
        joint = np.einsum("ab,ibjc,dc->iajd", ramsey, joint, ramsey.conj())
        upper = np.ascontiguousarray(joint[:, 0, :, 0])
        lower = np.ascontiguousarray(joint[:, 1, :, 1])
        return upper, lower, SCHEME_LABELS[scheme]

    if scheme == "lambda":
        # Atom basis (b, c); the driven interaction acts as the block
        # unitary [[P+, P-], [P-, P+]] with P± = (phase ± 1)/2 and the
        # atom injected in b.
        p_plus = (phase + 1.0) / 2.0
        p_minus = (phase - 1.0) / 2.0
        atom = prepare_atom(scheme)
        # Joint ordering (atom, field): blocks are field-sized.
        rho_atom = np.outer(atom, atom.conj())
        joint = np.kron(rho_atom, rho_field)
        u = np.zeros((2 * d, 2 * d), dtype=np.complex128)
        u[:d, :d] = np.diag(p_plus)
        u[:d, d:] = np.diag(p_minus)
        u[d:, :d] = np.diag(p_minus)
        u[d:, d:] = np.diag(p_plus)
        joint = u @ joint @ u.conj().T
        upper = np.ascontiguousarray(joint[:d, :d])
        lower = np.ascontiguousarray(joint[d:, d:])
        return upper, lower, SCHEME_LABELS[scheme]

    raise ValueError(f"scheme must be one of {SCHEMES}")


def measure_atom(
    branch_upper: np.ndarray,
    branch_lower: np.ndarray,
    gen: np.random.Generator,
    efficiency: float = 1.0,
    forced_miss: bool = False,
) -> tuple[int, np.ndarray, float, float]:
    """Read the probe out and collapse (or mix) the field.

    Always consumes exactly two uniforms, detection then branch, so
    outcome sequences stay aligned with the batch kernels. Returns
    (outcome code, normalized field, p_upper, p_lower).
    """
    p_upper = float(np.trace(branch_upper).real)
    p_lower = float(np.trace(branch_lower).real)
    total = p_upper + p_lower
    u_detect = float(gen.random())
    u_branch = float(gen.random())
    if total < _kernel_py.DEGENERACY_FLOOR:
        raise MeasurementDegenerateError("both branch probabilities vanished")
    if not forced_miss and u_detect < efficiency:
        if u_branch * total < p_upper:
            return 0, branch_upper / p_upper, p_upper, p_lower
        return 1, branch_lower / p_lower, p_upper, p_lower
    return 2, branch_upper + branch_lower, p_upper, p_lower


def build_plan(config: ProtocolConfig) -> TrajectoryPlan:
    """Assemble the precomputed arrays for a configuration."""
    delta_t = config.resolved_delta_t()
    steps = config.n_atoms
    alpha = complex(config.alpha)

    if config.beta is None:
        dim = config.dim or fock.truncation_dim(alpha)
        psi0 = fock.cat_state(alpha, "even", dim)
        offsets, coeffs = lindblad.damping_bands(config.gamma, delta_t, dim)
        photon = np.arange(dim, dtype=np.float64)
        refs = np.empty((steps, dim), dtype=np.complex128)
        for s in range(steps):
            alpha_s = alpha * math.exp(-0.5 * config.gamma * delta_t * (s + 1))
            refs[s] = fock.cat_state(alpha_s, "even", dim)
        dims = (dim,)
    else:
        beta = complex(config.beta)
        dim_a = config.dim or fock.truncation_dim(alpha)
        dim_b = config.dim or fock.truncation_dim(beta)
        dim = dim_a * dim_b
        if dim > fock.JOINT_DIM_CAP:
            raise ConfigError(
                f"joint dimension {dim} exceeds cap {fock.JOINT_DIM_CAP}"
            )
        psi0 = closedform.joint_cat_state(alpha, beta, "even", dim_a, dim_b)
        offsets, coeffs = _joint_bands(config.gamma, delta_t, dim_a, dim_b)
        n_a = np.arange(dim_a, dtype=np.float64)
        n_b = np.arange(dim_b, dtype=np.float64)
        photon = (n_a[:, None] + n_b[None, :]).reshape(dim)
        refs = np.empty((steps, dim), dtype=np.complex128)
        for s in range(steps):
            scale = math.exp(-0.5 * config.gamma * delta_t * (s + 1))
            refs[s] = closedform.joint_cat_state(
                alpha * scale, beta * scale, "even", dim_a, dim_b
            )
        dims = (dim_a, dim_b)

    phase = np.exp(1j * config.phi * photon)
    d_plus = (phase + 1.0) / 2.0
    d_minus = (phase - 1.0) / 2.0
    parity_sign = np.where(photon.astype(np.int64) % 2 == 0, 1.0, -1.0)
    forced = np.zeros(steps, dtype=bool)
    for idx in config.forced_miss:
        forced[idx] = True

    return TrajectoryPlan(
        dim=dim,
        n_steps=steps,
        delta_t=delta_t,
        rho0=fock.density_matrix(psi0),
        band_offsets=offsets,
        band_coeffs=coeffs,
        d_plus=d_plus,
        d_minus=d_minus,
        w_plus=(np.abs(d_plus) ** 2).astype(np.float64),
        w_minus=(np.abs(d_minus) ** 2).astype(np.float64),
        refs=refs,
        photon=photon,
        parity_sign=parity_sign,
        efficiency=float(config.detector_efficiency),
        forced_miss=forced,
        labels=SCHEME_LABELS[config.scheme],
        dims=dims,
    )


def _joint_bands(
    gamma: float, delta_t: float, dim_a: int, dim_b: int
) -> tuple[np.ndarray, np.ndarray]:
    """Product Kraus bands on the joint space.

    K_k (x) K_l is still a single band on the flattened index with offset
    k * dim_b + l; per-mode coefficients are zero below their own offset,
    which also zeroes the wrapped joint positions.
    """
    off_a, co_a = lindblad.damping_bands(gamma, delta_t, dim_a)
    off_b, co_b = lindblad.damping_bands(gamma, delta_t, dim_b)
    offsets = []
    rows = []
    for k, ca in zip(off_a, co_a):
        for l, cb in zip(off_b, co_b):
            offsets.append(int(k) * dim_b + int(l))
            rows.append(np.kron(ca, cb))
    order = np.argsort(offsets, kind="stable")
    offsets = np.asarray(offsets, dtype=np.int64)[order]
    coeffs = np.asarray(rows, dtype=np.float64)[order]
    return offsets, coeffs


def run_trajectory(
    config: ProtocolConfig,
    trial: int = 0,
    backend: str | None = None,
    plan: TrajectoryPlan | None = None,
) -> TrajectoryResult:
    """Simulate one trajectory under its own (seed, trial) random stream.

    backend may be any kernel backend or "reference", a slow path that
    composes dense Kraus operators with the explicit probe unitaries of
    dispersive_step; all paths consume the identical uniform stream.
    """
    if plan is None:
        plan = build_plan(config)
    uniforms = rng.trial_uniforms(
        config.seed, trial, rng.UNIFORMS_PER_STEP * plan.n_steps
    )
    if backend == "reference":
        res = _reference_batch(config, plan, uniforms[None, :])
    else:
        res = kernels.run_batch(
            plan, uniforms[None, :], backend=backend, record_final=True
        )
    records = []
    for s in range(plan.n_steps):
        records.append(
            AtomStepRecord(
                step=s + 1,
                time=(s + 1) * plan.delta_t,
                outcome=OUTCOME_NAMES[int(res["outcomes"][0, s])],
                p_upper=float(res["prob_upper"][0, s]),
                p_lower=float(res["prob_lower"][0, s]),
                fidelity_even=float(res["fidelity"][0, s]),
                mean_photon=float(res["nbar"][0, s]),
                parity=float(res["parity"][0, s]),
            )
        )
    outcomes = res["outcomes"][0]
    return TrajectoryResult(
        config=config,
        trial=trial,
        records=records,
        outcomes=outcomes,
        all_upper=bool(np.all(outcomes == 0)),
        final_state=res["final"][0],
    )


def _reference_batch(
    config: ProtocolConfig, plan: TrajectoryPlan, uniforms: np.ndarray
) -> dict:
    """Compositional slow path with the same record layout as the kernels."""
    batch = uniforms.shape[0]
    steps = plan.n_steps
    outcomes = np.empty((batch, steps), dtype=np.int8)
    prob_upper = np.empty((batch, steps), dtype=np.float64)
    prob_lower = np.empty((batch, steps), dtype=np.float64)
    fidelity = np.empty((batch, steps), dtype=np.float64)
    nbar = np.empty((batch, steps), dtype=np.float64)
    parity = np.empty((batch, steps), dtype=np.float64)
    final = np.empty((batch, plan.dim, plan.dim), dtype=np.complex128)

    class _Stream:
        """Replays a fixed uniform block through the Generator protocol."""

        def __init__(self, values):
            self.values = values
            self.pos = 0

        def random(self):
            val = self.values[self.pos]
            self.pos += 1
            return val

    for b in range(batch):
        rho = plan.rho0.copy()
        stream = _Stream(uniforms[b])
        for s in range(steps):
            if config.beta is None:
                rho = lindblad.kraus_evolve(rho, config.gamma, plan.delta_t)
            else:
                rho = lindblad.kraus_evolve_two_mode(
                    rho, config.gamma, plan.delta_t, *plan.dims
                )
            upper, lower, _ = dispersive_step(
                rho, config.scheme, config.phi, number_diag=plan.photon
            )
            code, rho, p_up, p_lo = measure_atom(
                upper,
                lower,
                stream,
                efficiency=plan.efficiency,
                forced_miss=bool(plan.forced_miss[s]),
            )
            outcomes[b, s] = code
            prob_upper[b, s] = p_up
            prob_lower[b, s] = p_lo
            ref = plan.refs[s]
            fidelity[b, s] = float(np.real(ref.conj() @ rho @ ref))
            diag = np.diagonal(rho).real
            nbar[b, s] = float(diag @ plan.photon)
            parity[b, s] = float(diag @ plan.parity_sign)
        final[b] = rho
    return {
        "outcomes": outcomes,
        "prob_upper": prob_upper,
        "prob_lower": prob_lower,
        "fidelity": fidelity,
        "nbar": nbar,
        "parity": parity,
        "final": final,
    }


def run_ensemble(
    config: ProtocolConfig,
    trials: int,
    backend: str | None = None,
    workers: int | None = None,
    chunk_size: int | None = None,
) -> EnsembleStats:
    """Run `trials` independent trajectories and aggregate.

    Results are bit-identical for a given (config, trials) regardless of
    backend choice for the outcome statistics, chunking, or worker count:
    trials own their Philox substreams and partial sums are reduced in
    chunk order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    plan = build_plan(config)
    name = backend or kernels.default_backend()
    if chunk_size is None:
        chunk_size = _auto_chunk(plan.dim, name)
    if workers is None:
        workers = int(os.environ.get("CATKEEPER_WORKERS", "1"))
    spans = [
        (lo, min(lo + chunk_size, trials))
        for lo in range(0, trials, chunk_size)
    ]
    draw = rng.UNIFORMS_PER_STEP * plan.n_steps

    # Full per-trial tables, filled by disjoint slices and reduced once in
    # a fixed order, so the statistics are bit-identical regardless of
    # chunk size or worker count.
    upper = np.empty((trials, plan.n_steps), dtype=bool)
    fid = np.empty((trials, plan.n_steps), dtype=np.float64)
    par = np.empty((trials, plan.n_steps), dtype=np.float64)

    def work(span):
        lo, hi = span
        count = hi - lo
        uniforms = np.empty((count, draw), dtype=np.float64)
        for i in range(count):
            uniforms[i] = rng.trial_uniforms(config.seed, lo + i, draw)
        res = kernels.run_batch(plan, uniforms, backend=name)
        upper[lo:hi] = res["outcomes"] == 0
        fid[lo:hi] = res["fidelity"]
        par[lo:hi] = res["parity"]

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)

    upper_counts = upper.sum(axis=0).astype(np.float64)
    fid_sums = fid.sum(axis=0)
    par_sums = par.sum(axis=0)
    freq = upper_counts / trials
    all_freq = float(upper.all(axis=1).sum()) / trials
    beta = config.beta if config.beta is not None else 0.0
    analytic = np.array(
        [
            config.detector_efficiency
            * closedform.detection_probabilities(
                config.alpha, config.gamma, (s + 1) * plan.delta_t, beta
            ).p_upper
            for s in range(plan.n_steps)
        ]
    )
    times = plan.delta_t * np.arange(1, plan.n_steps + 1)
    return EnsembleStats(
        config=config,
        trials=trials,
        backend=name,
        all_upper_frequency=all_freq,
        all_upper_se=_binomial_se(all_freq, trials),
        per_step_upper_frequency=freq,
        per_step_upper_se=np.array(
            [_binomial_se(f, trials) for f in freq]
        ),
        per_step_upper_analytic=analytic,
        per_step_fidelity_mean=fid_sums / trials,
        per_step_parity_mean=par_sums / trials,
        mean_final_fidelity_even=float(fid_sums[-1] / trials),
        times=times,
    )


def _binomial_se(freq: float, trials: int) -> float:
    return float(math.sqrt(max(freq * (1.0 - freq), 0.0) / trials))


def _auto_chunk(dim: int, backend: str) -> int:
    if backend == "cython":
        return 8192
    # Bound the numpy batch to roughly 256 MiB of state.
    budget = 2**24
    return max(1, min(4096, budget // (dim * dim)))
