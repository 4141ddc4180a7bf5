"""Benchmark the trajectory kernels against each other.

Runs the same ensemble on every available backend, reports throughput,
and verifies the outcome statistics agree bit for bit (they share the
per-trial random streams, so any difference is a kernel bug).

Usage: python -m catkeeper.bench [--trials N] [--atoms M] [--alpha A]
"""

import argparse
import math
import time

import numpy as np

from . import kernels, protocol


def run(trials: int, atoms: int, alpha: float) -> dict[str, float]:
    """Time every backend; returns trajectory-steps/s per backend name.

    Raises RuntimeError if any backend disagrees with the first on the
    outcome statistics.
    """
    config = protocol.ProtocolConfig(
        alpha=alpha, gamma=1.0, n_atoms=atoms, seed=42
    )
    plan = protocol.build_plan(config)
    print(
        f"benchmark: alpha={alpha:g}, {atoms} steps, dim={plan.dim}, "
        f"{trials} trials, {len(plan.band_offsets)} Kraus bands"
    )
    stats_by_backend = {}
    rates = {}
    for backend in kernels.available_backends():
        start = time.perf_counter()
        stats = protocol.run_ensemble(config, trials, backend=backend)
        elapsed = time.perf_counter() - start
        rate = trials * atoms / elapsed
        stats_by_backend[backend] = stats
        rates[backend] = rate
        print(
            f"  {backend:>7}: {elapsed:8.3f} s  "
            f"({rate:,.0f} trajectory-steps/s)"
        )
    names = list(stats_by_backend)
    for other in names[1:]:
        a, b = stats_by_backend[names[0]], stats_by_backend[other]
        same = (
            a.all_upper_frequency == b.all_upper_frequency
            and np.array_equal(
                a.per_step_upper_frequency, b.per_step_upper_frequency
            )
            and np.allclose(
                a.per_step_fidelity_mean,
                b.per_step_fidelity_mean,
                rtol=0.0,
                atol=1e-12,
            )
        )
        print(
            f"  agreement {names[0]} vs {other}: "
            f"{'identical outcome statistics' if same else 'MISMATCH'}"
        )
        if not same:
            raise RuntimeError(
                f"backends {names[0]} and {other} disagree on outcome "
                "statistics"
            )
    return rates


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=2000)
    parser.add_argument("--atoms", type=int, default=10)
    parser.add_argument("--alpha", type=float, default=math.sqrt(2.0))
    args = parser.parse_args(argv)
    try:
        run(args.trials, args.atoms, args.alpha)
    except RuntimeError as exc:
        print(f"error: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
