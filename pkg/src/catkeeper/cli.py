"""Command-line front end: simulate, sweep, validate.

Config files are flat JSON whose keys mirror ProtocolConfig field names
(plus "trials" and the pinned "rng" algorithm name); unknown keys are
rejected rather than ignored so a typo cannot silently change the
physics. All floats in CSV output carry 17 significant digits with '.'
decimal separator and LF line endings, so byte-identical reruns are the
expected behavior, not an accident.

Exit codes: 0 success, 1 validation failure, 2 usage/config error,
3 resource/dimension error.
"""

import argparse
import dataclasses
import json
import math
import sys

from . import closedform, kernels, protocol, rng, validation
from .errors import CatkeeperError, ConfigError, DimensionOverflowError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3

CONFIG_KEYS = {
    "alpha",
    "beta",
    "gamma",
    "n_atoms",
    "delta_t",
    "phi",
    "scheme",
    "detector_efficiency",
    "seed",
    "dim",
    "forced_miss",
    "trials",
    "rng",
}

CSV_COLUMNS = (
    "step",
    "t",
    "alpha_n_abs",
    "p_e_analytic",
    "p_e_empirical",
    "se",
    "fidelity_even_mean",
    "parity_mean",
)

SWEEPABLE = (
    "alpha",
    "beta",
    "gamma",
    "n_atoms",
    "delta_t",
    "phi",
    "scheme",
    "detector_efficiency",
    "dim",
    "trials",
)


def _fmt(value: float) -> str:
    """17 significant digits; enough to round-trip any binary64 exactly."""
    return format(float(value), ".17g")


def _parse_amplitude(value, key: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, (int, float)) for v in value)
    ):
        return complex(value[0], value[1])
    raise ConfigError(f"{key} must be a number or a [re, im] pair")


def load_config(path: str) -> tuple[protocol.ProtocolConfig, int]:
    """Read a JSON config file; returns (config, trials)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "alpha" not in raw:
        raise ConfigError("config requires 'alpha'")
    algorithm = raw.get("rng", rng.ALGORITHM)
    if algorithm != rng.ALGORITHM:
        raise ConfigError(
            f"unsupported rng algorithm {algorithm!r}; pinned to {rng.ALGORITHM!r}"
        )
    trials = raw.get("trials", 1000)
    if not (isinstance(trials, int) and trials >= 1):
        raise ConfigError("trials must be a positive integer")

    kwargs = {"alpha": _parse_amplitude(raw["alpha"], "alpha")}
    if raw.get("beta") is not None:
        kwargs["beta"] = _parse_amplitude(raw["beta"], "beta")
    for key in ("gamma", "delta_t", "phi", "detector_efficiency"):
        if key in raw and raw[key] is not None:
            value = raw[key]
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number")
            kwargs[key] = float(value)
    for key in ("n_atoms", "seed", "dim"):
        if key in raw and raw[key] is not None:
            value = raw[key]
            if not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = value
    if "scheme" in raw:
        kwargs["scheme"] = raw["scheme"]
    if "forced_miss" in raw and raw["forced_miss"] is not None:
        value = raw["forced_miss"]
        if not isinstance(value, list) or not all(
            isinstance(v, int) for v in value
        ):
            raise ConfigError("forced_miss must be a list of step indices")
        kwargs["forced_miss"] = tuple(value)
    return protocol.ProtocolConfig(**kwargs), trials


def _config_echo(config: protocol.ProtocolConfig) -> dict:
    """Effective config as JSON-friendly values; reparses to equality."""
    alpha = complex(config.alpha)
    beta = complex(config.beta) if config.beta is not None else None
    return {
        "alpha": [alpha.real, alpha.imag],
        "beta": [beta.real, beta.imag] if beta is not None else None,
        "gamma": config.gamma,
        "n_atoms": config.n_atoms,
        "delta_t": config.resolved_delta_t(),
        "phi": config.phi,
        "scheme": config.scheme,
        "detector_efficiency": config.detector_efficiency,
        "seed": config.seed,
        "dim": config.dim,
        "forced_miss": list(config.forced_miss),
        "rng": rng.ALGORITHM,
    }


def config_from_echo(echo: dict) -> protocol.ProtocolConfig:
    """Rebuild a ProtocolConfig from a summary's config echo."""
    kwargs = {
        "alpha": _parse_amplitude(echo["alpha"], "alpha"),
        "gamma": echo["gamma"],
        "n_atoms": echo["n_atoms"],
        "delta_t": echo["delta_t"],
        "phi": echo["phi"],
        "scheme": echo["scheme"],
        "detector_efficiency": echo["detector_efficiency"],
        "seed": echo["seed"],
        "dim": echo["dim"],
        "forced_miss": tuple(echo["forced_miss"]),
    }
    if echo.get("beta") is not None:
        kwargs["beta"] = _parse_amplitude(echo["beta"], "beta")
    return protocol.ProtocolConfig(**kwargs)


def _step_rows(config: protocol.ProtocolConfig, stats: protocol.EnsembleStats):
    delta_t = config.resolved_delta_t()
    beta = complex(config.beta) if config.beta is not None else 0.0
    size0 = abs(complex(config.alpha)) ** 2 + abs(beta) ** 2
    rows = []
    for s in range(config.n_atoms):
        t = (s + 1) * delta_t
        rows.append(
            {
                "step": s + 1,
                "t": t,
                "alpha_n_abs": math.sqrt(size0 * math.exp(-config.gamma * t)),
                "p_e_analytic": float(stats.per_step_upper_analytic[s]),
                "p_e_empirical": float(stats.per_step_upper_frequency[s]),
                "se": float(stats.per_step_upper_se[s]),
                "fidelity_even_mean": float(stats.per_step_fidelity_mean[s]),
                "parity_mean": float(stats.per_step_parity_mean[s]),
            }
        )
    return rows


def _write_csv(path: str, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            value = row[col]
            if isinstance(value, bool):
                cells.append(str(int(value)))
            elif isinstance(value, int):
                cells.append(str(value))
            elif isinstance(value, str):
                cells.append(value)
            else:
                cells.append(_fmt(value))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _summary(config, trials, stats) -> dict:
    return {
        "config": _config_echo(config),
        "trials": trials,
        "seed": config.seed,
        "backend": stats.backend,
        "all_upper_frequency": stats.all_upper_frequency,
        "all_upper_se": stats.all_upper_se,
        "mean_final_fidelity_even": stats.mean_final_fidelity_even,
    }


def cmd_simulate(args) -> int:
    config, trials = load_config(args.config)
    if args.trials is not None:
        trials = args.trials
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    stats = protocol.run_ensemble(config, trials)
    rows = _step_rows(config, stats)
    summary = _summary(config, trials, stats)
    if args.format == "csv":
        _write_csv(args.out, CSV_COLUMNS, rows)
        with open(
            args.out + ".summary.json", "w", encoding="utf-8", newline=""
        ) as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        payload = {"summary": summary, "steps": rows}
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(
        f"simulate: {trials} trials, all_upper={_fmt(stats.all_upper_frequency)}"
        f" (se={_fmt(stats.all_upper_se)}), backend={stats.backend}"
    )
    return EXIT_OK


def _parse_axis(spec: str):
    name, sep, values = spec.partition("=")
    if not sep or not values:
        raise ConfigError(f"axis must look like name=v1,v2,...; got {spec!r}")
    name = name.strip()
    if name not in SWEEPABLE:
        raise ConfigError(f"axis {name!r} is not a sweepable config field")
    parsed = []
    for chunk in values.split(","):
        chunk = chunk.strip()
        if not chunk:
            raise ConfigError(f"axis {name!r} has an empty value")
        try:
            parsed.append(int(chunk))
        except ValueError:
            try:
                parsed.append(float(chunk))
            except ValueError:
                parsed.append(chunk)
    return name, parsed


def cmd_sweep(args) -> int:
    config, trials = load_config(args.config)
    if args.trials is not None:
        trials = args.trials
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    axes = [_parse_axis(spec) for spec in args.axis]
    if not axes:
        raise ConfigError("sweep requires at least one --axis")

    cells = [{}]
    for name, values in axes:
        cells = [dict(cell, **{name: v}) for cell in cells for v in values]

    axis_names = [name for name, _ in axes]
    fixed = [
        "seed_cell",
        "trials",
        "all_upper_frequency",
        "all_upper_se",
        "all_upper_analytic",
        "mean_final_fidelity_even",
    ]
    columns = ["cell"] + axis_names + [c for c in fixed if c not in axis_names]
    rows = []
    for index, cell in enumerate(cells):
        cell_trials = int(cell.pop("trials", trials))
        cell_seed = rng.derive_substream_seed(config.seed, index)
        cell_config = dataclasses.replace(config, seed=cell_seed, **cell)
        stats = protocol.run_ensemble(cell_config, cell_trials)
        beta = cell_config.beta if cell_config.beta is not None else 0.0
        analytic = (
            cell_config.detector_efficiency**cell_config.n_atoms
            * closedform.sequence_all_upper(
                cell_config.alpha,
                cell_config.gamma,
                cell_config.resolved_delta_t(),
                cell_config.n_atoms,
                beta,
            )
        )
        row = {"cell": index, "seed_cell": cell_seed, "trials": cell_trials}
        for name in axis_names:
            row[name] = getattr(cell_config, name) if name != "trials" else cell_trials
        row["all_upper_frequency"] = stats.all_upper_frequency
        row["all_upper_se"] = stats.all_upper_se
        row["all_upper_analytic"] = analytic
        row["mean_final_fidelity_even"] = stats.mean_final_fidelity_even
        rows.append(row)
    _write_csv(args.out, columns, rows)
    print(f"sweep: {len(rows)} cells written to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    results = validation.run_suite(args.level)
    failed = 0
    for res in results:
        if math.isinf(res.tolerance):
            status = "REPORT"  # measured value surfaced, never judged
        else:
            status = "PASS" if res.passed else "FAIL"
        if not res.passed:
            failed += 1
        tol = "diagnostic" if math.isinf(res.tolerance) else _fmt(res.tolerance)
        print(
            f"{status} {res.name}: measured={_fmt(res.measured)} "
            f"tol={tol} ({res.reference})"
        )
    print(
        f"validate[{args.level}]: {len(results) - failed}/{len(results)} passed"
    )
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catkeeper",
        description=(
            "Simulate a parity-probe protocol that preserves a cat state "
            "in a lossy cavity"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one ensemble and write results")
    sim.add_argument("--config", required=True, help="JSON config path")
    sim.add_argument("--out", required=True, help="output path")
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--trials", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="run a Cartesian parameter sweep")
    swp.add_argument("--config", required=True, help="JSON config path")
    swp.add_argument(
        "--axis",
        action="append",
        default=[],
        help="axis as name=v1,v2,... (repeatable)",
    )
    swp.add_argument("--out", required=True, help="output CSV path")
    swp.add_argument("--trials", type=int, default=None)
    swp.add_argument("--seed", type=int, default=None)
    swp.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="run the cross-module oracle suite")
    val.add_argument("--level", choices=("fast", "full"), default="fast")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DimensionOverflowError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except CatkeeperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
