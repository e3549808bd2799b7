"""Experiment front door.

Subcommands:
  run         one seeded experiment -> round-trace CSV + JSON summary
  sweep       cross product of one axis x seeds -> per-run CSVs + summary CSV
              (or, with --accountant-only, a single curve CSV with no training)
  accountant  print one accountant quantity with its inputs echoed
  report      render figures from a run CSV or a sweep directory

Configs are flat key=value text files (# comments allowed) whose keys mirror
the experiment-config fields; see the README for the full list.  Exit codes:
0 success, 2 invalid configuration or parameters, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import accountant, data, engine
from .accountant import SamplingSpec, SubsampleMode
from .errors import ConfigError
from .engine import ExperimentConfig

CSV_HEADER = "round,participants,test_accuracy,train_loss,eps_c_round,eps_c_total,eps_local_max,delta_c_round"

OUTPUT_DIR_ENV = "MSPAFL_OUTPUT_DIR"

# Keys accepted in config files, with their parsers.
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {text!r}") from None


def _parse_probs(text: str) -> float | tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) == 1:
        return float(parts[0])
    return tuple(float(p) for p in parts)


def _parse_mode(text: str) -> SubsampleMode:
    try:
        return SubsampleMode(text.strip().upper())
    except ValueError:
        raise ValueError(f"subsample_mode must be WOR or WR, got {text!r}") from None


_CONFIG_KEYS = {
    "num_clients": int,
    "rounds": int,
    "check_in_prob": _parse_probs,
    "local_steps": int,
    "batch_size": int,
    "subsample_mode": _parse_mode,
    "eps_local": float,
    "delta_local": float,
    "clip_threshold": float,
    "learning_rate": float,
    "split_fraction": float,
    "hoeffding_beta": float,
    "composition_delta": float,
    "master_seed": int,
    "algorithm": str,
    "regularization": float,
    "holdout_fraction": float,
    "public_only": _parse_bool,
    "noiseless": _parse_bool,
    "allow_extrapolation": _parse_bool,
    "sensitivity": float,
    "dataset": str,
    "standardize": _parse_bool,
    "local_dataset_size": int,
}

_REQUIRED_KEYS = (
    "num_clients",
    "rounds",
    "check_in_prob",
    "local_steps",
    "batch_size",
    "subsample_mode",
    "eps_local",
    "delta_local",
    "clip_threshold",
    "learning_rate",
)

# Keys that configure the run harness rather than the experiment itself.
_HARNESS_KEYS = ("dataset", "standardize", "local_dataset_size")


def parse_config_file(path: str | Path) -> dict:
    """Parse a key=value config file, collecting every problem before failing."""
    path = Path(path)
    problems: list[str] = []
    values: dict = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from None
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{line_no}: expected key=value, got {raw!r}")
            continue
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            problems.append(f"{path}:{line_no}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"{path}:{line_no}: duplicate key {key!r}")
            continue
        try:
            values[key] = _CONFIG_KEYS[key](text.strip())
        except ValueError as exc:
            problems.append(f"{path}:{line_no}: bad value for {key}: {exc}")
    for key in _REQUIRED_KEYS:
        if key not in values:
            problems.append(f"{path}: missing required key {key!r}")
    if problems:
        raise ConfigError(problems)
    return values


def build_config(values: dict, seed_override: int | None = None, allow_extrapolation: bool = False) -> ExperimentConfig:
    fields = {k: v for k, v in values.items() if k not in _HARNESS_KEYS}
    if seed_override is not None:
        fields["master_seed"] = seed_override
    if allow_extrapolation:
        fields["allow_extrapolation"] = True
    return ExperimentConfig(**fields)


def _fmt(value: float) -> str:
    """Floats printed with 9 significant digits, stable across runs."""
    return format(float(value), ".9g")


def write_trace_csv(traces, path: Path) -> None:
    """Write the round-trace CSV atomically (temp file + rename)."""
    lines = [CSV_HEADER]
    for t in traces:
        lines.append(
            ",".join(
                [
                    str(t.round_index),
                    str(len(t.participants)),
                    _fmt(t.test_accuracy),
                    _fmt(t.train_loss),
                    _fmt(t.eps_central_round),
                    _fmt(t.eps_central_total),
                    _fmt(t.eps_local_max),
                    _fmt(t.delta_central_round),
                ]
            )
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary_record(result: engine.ExperimentResult) -> dict:
    config = asdict(result.config)
    config["subsample_mode"] = result.config.subsample_mode.value
    total = asdict(result.total)
    total["per_client_total_eps_max"] = (
        max(result.total.per_client_total_eps) if result.total.per_client_total_eps else 0.0
    )
    del total["per_client_total_eps"]
    return {
        "config": config,
        "final_accuracy": result.final_accuracy,
        "final_server_accuracy": result.final_server_accuracy,
        "rounds_run": len(result.traces),
        "total_privacy": total,
    }


def _default_output_dir(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _load_dataset(values: dict) -> tuple[np.ndarray, np.ndarray]:
    if "dataset" not in values:
        raise ConfigError(["missing required key 'dataset' (path to the numeric CSV)"])
    schema = data.Schema(standardize=values.get("standardize", False))
    return data.load_csv(values["dataset"], schema)


def cmd_run(args) -> int:
    values = parse_config_file(args.config)
    config = build_config(values, args.seed, args.allow_extrapolation)
    features, labels = _load_dataset(values)
    result = engine.run_experiment(config, features, labels)

    if args.output:
        csv_path = Path(args.output)
    else:
        csv_path = _default_output_dir(None) / "run.csv"
    write_trace_csv(result.traces, csv_path)
    summary_path = csv_path.with_suffix(".summary.json")
    _atomic_write(summary_path, json.dumps(_summary_record(result), indent=2, sort_keys=True) + "\n")
    print(f"wrote {csv_path} and {summary_path}")
    if result.total.extrapolated:
        print("warning: eps_local > 1, privacy figures are out of the proven regime")
    return 0


_SWEEP_AXES = ("check_in_prob", "eps_local", "batch_size", "local_steps", "subsample_mode")


def _axis_parser(axis: str):
    if axis in ("batch_size", "local_steps"):
        return int
    if axis == "subsample_mode":
        return _parse_mode
    return float


def cmd_sweep(args) -> int:
    values = parse_config_file(args.config)
    if args.axis not in _SWEEP_AXES:
        raise ConfigError([f"sweep axis must be one of {_SWEEP_AXES}, got {args.axis!r}"])
    parse = _axis_parser(args.axis)
    try:
        points = [parse(v.strip()) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError([f"bad sweep value: {exc}"]) from None
    if not points:
        raise ConfigError(["sweep needs at least one value"])
    if args.repeats < 1:
        raise ConfigError([f"repeats must be >= 1, got {args.repeats}"])

    out_dir = _default_output_dir(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.accountant_only:
        return _sweep_accountant_only(values, args, points, out_dir)

    features, labels = _load_dataset(values)
    base_seed = args.seed if args.seed is not None else values.get("master_seed", 0)
    rows = []
    for point in points:
        finals, globals_, locals_ = [], [], []
        for r in range(args.repeats):
            run_values = dict(values)
            run_values[args.axis] = point
            run_values["master_seed"] = base_seed + r
            config = build_config(run_values, None, args.allow_extrapolation)
            result = engine.run_experiment(config, features, labels)
            point_label = point.value if isinstance(point, SubsampleMode) else point
            csv_path = out_dir / f"{args.axis}={point_label}_seed={base_seed + r}.csv"
            write_trace_csv(result.traces, csv_path)
            finals.append(result.final_accuracy)
            globals_.append(result.total.global_total_eps)
            locals_.append(
                max(result.total.per_client_total_eps) if result.total.per_client_total_eps else 0.0
            )
        rows.append((point, finals, globals_, locals_))

    lines = [
        "axis,value,repeats,final_accuracy_mean,final_accuracy_std,"
        "global_total_eps_mean,global_total_eps_std,local_total_eps_mean,local_total_eps_std"
    ]
    for point, finals, globals_, locals_ in rows:
        point_label = point.value if isinstance(point, SubsampleMode) else point
        lines.append(
            ",".join(
                [
                    args.axis,
                    str(point_label),
                    str(args.repeats),
                    _fmt(np.mean(finals)),
                    _fmt(np.std(finals, ddof=1) if len(finals) > 1 else 0.0),
                    _fmt(np.mean(globals_)),
                    _fmt(np.std(globals_, ddof=1) if len(globals_) > 1 else 0.0),
                    _fmt(np.mean(locals_)),
                    _fmt(np.std(locals_, ddof=1) if len(locals_) > 1 else 0.0),
                ]
            )
        )
    summary_path = out_dir / "summary.csv"
    _atomic_write(summary_path, "\n".join(lines) + "\n")
    print(f"wrote {len(points) * args.repeats} run CSVs and {summary_path}")
    return 0


def _sweep_accountant_only(values: dict, args, points, out_dir: Path) -> int:
    """Evaluate the privacy formulas along the axis without any training."""
    if "local_dataset_size" not in values:
        raise ConfigError(
            ["accountant-only sweeps need local_dataset_size to derive the subsampling ratio"]
        )
    if isinstance(values.get("check_in_prob"), tuple):
        raise ConfigError(["accountant-only sweeps need a scalar check_in_prob"])
    lines = ["axis,value,q,eps_c_round,delta_c_round,eps_c_total,delta_c_total,eps_local_total"]
    for point in points:
        pt = dict(values)
        pt[args.axis] = point
        spec = SamplingSpec(
            check_in_prob=float(pt["check_in_prob"]),
            subsample_mode=pt["subsample_mode"],
            local_steps=pt["local_steps"],
            batch_size=pt["batch_size"],
            local_dataset_size=pt["local_dataset_size"],
        )
        q = accountant.subsampling_ratio(spec)
        p = spec.check_in_prob
        round_priv = accountant.central_round_privacy_uniform(
            p,
            q,
            pt["eps_local"],
            pt["delta_local"],
            pt.get("hoeffding_beta", 0.25),
            pt["num_clients"],
            allow_extrapolation=args.allow_extrapolation or pt.get("allow_extrapolation", False),
        )
        tilde = pt.get("composition_delta", 1e-4)
        eps_total, delta_total = accountant.strong_composition(
            round_priv.eps_central, round_priv.delta_central, pt["rounds"], tilde
        )
        if 0.0 < q < 1.0:
            eps_local_total = accountant.total_local_epsilon_closed_form(
                q, p, pt["rounds"], pt["eps_local"], pt["delta_local"], pt["clip_threshold"]
            )
        else:
            eps_local_total = math.inf
        point_label = point.value if isinstance(point, SubsampleMode) else point
        lines.append(
            ",".join(
                [
                    args.axis,
                    str(point_label),
                    _fmt(q),
                    _fmt(round_priv.eps_central),
                    _fmt(round_priv.delta_central),
                    _fmt(eps_total),
                    _fmt(delta_total),
                    _fmt(eps_local_total),
                ]
            )
        )
    path = out_dir / "accountant_sweep.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def _echo(pairs: dict, results: dict) -> None:
    for k, v in pairs.items():
        print(f"  {k} = {v}")
    for k, v in results.items():
        print(f"{k} = {_fmt(v) if isinstance(v, float) else v}")


def cmd_accountant(args) -> int:
    if args.query == "round":
        priv = accountant.central_round_privacy_uniform(
            args.p,
            args.q,
            args.eps_local,
            args.delta_local,
            args.beta,
            args.num_clients,
            allow_extrapolation=args.allow_extrapolation,
        )
        print("inputs:")
        _echo(
            {
                "p": args.p,
                "q": args.q,
                "eps_local": args.eps_local,
                "delta_local": args.delta_local,
                "beta": args.beta,
                "num_clients": args.num_clients,
            },
            {
                "eps_c": priv.eps_central,
                "delta_c": priv.delta_central,
                "hoeffding_delta": priv.hoeffding_delta,
            },
        )
        if priv.extrapolated:
            print("note: out of proven regime (eps_local > 1)")
    elif args.query == "sigma":
        spec = accountant.LocalPrivacySpec(
            eps_local=args.eps_local,
            delta_local=args.delta_local,
            clip_threshold=args.clip,
            sensitivity=args.sensitivity,
        )
        print("inputs:")
        _echo(
            {
                "eps_local": args.eps_local,
                "delta_local": args.delta_local,
                "clip": args.clip,
                "sensitivity": spec.sensitivity,
            },
            {"sigma_squared": accountant.gaussian_sigma_squared(spec)},
        )
    elif args.query == "ratio":
        spec = SamplingSpec(
            check_in_prob=0.0,
            subsample_mode=_parse_mode(args.mode),
            local_steps=args.local_steps,
            batch_size=args.batch_size,
            local_dataset_size=args.dataset_size,
        )
        print("inputs:")
        _echo(
            {
                "mode": spec.subsample_mode.value,
                "local_steps": args.local_steps,
                "batch_size": args.batch_size,
                "dataset_size": args.dataset_size,
            },
            {"q": accountant.subsampling_ratio(spec)},
        )
    elif args.query == "total-local":
        closed = accountant.total_local_epsilon_closed_form(
            args.q, args.p, args.rounds, args.eps_local, args.delta_local, args.clip
        )
        results = {"eps_total_closed_form": closed}
        if args.oracle:
            results["eps_total_oracle"] = accountant.total_local_epsilon_oracle(
                args.q, args.p, args.rounds, args.eps_local, args.delta_local, args.clip
            )
        print("inputs:")
        _echo(
            {
                "q": args.q,
                "p": args.p,
                "rounds": args.rounds,
                "eps_local": args.eps_local,
                "delta_local": args.delta_local,
                "clip": args.clip,
            },
            results,
        )
    elif args.query == "total-global":
        eps_total, delta_total = accountant.strong_composition(
            args.eps_round, args.delta_round, args.rounds, args.composition_delta
        )
        print("inputs:")
        _echo(
            {
                "eps_round": args.eps_round,
                "delta_round": args.delta_round,
                "rounds": args.rounds,
                "composition_delta": args.composition_delta,
            },
            {"eps_total": eps_total, "delta_total": delta_total},
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown accountant query {args.query!r}")
    return 0


def cmd_report(args) -> int:
    from . import report

    written = report.render(Path(args.input), Path(args.output_dir) if args.output_dir else None)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mspafl", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_run.add_argument("--output", default=None, help="round-trace CSV path")
    p_run.add_argument("--allow-extrapolation", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a one-axis parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, help=f"one of {_SWEEP_AXES}")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--repeats", type=int, default=1, help="seeds per point")
    p_sweep.add_argument("--seed", type=int, default=None, help="base seed (point r uses seed+r)")
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.add_argument("--accountant-only", action="store_true",
                         help="evaluate privacy formulas only; no training")
    p_sweep.add_argument("--allow-extrapolation", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_acct = sub.add_parser("accountant", help="print one accountant quantity")
    acct_sub = p_acct.add_subparsers(dest="query", required=True)

    a_round = acct_sub.add_parser("round", help="single-round central (eps, delta)")
    a_round.add_argument("--p", type=float, required=True)
    a_round.add_argument("--q", type=float, required=True)
    a_round.add_argument("--eps-local", type=float, required=True)
    a_round.add_argument("--delta-local", type=float, required=True)
    a_round.add_argument("--beta", type=float, default=0.25)
    a_round.add_argument("--num-clients", type=int, required=True)
    a_round.add_argument("--allow-extrapolation", action="store_true")

    a_sigma = acct_sub.add_parser("sigma", help="calibrated Gaussian noise variance")
    a_sigma.add_argument("--eps-local", type=float, required=True)
    a_sigma.add_argument("--delta-local", type=float, required=True)
    a_sigma.add_argument("--clip", type=float, required=True)
    a_sigma.add_argument("--sensitivity", type=float, default=None)

    a_ratio = acct_sub.add_parser("ratio", help="data subsampling ratio q")
    a_ratio.add_argument("--mode", required=True, help="WOR or WR")
    a_ratio.add_argument("--local-steps", type=int, required=True)
    a_ratio.add_argument("--batch-size", type=int, required=True)
    a_ratio.add_argument("--dataset-size", type=int, required=True)

    a_local = acct_sub.add_parser("total-local", help="per-client total eps over T rounds")
    a_local.add_argument("--q", type=float, required=True)
    a_local.add_argument("--p", type=float, required=True)
    a_local.add_argument("--rounds", type=int, required=True)
    a_local.add_argument("--eps-local", type=float, required=True)
    a_local.add_argument("--delta-local", type=float, required=True)
    a_local.add_argument("--clip", type=float, required=True)
    a_local.add_argument("--oracle", action="store_true", help="also solve the tail bound numerically")

    a_global = acct_sub.add_parser("total-global", help="strong composition over T rounds")
    a_global.add_argument("--eps-round", type=float, required=True)
    a_global.add_argument("--delta-round", type=float, required=True)
    a_global.add_argument("--rounds", type=int, required=True)
    a_global.add_argument("--composition-delta", type=float, required=True)

    p_acct.set_defaults(func=cmd_accountant)

    p_report = sub.add_parser("report", help="render figures from CSV output")
    p_report.add_argument("--input", required=True, help="run CSV, sweep directory, or accountant sweep CSV")
    p_report.add_argument("--output-dir", default=None, help="where to put figures (default: next to the input)")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
