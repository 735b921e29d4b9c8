"""Command-line front end.

    fadingmac run <config> [--seed S] [--threads K] [--out PATH] [--policies a,b,c]
                           [--n-realizations N] [--set key.path=value ...]
    fadingmac verify <config> [--set key.path=value ...]
    fadingmac show <config>

``<config>`` is a YAML file or the name of a bundled config (``fadingmac list``).
Exit codes: 0 success, 1 failure, 2 config error, 3 DP capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import (
    ConfigError,
    apply_overrides,
    bundled_configs,
    dump_config,
    parse_config,
    read_yaml,
    to_spec,
)
from .online_dp import CapacityError
from .sim import DominanceError, ExperimentResult, run_experiment
from .verify import run_checks

log = logging.getLogger("fadingmac")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3
CSV_HEADER = ["sweep_value", "policy", "mean_bits", "stderr_bits", "n_realizations", "seed"]


def _error(code: int, message: str, **extra) -> int:
    print(json.dumps({"error": message, "code": code, **extra}), file=sys.stderr)
    return code


def _parse_set(items: list[str]) -> dict[str, object]:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "overrides look like key.path=value")
        out[key] = yaml.safe_load(raw)
    return out


def _load(args, extra: dict[str, object]):
    data = read_yaml(args.config)
    overrides = _parse_set(args.set or [])
    overrides.update(extra)
    cfg = parse_config(apply_overrides(data, overrides))
    return cfg, to_spec(cfg)


def _fmt(value) -> str:
    return "" if value is None else format(value, "g")


def write_csv(result: ExperimentResult, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for point in result.points:
        for name, st in point.stats.items():
            writer.writerow([_fmt(point.sweep_value), name, f"{st.mean_bits:.6f}",
                             f"{st.stderr_bits:.6f}", st.n_realizations, result.spec.seed])


def _summary(result: ExperimentResult, fh) -> None:
    axis = result.spec.sweep.axis if result.spec.sweep else None
    for point in result.points:
        label = f"{axis}={_fmt(point.sweep_value)}" if axis else "result"
        parts = [f"{name}={st.mean_bits / 1e6:.4f}Mb" for name, st in point.stats.items()]
        parts += [f"{name}=ERROR" for name in point.errors]
        if point.dp_predicted_bits is not None:
            parts.append(f"(dp_predicted={point.dp_predicted_bits / 1e6:.4f}Mb)")
        print(f"{label}: " + " ".join(parts), file=fh, flush=True)


def cmd_run(args) -> int:
    extra = {}
    if args.seed is not None:
        extra["experiment.seed"] = args.seed
    if args.policies:
        extra["experiment.policies"] = [p.strip() for p in args.policies.split(",") if p.strip()]
    if args.n_realizations is not None:
        extra["experiment.n_realizations"] = args.n_realizations
    if args.out:
        extra["output.csv"] = args.out
    try:
        cfg, spec = _load(args, extra)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, str(exc), path=exc.path)
    except FileNotFoundError as exc:
        return _error(EXIT_CONFIG, str(exc), path="")
    try:
        result = run_experiment(spec, threads=max(1, args.threads))
    except DominanceError as exc:
        return _error(EXIT_FAIL, f"internal consistency: {exc}")
    out = cfg.output.csv
    _summary(result, sys.stdout if out else sys.stderr)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_csv(result, fh)
    else:
        write_csv(result, sys.stdout)
    capacity = [(p.sweep_value, name, exc) for p in result.points
                for name, exc in p.errors.items() if isinstance(exc, CapacityError)]
    if capacity:
        value, name, exc = capacity[0]
        return _error(EXIT_CAPACITY, str(exc), policy=name, sweep_value=value,
                      hint="drop dp_optimal, lower experiment.dp_max_users or shrink "
                           "solver.dp.energy_grid_points")
    others = [(p.sweep_value, name, exc) for p in result.points
              for name, exc in p.errors.items()]
    if others:
        value, name, exc = others[0]
        return _error(EXIT_FAIL, str(exc), policy=name, sweep_value=value)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        _, spec = _load(args, {})
    except ConfigError as exc:
        return _error(EXIT_CONFIG, str(exc), path=exc.path)
    except FileNotFoundError as exc:
        return _error(EXIT_CONFIG, str(exc), path="")
    results = run_checks(spec)
    for r in results:
        print(r.line(), flush=True)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_FAIL
    return EXIT_OK


def cmd_show(args) -> int:
    try:
        cfg, _ = _load(args, {})
    except ConfigError as exc:
        return _error(EXIT_CONFIG, str(exc), path=exc.path)
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_configs():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fadingmac", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write a CSV")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--out")
    run.add_argument("--policies")
    run.add_argument("--n-realizations", type=int)
    run.add_argument("--set", action="append", metavar="KEY.PATH=VALUE")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="run the property checks at reduced scale")
    verify.add_argument("config")
    verify.add_argument("--set", action="append", metavar="KEY.PATH=VALUE")
    verify.set_defaults(func=cmd_verify)

    show = sub.add_parser("show", help="print the fully resolved config")
    show.add_argument("config")
    show.add_argument("--set", action="append", metavar="KEY.PATH=VALUE")
    show.set_defaults(func=cmd_show)

    lst = sub.add_parser("list", help="list bundled configs")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
