"""Command line front end.

    ctrace compute   --offspring poisson:2.5 --b 1 --p 0.4 --alpha 0:1:21
    ctrace critical  --offspring poisson:2.5 --b 0,1,2,3 --p 0.01:1:100
    ctrace theta-curve --offspring poisson:2.5 --b 1 --p 0.4 --alpha 0:1:200
    ctrace simulate  --engine direct --horizon 10 --trials 5 --out runs/
    ctrace mc --op vn --b 1 --p 0.4 --alpha 0.5 --trials 100000
    ctrace validate

Exit codes: 0 success, 1 usage error, 2 computation error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analytics as an
from . import montecarlo as mc
from . import sim_cluster, sim_direct, validation
from .analytics import CtpParams
from .offspring import DomainError, parse
from .rng import master_seed, trial_rng

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> list[float]:
    """``start:stop:steps`` with inclusive endpoints, or a comma list, or one value."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, steps = text.split(":")
            steps = int(steps)
            if steps < 1:
                raise ValueError("steps must be positive")
            if steps == 1:
                return [float(start)]
            return [float(x) for x in np.linspace(float(start), float(stop), steps)]
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from None


def parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",")]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.12g}"
    return str(x)


def _jsonable(x):
    if isinstance(x, float):
        return float(f"{x:.12g}") if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return _jsonable(float(x))
    return x


def resolved_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "dist")}
    cfg["seed"] = master_seed(args.seed) if "seed" in cfg else None
    return cfg


def emit(args, columns: list[str], rows: list[dict]) -> None:
    """Write ``rows`` as CSV (header first) or JSON records embedding the config."""
    if args.format == "json":
        cfg = resolved_config(args)
        payload = [_jsonable({**row, "config": cfg}) for row in rows]
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
        text = buf.getvalue()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)


# -- commands -----------------------------------------------------------------

def cmd_compute(args) -> int:
    rows = []
    for b in args.b_list:
        for p in parse_grid(args.p):
            for alpha in parse_grid(args.alpha):
                pr = CtpParams(b, p, alpha, args.dist)
                verdict = an.classify_extinction(pr, args.tol)
                y = an.seed_mean(pr, args.tol) if p > 0 else None
                try:
                    theta = an.malthusian_theta(pr, args.tol) if p > 0 else None
                except an.ThetaUndefined:
                    theta = None
                rows.append({"b": b, "p": p, "alpha": alpha, "y_b": y,
                             "verdict": verdict.verdict, "rule": verdict.rule, "theta": theta})
    emit(args, ["b", "p", "alpha", "y_b", "verdict", "theta"], rows)
    return EXIT_OK


def cmd_critical(args) -> int:
    rows = []
    for b in args.b_list:
        for p in parse_grid(args.p):
            rows.append({"b": b, "p": p, "e_b": an.critical_alpha(args.dist, b, p, args.tol)})
    emit(args, ["b", "p", "e_b"], rows)
    return EXIT_OK


def cmd_theta_curve(args) -> int:
    rows = []
    b = args.b_list[0]
    for p in parse_grid(args.p):
        cutoff = an.critical_alpha(args.dist, b, p, args.tol)
        for alpha in parse_grid(args.alpha):
            theta = None
            if alpha < cutoff:
                theta = an.malthusian_theta(CtpParams(b, p, alpha, args.dist), args.tol)
            rows.append({"b": b, "p": p, "alpha": alpha, "theta": theta})
    emit(args, ["b", "p", "alpha", "theta"], rows)
    return EXIT_OK


def _scalar(args, name: str) -> float:
    vals = parse_grid(getattr(args, name))
    if len(vals) != 1:
        raise UsageError(f"--{name} must be a single value for this command")
    return vals[0]


def cmd_simulate(args) -> int:
    pr = CtpParams(args.b_list[0], _scalar(args, "p"), _scalar(args, "alpha"), args.dist)
    seed = master_seed(args.seed)
    trajs = []
    for i in range(args.trials):
        rng = trial_rng(seed, i)
        if args.engine == "direct":
            trajs.append(sim_direct.run(pr, args.horizon, rng))
        else:
            trajs.append(sim_cluster.run(pr, args.horizon, rng))
    if args.format == "json":
        cfg = resolved_config(args)
        payload = [_jsonable({"trial": i, "Z": t.Z, "ZCT": t.ZCT, "R0": t.R0,
                              "extinction_time": t.extinction_time, "config": cfg})
                   for i, t in enumerate(trajs)]
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if args.out in (None, "-"):
            sys.stdout.write(text)
        else:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(text)
        return EXIT_OK
    if args.out in (None, "-"):
        for i, t in enumerate(trajs):
            if len(trajs) > 1:
                sys.stdout.write(f"# trial {i}\n")
            sys.stdout.write(t.to_csv())
    elif args.trials == 1 and not args.out.endswith("/"):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(trajs[0].to_csv())
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trajs):
            (out / f"trial_{i:05d}.csv").write_text(t.to_csv())
    return EXIT_OK


def cmd_mc(args) -> int:
    pr = CtpParams(args.b_list[0], _scalar(args, "p"), _scalar(args, "alpha"), args.dist)
    seed = master_seed(args.seed)
    base = {"op": args.op, "params": pr.as_dict(), "horizon": args.horizon, "seed": seed}
    if args.op == "vn":
        ests = mc.estimate_vn(pr, args.n_max, args.trials, seed)
        v = an.compute_sequences(pr, args.n_max).v
        rows = [{**base, "n": i + 1, "trials": e.trials, "value": e.value, "stderr": e.stderr,
                 "ci95": list(e.ci95), "analytic": v[i + 1], "z": e.z_score(v[i + 1])}
                for i, e in enumerate(ests)]
        cols = ["n", "value", "stderr", "analytic", "z"]
    else:
        if args.op == "extinction":
            est = mc.estimate_extinction_probability(pr, args.horizon, args.trials, seed)
        elif args.op == "growth":
            est = mc.estimate_growth_rate(pr, args.horizon, args.trials, args.window_start, seed)
        else:
            est = mc.estimate_seed_mean(pr, args.trials, seed)
        rows = [{**base, "trials": est.trials, "value": est.value, "stderr": est.stderr,
                 "ci95": list(est.ci95), **est.meta}]
        cols = ["op", "value", "stderr", "trials", "horizon"]
    if args.format is None:
        args.format = "json"
    emit(args, cols, rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    scale = 1.0 if args.profile == "full" else 0.05
    results = validation.run_all(scale=scale, echo=lambda s: print(s, flush=True))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_VALIDATION if failed else EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--offspring", default="poisson:2.5",
                        help="poisson:L, geometric:Q, binomial:N:Q or pmf:w0,w1,...")
    common.add_argument("--b", default="0", help="detection delay (comma list allowed for compute/critical)")
    common.add_argument("--p", default="0.4", help="detection probability, value or start:stop:steps")
    common.add_argument("--alpha", default="0.5", help="trace probability, value or start:stop:steps")
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--horizon", type=int, default=30)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: $CTRACE_SEED)")
    common.add_argument("--tol", type=float, default=an.DEFAULT_TOL)
    common.add_argument("--engine", choices=("direct", "cluster"), default="cluster")
    common.add_argument("--out", default=None, help="output path ('-' or omitted for stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)

    parser = _Parser(prog="ctrace", description="Branching process with contact tracing.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("compute", parents=[common], help="seed mean, verdict and theta over a grid"
                   ).set_defaults(func=cmd_compute)
    sub.add_parser("critical", parents=[common], help="critical trace probability e_b(p)"
                   ).set_defaults(func=cmd_critical)
    sub.add_parser("theta-curve", parents=[common], help="Malthusian parameter against alpha"
                   ).set_defaults(func=cmd_theta_curve)
    sub.add_parser("simulate", parents=[common], help="simulate trajectories"
                   ).set_defaults(func=cmd_simulate)
    m = sub.add_parser("mc", parents=[common], help="Monte Carlo estimators")
    m.add_argument("--op", choices=("extinction", "growth", "vn", "seed-mean"), default="extinction")
    m.add_argument("--n-max", type=int, default=10)
    m.add_argument("--window-start", type=int, default=None)
    m.set_defaults(func=cmd_mc)
    v = sub.add_parser("validate", parents=[common], help="run the agreement suites")
    v.add_argument("--profile", choices=("full", "quick"), default="full")
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.dist = parse(args.offspring)
        args.b_list = parse_ints(args.b)
        if any(b < 0 for b in args.b_list):
            raise UsageError("--b must be nonnegative")
        if args.format is None and args.command != "mc":
            args.format = "csv"
        return args.func(args)
    except UsageError as exc:
        print(f"ctrace: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"ctrace: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (an.NoCertifiedTruncation, an.ThetaUndefined, sim_direct.ExplosionCap,
            sim_cluster.ExplosionCap, sim_cluster.AgeCapExceeded, RuntimeError, ValueError) as exc:
        print(f"ctrace: computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
