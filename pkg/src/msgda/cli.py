"""Command line entry point: ``msgda {run,replicate,schedule,verify,sweep}``.

Exit codes: 0 ok, 2 config error, 3 divergence, 4 capability error,
5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .analysis import run_all_checks
from .errors import ConfigError, MinimaxError
from .harness import (
    load_config,
    run_experiment,
    run_sweep,
    summary_json,
    write_outputs,
)
from .problems import ScalarBilinearQuadratic, problem_from_dict
from .schedules import (
    multistage_schedule,
    preset_n1,
    schedule_for_budget,
    truncate_to_budget,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 5


def _with_overrides(config, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        changes["num_replications"] = args.replications
    if getattr(args, "allow_unsafe_stepsize", False):
        changes["allow_unsafe_stepsize"] = True
    return config.replace(**changes) if changes else config


def cmd_run(args, replicate=False):
    config = _with_overrides(load_config(args.config), args)
    if replicate and config.num_replications < 2:
        raise ConfigError("replicate needs num_replications >= 2 (use --replications)")
    result = run_experiment(config)
    trace_path, summary_path = write_outputs(result, config, args.out, args.format)
    res = result.summary["results"]
    print(f"iterations={res['iterations']} final_sq_dist={res['final_sq_dist']!r} "
          f"iterations_to_threshold={res['iterations_to_threshold']}")
    for est in result.summary.get("bias_variance", []):
        print(f"  n={est['iteration']:>8} bias_sq={est['bias_sq']:.6e} "
              f"total_mse={est['total_mse']:.6e} variance={est['variance_component']:.6e} "
              f"se={est['standard_error']:.2e}")
    print(f"wrote {trace_path} and {summary_path}")
    return EXIT_OK


def cmd_schedule(args):
    mu, L = args.mu, args.L
    if args.n1 is not None:
        n1 = args.n1
    elif args.preset == "horizon_free":
        n1 = preset_n1(args.method, "horizon_free", mu, L, args.p)
    elif args.preset == "budget":
        if args.n is None:
            raise ConfigError("--preset budget needs --n")
        n1 = preset_n1(args.method, "budget", mu, L, n=args.n, C=args.C)
    else:
        raise ConfigError("give --n1 or --preset")

    p = 2.0 if args.preset == "budget" else args.p
    if args.num_stages is not None:
        schedule = multistage_schedule(args.method, mu, L, p, n1, args.num_stages)
        if args.n is not None:
            schedule = truncate_to_budget(schedule, args.n)
    elif args.n is not None:
        schedule = schedule_for_budget(args.method, mu, L, args.n, p, n1)
    else:
        raise ConfigError("give --num-stages or --n")

    print(schedule.table())
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        if args.format == "json":
            path.write_text(json.dumps(schedule.to_dict(), indent=2, sort_keys=True) + "\n")
        else:
            lines = ["k,alpha,n,T"] + [f"{k},{a!r},{n},{t}" for k, a, n, t in schedule.rows()]
            path.write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(args):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        spec = data.get("problem", data)
        try:
            problem = problem_from_dict(spec)
        except MinimaxError as exc:
            raise ConfigError(f"invalid problem: {exc}") from None
    else:
        problem = ScalarBilinearQuadratic(args.mu, args.L)
    seed = args.seed if args.seed is not None else 0
    reports = run_all_checks(problem, args.samples, seed)
    for report in reports:
        print(report)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY_FAILED


def cmd_sweep(args):
    template = _with_overrides(load_config(args.config), args)
    values = args.values if args.axis == "method" else [float(v) for v in args.values]
    summary, failures = run_sweep(template, args.axis, values)
    for run in summary["runs"]:
        if run["error"]:
            print(f"{args.axis}={run['value']}: FAILED ({run['error']['message']})")
        else:
            print(f"{args.axis}={run['value']}: iterations_to_threshold="
                  f"{run['iterations_to_threshold']} fitted_rate={run['fitted_rate']}")
    if summary.get("loglog_slope_iterations") is not None:
        print(f"log-log slope of iterations vs {args.axis}: {summary['loglog_slope_iterations']:.3f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep_summary.json").write_text(summary_json(summary), encoding="utf-8", newline="\n")
    if failures:
        return failures[0].exit_code
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="msgda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--allow-unsafe-stepsize", action="store_true")
        p.add_argument("--replications", type=int, help="override num_replications")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="trace format")

    experiment_flags(sub.add_parser("run", help="run one experiment"))
    experiment_flags(sub.add_parser("replicate", help="run with replications and bias/variance output"))

    p = sub.add_parser("schedule", help="print a multistage schedule")
    p.add_argument("--method", choices=("mgda", "mogda", "gda", "ogda"), default="mgda")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--n1", type=int)
    p.add_argument("--preset", choices=("horizon_free", "budget"))
    p.add_argument("--n", type=int, help="iteration budget")
    p.add_argument("--C", type=float, default=2.0)
    p.add_argument("--num-stages", type=int)
    p.add_argument("--out", help="also write the schedule to this file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("verify", help="check the monotonicity inequalities on a problem")
    p.add_argument("--config", help="config file (its 'problem' entry is used)")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--L", type=float, default=2.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, default=1000)

    p = sub.add_parser("sweep", help="run a config template over several values")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=("kappa", "sigma", "method"), required=True)
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--allow-unsafe-stepsize", action="store_true")
    p.add_argument("--replications", type=int)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "replicate": lambda a: cmd_run(a, replicate=True),
        "schedule": cmd_schedule,
        "verify": cmd_verify,
        "sweep": cmd_sweep,
    }
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                return handlers[args.command](args)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
    except MinimaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
