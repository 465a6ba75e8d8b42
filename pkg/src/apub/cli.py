"""Command-line interface.

    apub estimate --data <csv> --alpha A [--exact | --bootstrap M] [--seed S]
    apub solve lshaped   --problem <json> --alpha A --m-bootstrap M --seed S
    apub solve extensive --problem <json> --alpha A --m-bootstrap M --seed S
    apub experiment ev|productmix|gamma-bounds|m-convergence --config <json> --out <dir>

Results go to stdout as JSON. On failure the process exits nonzero and
writes one JSON error record ``{"error", "message", "exit_code"}`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from apub import errors
from apub.bounds import ENUMERATION_CAP, apub_bootstrap, apub_exact

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_MODEL = 4
EXIT_NUMERICAL = 5

DEFAULT_BOOTSTRAP = 5000
WEIGHT_STREAM = 0


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("UsageError", f"{self.prog}: {message}", EXIT_USAGE)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _emit(obj):
    json.dump(_clean(obj), sys.stdout, default=_json_default, sort_keys=True)
    sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# estimate


def read_values(path) -> np.ndarray:
    """All numeric cells of a CSV file; a non-numeric first row is a header."""
    values = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            cells = [c.strip() for c in row if c.strip()]
            try:
                values.extend(float(c) for c in cells)
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}: non-numeric value on line {i + 1}") from None
    if not values:
        raise ValueError(f"{path}: no data values")
    return np.asarray(values)


def cmd_estimate(args):
    from apub.sampling import RngStream

    values = read_values(args.data)
    if args.exact or (args.bootstrap is None and values.size <= ENUMERATION_CAP):
        est = apub_exact(values, args.alpha)
        method = "exact"
    else:
        m = args.bootstrap if args.bootstrap is not None else DEFAULT_BOOTSTRAP
        est = apub_bootstrap(values, args.alpha, m, RngStream(args.seed, WEIGHT_STREAM))
        method = "bootstrap"
    _emit(dict(est.to_dict(), method=method, n=int(values.size), seed=args.seed))


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args):
    from apub.lshaped import solve_apub_lshaped, solve_saa_lshaped, write_trace_csv
    from apub.model import TwoStageProblem, solve_extensive, solve_saa_extensive
    from apub.sampling import RngStream, draw_weight_matrix

    problem = TwoStageProblem.load(args.problem)
    V = None
    if not args.saa:
        V = draw_weight_matrix(problem.n_scenarios, args.m_bootstrap, RngStream(args.seed, WEIGHT_STREAM))
    out = {"method": args.solver, "model": "saa" if args.saa else "apub", "alpha": args.alpha,
           "m_bootstrap": None if args.saa else args.m_bootstrap, "seed": args.seed,
           "n_scenarios": problem.n_scenarios}
    if args.solver == "lshaped":
        if args.saa:
            value, x, log = solve_saa_lshaped(problem, tol=args.tol, max_iter=args.max_iter)
        else:
            value, x, log = solve_apub_lshaped(problem, args.alpha, V, tol=args.tol, max_iter=args.max_iter)
        out["log"] = log.to_dict()
        if args.trace:
            with open(args.trace, "w", newline="") as fh:
                write_trace_csv(log, fh)
    else:
        if args.saa:
            value, x, sol = solve_saa_extensive(problem, method=args.lp_method)
        else:
            value, x, sol = solve_extensive(problem, args.alpha, V, method=args.lp_method)
        out["lp_iterations"] = sol.iterations
    out["value"], out["x"] = value, x
    _emit(out)


# ---------------------------------------------------------------------------
# experiments

_EXPERIMENT_INSTANCE = {"ev": "ev", "productmix": "productmix", "gamma-bounds": "gamma"}


def cmd_experiment(args):
    from apub import experiments as ex

    with open(args.config) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    name = args.name
    if name in _EXPERIMENT_INSTANCE:
        given = data.get("instance", _EXPERIMENT_INSTANCE[name])
        if given != _EXPERIMENT_INSTANCE[name]:
            raise ValueError(f"experiment {name} cannot run instance {given!r}")
        data["instance"] = given
    else:
        data.setdefault("instance", "productmix")
    config = ex.ExperimentConfig.from_dict(data)
    if name in ("ev", "productmix"):
        summary = ex.run_replication_experiment(config, args.out, name)
        result = {"experiment": name, "best_level": summary["best_level"],
                  "failures": len(summary["failures"])}
    elif name == "gamma-bounds":
        res = ex.run_gamma_bound_study(config, args.out)
        result = {"experiment": name, "results": res["summary"]["results"]}
    else:
        res = ex.run_m_convergence(config, args.out)
        result = {"experiment": name, "results": res["summary"]["results"]}
    result["out"] = args.out
    _emit(result)


# ---------------------------------------------------------------------------


def _alpha(text):
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid alpha {text!r}") from None
    if not 0.0 < a <= 1.0:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1]")
    return a


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="apub", description="Average percentile upper bounds and two-stage APUB models")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="APUB of the mean of a data column")
    est.add_argument("--data", required=True, help="CSV file of sample values")
    est.add_argument("--alpha", required=True, type=_alpha)
    g = est.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="enumerate all resamples (N <= 8)")
    g.add_argument("--bootstrap", type=_positive, metavar="M", help="use M bootstrap resamples")
    est.add_argument("--seed", type=_seed, default=0)
    est.set_defaults(func=cmd_estimate)

    solve = sub.add_parser("solve", help="solve a two-stage problem")
    ssub = solve.add_subparsers(dest="solver", required=True, parser_class=_Parser)
    for name, help_text in (("lshaped", "L-shaped decomposition"), ("extensive", "monolithic LP")):
        s = ssub.add_parser(name, help=help_text)
        s.add_argument("--problem", required=True, help="problem JSON {c, A, b, scenarios, meta}")
        s.add_argument("--alpha", type=_alpha, default=1.0)
        s.add_argument("--m-bootstrap", type=_positive, default=1000)
        s.add_argument("--seed", type=_seed, default=0)
        s.add_argument("--saa", action="store_true", help="solve the sample-average model instead")
        if name == "lshaped":
            s.add_argument("--tol", type=float, default=1e-7)
            s.add_argument("--max-iter", type=_positive, default=None)
            s.add_argument("--trace", help="write the per-iteration CSV trace here")
        else:
            s.add_argument("--lp-method", choices=("auto", "simplex", "highs"), default="auto")
        s.set_defaults(func=cmd_solve)

    exp = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    exp.add_argument("name", choices=("ev", "productmix", "gamma-bounds", "m-convergence"))
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True)
    exp.set_defaults(func=cmd_experiment)
    return p


def _error_record(kind: str, message: str, code: int) -> int:
    json.dump({"error": kind, "message": message, "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
        return EXIT_OK
    except CliError as exc:
        return _error_record(exc.kind, str(exc), exc.code)
    except (errors.ModelError, errors.EnumerationTooLarge) as exc:
        return _error_record(type(exc).__name__, str(exc), EXIT_MODEL)
    except (errors.NumericalBreakdown, errors.IterationCapExceeded) as exc:
        return _error_record(type(exc).__name__, str(exc), EXIT_NUMERICAL)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        return _error_record(type(exc).__name__, str(exc), EXIT_INPUT)
    except errors.ApubError as exc:
        return _error_record(type(exc).__name__, str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
