"""Command-line driver: ``tensordesing {synth,complete,validate,ingest}``.

Every command reads an optional ``key = value`` config file (``--config``);
explicit flags override it.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .completion import CompletionObjective, CompletionProblem, ingest_ratings, split_train_test, synth_generate
from .errors import DataError, PreconditionError, RankError, TensorDesingError
from .solvers import SOLVERS, IterationTrace, SolverConfig
from .solvers.stopping import NUMERICAL
from .tensor_core import SparseTensor
from .tucker_geometry import random_point

log = logging.getLogger("tensordesing")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(TensorDesingError):
    pass


class NumericalFailure(TensorDesingError):
    pass


def _int_tuple(text, name: str) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    try:
        out = tuple(int(v) for v in str(text).replace("x", ",").split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated integers, got {text!r}") from None
    if not out or any(v <= 0 for v in out):
        raise UsageError(f"--{name}: entries must be positive integers")
    return out


def _settings(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    """Config file values overridden by flags that were given."""
    conf: dict = {}
    if getattr(args, "config", None):
        conf.update(io.read_manifest(args.config))
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            conf[key] = val
    return conf


def _require(conf: dict, key: str):
    if conf.get(key) in (None, ""):
        raise UsageError(f"missing required setting --{key.replace('_', '-')}")
    return conf[key]


def _float(conf: dict, key: str, default=None) -> float | None:
    val = conf.get(key, default)
    if val is None:
        return None
    try:
        return float(val)
    except (TypeError, ValueError):
        raise UsageError(f"--{key.replace('_', '-')}: not a number: {val!r}") from None


def _int(conf: dict, key: str, default=None) -> int | None:
    val = _float(conf, key, default)
    if val is None:
        return None
    if val != int(val):
        raise UsageError(f"--{key.replace('_', '-')}: not an integer: {val!r}")
    return int(val)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(conf: dict) -> dict:
    dims = _int_tuple(_require(conf, "dims"), "dims")
    r_star = _int_tuple(_require(conf, "rank_true"), "rank-true")
    p = _float(conf, "p")
    seed = _int(conf, "seed", 0)
    if p is None or not 0 < p < 1:
        raise UsageError("--p must lie strictly between 0 and 1")
    if len(r_star) != len(dims) or any(r > n for r, n in zip(r_star, dims)):
        raise UsageError("--rank-true must have one entry per mode, each at most the dimension")
    out = Path(_require(conf, "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        prob = synth_generate(dims, r_star, p, seed)
    except PreconditionError as exc:
        raise UsageError(str(exc)) from None
    io.write_obs(out / "train.tobs", prob.train)
    io.write_obs(out / "test.tobs", prob.test)
    io.write_point(out / "truth.tdpt", prob.truth)
    manifest = {"kind": "synthetic", "dims": dims, "rank_true": r_star, "p": p, "seed": seed,
                "train": "train.tobs", "test": "test.tobs", "truth": "truth.tdpt",
                "train_count": prob.train.count, "test_count": prob.test.count}
    io.write_manifest(out / "manifest.txt", manifest)
    return manifest


# ---------------------------------------------------------------------------
# complete
# ---------------------------------------------------------------------------

def _load_problem(conf: dict) -> CompletionProblem:
    base = Path(".")
    if conf.get("data"):
        path = Path(conf["data"])
        data = io.read_manifest(path)
        base = path.parent
        for key in ("train", "test", "truth"):
            if key in data and not conf.get(key):
                conf[key] = str(base / data[key])
    train = io.read_obs(_require(conf, "train"))
    if conf.get("test"):
        test = io.read_obs(conf["test"])
    else:
        test = SparseTensor(train.dims, np.zeros((0, train.ndim), dtype=np.int64), np.zeros(0))
    truth = io.read_point(conf["truth"]) if conf.get("truth") else None
    if truth is not None and truth.dims != train.dims:
        raise DataError("ground-truth dims do not match the observations")
    return CompletionProblem(train, test, truth)


def _run_once(conf: dict, seed: int, out: Path) -> dict:
    """One solver run; returns the run manifest."""
    solver = str(conf.get("solver", "rcg-desing"))
    if solver not in SOLVERS:
        raise UsageError(f"--solver must be one of {', '.join(SOLVERS)}")
    prob = _load_problem(dict(conf))
    rank = _int_tuple(_require(conf, "rank"), "rank")
    if len(rank) != len(prob.dims):
        raise UsageError(f"--rank needs {len(prob.dims)} entries")
    if any(r > n for r, n in zip(rank, prob.dims)):
        raise UsageError(f"rank {rank} infeasible for dims {prob.dims}")
    cfg_map = {k: v for k, v in conf.items()}
    if "time_budget" in cfg_map:
        cfg_map["time_budget_s"] = cfg_map.pop("time_budget")
    cfg_map["seed"] = seed
    try:
        cfg = SolverConfig.from_mapping({k: str(v) for k, v in cfg_map.items()})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid solver setting: {exc}") from None
    out.mkdir(parents=True, exist_ok=True)
    trace_path = Path(conf["trace"]) if conf.get("trace") else out / "trace.csv"
    trace_path.parent.mkdir(parents=True, exist_ok=True)
    x0 = random_point(prob.dims, rank, seed)
    obj = CompletionObjective(prob)
    with np.errstate(over="raise", invalid="raise", divide="raise"), open(trace_path, "w", newline="") as fh:
        trace = IterationTrace(stream=fh)
        try:
            x, trace = SOLVERS[solver](x0, obj, cfg, trace)
        except (FloatingPointError, np.linalg.LinAlgError, RankError) as exc:
            raise NumericalFailure(f"{solver} failed: {exc}") from None
    last = trace.last
    io.write_point(out / "point.tdpt", x)
    manifest = {"solver": solver, "rank": rank, "seed": seed, "termination": trace.termination,
                "iterations": last.iter, "train_error": last.train_error, "test_error": last.test_error,
                "grad_norm": last.grad_norm, "restarts": trace.restarts, "trace": str(trace_path),
                "point": "point.tdpt"}
    if last.sv_error is not None:
        manifest["sv_error"] = last.sv_error
    io.write_manifest(out / "manifest.txt", manifest)
    if trace.termination == NUMERICAL or not all(
            v is None or math.isfinite(v) for v in (last.train_error, last.test_error, last.grad_norm)):
        raise NumericalFailure(f"{solver} stopped with {trace.termination}")
    return manifest


def _run_job(job):
    conf, seed, out = job
    try:
        return EXIT_OK, _run_once(conf, seed, Path(out))
    except UsageError as exc:
        return EXIT_USAGE, str(exc)
    except (DataError, OSError) as exc:
        return EXIT_DATA, str(exc)
    except NumericalFailure as exc:
        return EXIT_NUMERICAL, str(exc)


def cmd_complete(conf: dict, repeat: int = 1, parallel: bool = False) -> list:
    seed = _int(conf, "seed", 0)
    out = Path(_require(conf, "out"))
    if repeat < 1:
        raise UsageError("--repeat must be at least 1")
    if repeat == 1:
        return [(EXIT_OK, _run_once(conf, seed, out))]
    if conf.get("trace"):
        raise UsageError("--trace cannot be combined with --repeat; traces go to each run directory")
    jobs = [(dict(conf), seed + i, str(out / f"run_{seed + i}")) for i in range(repeat)]
    if parallel:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


# ---------------------------------------------------------------------------
# validate / ingest
# ---------------------------------------------------------------------------

def cmd_validate(conf: dict) -> dict:
    from .validation import SUITES, run_all

    names = conf.get("suite")
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    for n in names or []:
        if n not in SUITES:
            raise UsageError(f"unknown suite {n!r}; choose from {', '.join(SUITES)}")
    report = run_all(names)
    if conf.get("out"):
        Path(conf["out"]).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def cmd_ingest(conf: dict) -> dict:
    ratings = _require(conf, "ratings")
    period = _int(conf, "period", 604800)
    if period <= 0:
        raise UsageError("--period must be positive")
    obs = ingest_ratings(ratings, period)
    train_count = _int(conf, "train_count", obs.count)
    if not 0 <= train_count <= obs.count:
        raise UsageError(f"--train-count must lie in [0, {obs.count}]")
    seed = _int(conf, "seed", 0)
    prob = split_train_test(obs, train_count, seed)
    out = Path(_require(conf, "out"))
    out.mkdir(parents=True, exist_ok=True)
    io.write_obs(out / "all.tobs", obs)
    io.write_obs(out / "train.tobs", prob.train)
    io.write_obs(out / "test.tobs", prob.test)
    manifest = {"kind": "ratings", "source": str(ratings), "period_seconds": period, "dims": obs.dims,
                "count": obs.count, "seed": seed, "train": "train.tobs", "test": "test.tobs",
                "all": "all.tobs", "train_count": prob.train.count, "test_count": prob.test.count}
    io.write_manifest(out / "manifest.txt", manifest)
    return manifest


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tensordesing", description="Low-rank Tucker completion on a desingularized manifold.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic completion problem")
    p.add_argument("--config")
    p.add_argument("--dims")
    p.add_argument("--rank-true", dest="rank_true")
    p.add_argument("--p", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("complete", help="run a solver on TOBS1 data")
    p.add_argument("--config")
    p.add_argument("--data", help="dataset manifest written by synth or ingest")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--truth")
    p.add_argument("--rank")
    p.add_argument("--solver", choices=sorted(SOLVERS))
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--grad-tol", dest="grad_tol", type=float)
    p.add_argument("--time-budget", dest="time_budget", type=float)
    p.add_argument("--out")
    p.add_argument("--trace")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--parallel", action="store_true")

    p = sub.add_parser("validate", help="run the geometry property suites")
    p.add_argument("--config")
    p.add_argument("--suite", help="comma-separated subset of suites")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--strict", action="store_true", help="exit with 3 if any property fails")

    p = sub.add_parser("ingest", help="convert a ratings file to TOBS1")
    p.add_argument("--config")
    p.add_argument("--ratings")
    p.add_argument("--train-count", dest="train_count", type=int)
    p.add_argument("--period", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return parser


_KEYS = {
    "synth": ("dims", "rank_true", "p", "seed", "out"),
    "complete": ("data", "train", "test", "truth", "rank", "solver", "seed", "max_iters", "grad_tol",
                 "time_budget", "out", "trace"),
    "validate": ("suite", "out"),
    "ingest": ("ratings", "train_count", "period", "seed", "out"),
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = _settings(args, _KEYS[args.command])
        if args.command == "synth":
            print(json.dumps(cmd_synth(conf)))
        elif args.command == "complete":
            results = cmd_complete(conf, args.repeat, args.parallel)
            code = EXIT_OK
            for status, payload in results:
                if status == EXIT_OK:
                    print(json.dumps(payload))
                else:
                    print(f"error: {payload}", file=sys.stderr)
                    code = max(code, status)
            return code
        elif args.command == "validate":
            report = cmd_validate(conf)
            print(json.dumps(report, indent=2))
            if args.strict and not all(block["passed"] for block in report.values()):
                return EXIT_NUMERICAL
        else:
            print(json.dumps(cmd_ingest(conf)))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
