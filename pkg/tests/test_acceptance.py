"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line with the measured
quantities before asserting.  Run on its own with
``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np
import pytest
from oracles import exact_line_objective, golden_section, ratings_fixture

from tensordesing import io
from tensordesing import tucker_geometry as tg
from tensordesing.cli import main
from tensordesing.completion import (
    CompletionObjective, CompletionProblem, ingest_ratings, sv_error, sv_total, synth_generate,
)
from tensordesing.solvers import (
    SOLVERS, SolverConfig, exact_linesearch, monotone, read_trace_csv,
    tcg_subproblem, update_radius,
)
from tensordesing.tensor_core import SparseTensor, make_rng
from tensordesing.validation import counterexample_suite, group_action_suite, tt_suite


@pytest.fixture
def report(capsys):
    def emit(criterion: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
            sys.stdout.flush()
    return emit


def _props(block):
    return {p["name"]: p for p in block["properties"]}


def test_criterion_1_geometry_identities(tmp_path, capsys, report):
    out = tmp_path / "geom.json"
    t0 = time.perf_counter()
    code = main(["validate", "--suite", "tucker_geometry", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    props = _props(json.loads(out.read_text())["tucker_geometry"])
    expected_tols = {"projection_idempotence": 1e-11, "metric_consistency": 1e-11, "retraction_base": 1e-13,
                     "retraction_slope": 0.1, "gradient_fd": 1e-5, "hessian_symmetry": 1e-9, "hessian_fd": 1e-4}
    checks = {k: props[k]["value"] <= tol for k, tol in expected_tols.items()}
    ok = code == 0 and all(checks.values()) and elapsed < 30.0
    report("1 geometry identities", ok, ", ".join(f"{k}={props[k]['value']:.2e}" for k in expected_tols)
           + f", {elapsed:.1f}s")
    assert ok


def test_criterion_2_counterexample(report):
    t0 = time.perf_counter()
    props = {p.name: p for p in counterexample_suite(range(20), n_dirs=1000)}
    elapsed = time.perf_counter() - t0
    ok = (props["grad_residual"].value <= 1e-12 and props["min_quadform"].value >= -1e-10
          and props["cone_descent"].value <= 1e-12 and props["quadform_cross_check"].passed and elapsed < 5.0)
    report("2 counterexample", ok,
           f"residual/||grad||={props['grad_residual'].value:.2e}, min quadform={props['min_quadform'].value:.2e}, "
           f"cone rel err={props['cone_descent'].value:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_3_group_action(report):
    props = {p.name: p for p in group_action_suite(range(20))}
    grad_ok = all(props[k].value <= 1e-11 for k in ("partial_core", "partial_factor", "partial_factor_orthogonal"))
    quad_ok = props["quadform_invariance"].value <= 1e-6
    ok = grad_ok and quad_ok
    report("3 group-action invariance", ok,
           f"core={props['partial_core'].value:.2e}, factor={props['partial_factor'].value:.2e}, "
           f"orthogonal={props['partial_factor_orthogonal'].value:.2e}, quadform={props['quadform_invariance'].value:.2e}")
    assert ok


def _over_problem(seed):
    return synth_generate((100, 100, 100), (4, 4, 4), 0.05, seed)


@pytest.mark.slow
def test_criterion_4_unbiased_rank_completion(report):
    prob = _over_problem(0)
    obj = CompletionObjective(prob)
    x0 = tg.random_point(prob.dims, (4, 4, 4), 1000)
    parts, ok = [], True
    for name in ("rgd-desing", "rcg-desing"):
        t0 = time.perf_counter()
        x, tr = SOLVERS[name](x0, obj, SolverConfig(max_iters=500))
        elapsed = time.perf_counter() - t0
        hit = tr.first_iter_below("test_error", 1e-8)
        rel_sv = sv_error(x, prob.truth) / sv_total(prob.truth)
        good = hit is not None and hit <= 500 and rel_sv <= 1e-6 and elapsed < 120.0
        ok &= good
        parts.append(f"{name}: test<=1e-8 at iter {hit}, sv_error/sum={rel_sv:.1e}, {elapsed:.1f}s")
    report("4 unbiased-rank completion", ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_5_over_rank_comparison(report):
    t0 = time.perf_counter()
    wins, lines = 0, []
    for seed in range(5):
        prob = _over_problem(seed)
        obj = CompletionObjective(prob)
        x0 = tg.random_point(prob.dims, (6, 6, 6), 1000 + seed)
        res = {}
        for name in ("rgd-desing", "rcg-desing", "rcg-tucker"):
            _, tr = SOLVERS[name](x0, obj, SolverConfig(max_iters=1000))
            res[name] = (tr.first_iter_below("test_error", 1e-4), tr.last.test_error)
        desing_ok = all(res[n][0] is not None for n in ("rgd-desing", "rcg-desing"))
        base_ok = res["rcg-tucker"][1] >= 1e-2
        wins += desing_ok and base_ok
        lines.append(f"seed {seed}: rgd {res['rgd-desing'][1]:.1e}, rcg {res['rcg-desing'][1]:.1e}, "
                     f"tucker {res['rcg-tucker'][1]:.2f}")
    elapsed = time.perf_counter() - t0
    ok = wins >= 4 and elapsed < 300.0
    report("5 over-rank comparison", ok, f"{wins}/5 seeds; " + "; ".join(lines) + f"; {elapsed:.0f}s")
    assert ok


def test_criterion_6_solver_contracts(report):
    bar = 8.0
    table = [(0.1, True, 4.0, 1.0), (0.2, False, 4.0, 1.0), (0.25, True, 2.0, 2.0), (0.5, False, 2.0, 2.0),
             (0.8, False, 2.0, 2.0), (0.8, True, 2.0, 4.0), (0.9, True, 6.0, 8.0), (-1.0, False, 1.0, 0.25)]
    radius_ok = all(update_radius(d, rho, b, bar) == e for rho, b, d, e in table)

    x = tg.random_point((5, 4, 3), (2, 2, 2), 0)
    target = make_rng(1).standard_normal(x.dims)
    hess = lambda v: tg.hess_apply(x, v, tg.phi(x) - target, tg.tangent_tensor(v))  # noqa: E731
    g = tg.riem_grad(x, tg.phi(x) - target)
    worst = 0.0
    for delta in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
        step = tcg_subproblem(x, g, hess, delta, SolverConfig()).step
        worst = max(worst, tg.tangent_norm(step) - delta)
    tcg_ok = worst <= 1e-10

    rng = make_rng(2)
    a, b = rng.standard_normal(200), rng.standard_normal(200)
    s = exact_linesearch(a, b)
    gs = golden_section(exact_line_objective(a, b), -20.0, 20.0)
    ls_ok = abs(s - gs) <= 1e-8

    # Full observation with A - X equal to the sampled tangent: the step is one.
    xi = tg.random_tangent(x, 3)
    xdot = tg.tangent_tensor(xi)
    unit_direct = exact_linesearch(xdot.ravel(), xdot.ravel())
    lin = np.arange(xdot.size)
    idx = np.stack(np.unravel_index(lin, x.dims, order="F"), axis=1)
    a_full = tg.phi(x) + xdot
    prob = CompletionProblem(SparseTensor(x.dims, idx, a_full.ravel(order="F")),
                             SparseTensor(x.dims, idx[:0], np.zeros(0)))
    unit_obj = CompletionObjective(prob).exact_step(x, xi)
    unit_ok = unit_direct == 1.0 and abs(unit_obj - 1.0) <= 1e-14
    ok = radius_ok and tcg_ok and ls_ok and unit_ok
    report("6 solver contracts", ok,
           f"radius table {'ok' if radius_ok else 'MISMATCH'}, max(||eta||-Delta)={worst:.1e}, "
           f"|s-golden|={abs(s - gs):.1e}, s(full)={unit_direct!r} / pipeline {unit_obj:.16f}")
    assert ok


def test_criterion_7_tt_suite(report):
    t0 = time.perf_counter()
    props = {p.name: p for p in tt_suite(range(10))}
    elapsed = time.perf_counter() - t0
    ok = (props["interface_recursion"].value <= 1e-11 and props["unfolding_identity"].value <= 1e-11
          and props["psi_round_trip"].value <= 1e-10 and props["right_orthogonality"].value <= 1e-10
          and props["group_recovery"].value <= 1e-9 and props["horizontal_dim_mismatch"].value == 0.0
          and elapsed < 30.0)
    report("7 TT suite", ok, ", ".join(f"{k}={p.value:.1e}" for k, p in props.items()) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_8_ratings_fixture_end_to_end(tmp_path, capsys, report):
    path = tmp_path / "ratings.dat"
    expected = ratings_fixture(path, n_lines=1000, n_dups=120, seed=0)
    obs = ingest_ratings(path)
    got = {tuple(i): v for i, v in zip(obs.indices.tolist(), obs.values.tolist())}
    ingest_ok = got == expected and obs.count == 880

    out = tmp_path / "ing"
    code_ingest = main(["ingest", "--ratings", str(path), "--train-count", "700", "--seed", "3", "--out", str(out)])
    run = tmp_path / "run"
    code_run = main(["complete", "--data", str(out / "manifest.txt"), "--rank", "2,2,2", "--solver", "rcg-desing",
                     "--max-iters", "60", "--seed", "1", "--out", str(run)])
    capsys.readouterr()
    rows = read_trace_csv(run / "trace.csv")
    train = [float(r["train_error"]) for r in rows]
    manifest = io.read_manifest(run / "manifest.txt")
    clean = manifest["termination"] in ("train_error", "rel_change", "grad_norm", "max_iters")
    ok = ingest_ok and code_ingest == 0 and code_run == 0 and clean and monotone(train) and len(train) > 1
    report("8 ratings fixture", ok,
           f"{obs.count} distinct entries from 1000 lines (expected {len(expected)}), exact match {got == expected}; "
           f"run exit {code_run}, {manifest['termination']} after {len(train) - 1} iters, "
           f"train error {train[0]:.3f} -> {train[-1]:.3f}, monotone {monotone(train)}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
