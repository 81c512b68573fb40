import math

import numpy as np
import pytest
from oracles import exact_line_objective, golden_section

from tensordesing import tucker_geometry as tg
from tensordesing.errors import DegenerateDirectionError
from tensordesing.solvers import (
    SOLVERS, DenseObjective, DesingManifold, IterationRecord, IterationTrace, RTRConfig, SolverConfig,
    TuckerProductManifold, conjugate_direction, exact_linesearch, monotone, rcg_solve, read_trace_csv,
    rgd_solve, rtr_solve, stopping_check, tcg_subproblem, update_radius,
)
from tensordesing.tensor_core import make_rng


def quadratic_objective(target):
    return DenseObjective(lambda x: 0.5 * float(np.sum((x - target) ** 2)), lambda x: x - target,
                          lambda x, xd: xd, quadratic=True)


@pytest.fixture
def problem():
    dims, ranks = (6, 5, 4), (2, 2, 2)
    truth = tg.phi(tg.random_point(dims, ranks, 11))
    return quadratic_objective(truth), tg.random_point(dims, ranks, 12)


def test_update_radius_table():
    bar = 8.0
    script = [
        # (rho, boundary, delta_in, expected)
        (0.1, True, 4.0, 1.0),
        (0.1, False, 4.0, 1.0),
        (0.2499, False, 2.0, 0.5),
        (0.25, False, 2.0, 2.0),
        (0.5, True, 2.0, 2.0),
        (0.75, True, 2.0, 2.0),
        (0.76, False, 2.0, 2.0),
        (0.9, True, 2.0, 4.0),
        (0.9, True, 5.0, 8.0),
        (0.9, True, 8.0, 8.0),
        (-3.0, True, 1.0, 0.25),
    ]
    for rho, boundary, din, expect in script:
        assert update_radius(din, rho, boundary, bar) == expect


def _coordinate_operator(x, seed):
    """SPD operator (in the metric) built from a coordinate basis: H = M^{-1} S in coordinates."""
    basis = tg.tangent_basis(x)
    m = tg.gram_matrix(basis)
    rng = make_rng(seed)
    a = rng.standard_normal((len(basis), len(basis)))
    s = a @ a.T + len(basis) * np.eye(len(basis))
    minv = np.linalg.inv(m)

    def coords(v):
        return minv @ np.array([tg.tangent_inner(b, v) for b in basis])

    def apply(v):
        return tg.combine(basis, minv @ (s @ coords(v)))

    return basis, coords, apply


def test_tcg_zero_gradient():
    x = tg.random_point((3, 3, 3), (2, 2, 2), 0)
    res = tcg_subproblem(x, tg.zero_tangent(x), lambda v: v, 1.0, SolverConfig())
    assert res.reason == "zero_gradient" and res.iterations == 0
    assert tg.tangent_norm(res.step) == 0.0


def test_tcg_negative_curvature_hits_boundary():
    x = tg.random_point((4, 3, 3), (2, 2, 2), 1)
    g = tg.random_tangent(x, 2)
    res = tcg_subproblem(x, g, lambda v: -1.0 * v, 0.37, SolverConfig())
    assert res.reason == "negative_curvature" and res.hit_boundary
    assert abs(tg.tangent_norm(res.step) - 0.37) <= 1e-10


def test_tcg_step_within_radius_and_solves_spd_system():
    x = tg.random_point((3, 3, 3), (2, 2, 1), 3)
    basis, coords, apply = _coordinate_operator(x, 4)
    g = tg.random_tangent(x, 5)
    cfg = SolverConfig(rtr=RTRConfig(tcg_kappa=1e-12, tcg_theta=1.0, tcg_max_iters=500))
    for delta in (1e-3, 1e-2, 0.1):
        res = tcg_subproblem(x, g, apply, delta, cfg)
        assert tg.tangent_norm(res.step) <= delta + 1e-10
    res = tcg_subproblem(x, g, apply, 1e6, cfg)
    assert res.reason == "residual"
    residual = apply(res.step) + g
    assert tg.tangent_norm(residual) <= 1e-8 * tg.tangent_norm(g)
    # The accumulated H eta agrees with applying H to the final step.
    assert tg.tangent_norm(res.hess_step - apply(res.step)) <= 1e-8 * tg.tangent_norm(g)


def test_exact_linesearch_cases():
    rng = make_rng(0)
    a = rng.standard_normal(50)
    assert exact_linesearch(a, a) == 1.0
    assert exact_linesearch(a, np.zeros(50)) == 0.0
    b = rng.standard_normal(50)
    s = exact_linesearch(a, b)
    oracle = golden_section(exact_line_objective(a, b), -10.0, 10.0)
    assert abs(s - oracle) <= 1e-8
    with pytest.raises(DegenerateDirectionError):
        exact_linesearch(np.zeros(5), b[:5])


def test_full_observation_exact_step_is_one(problem):
    obj, x = problem
    eta = tg.project_tangent(x, -obj.egrad(x))
    # With Xdot = A - X, the minimizer of 1/2||s Xdot - (A - X)||^2 is s = 1.
    resid = -obj.egrad(x)
    assert exact_linesearch(resid.ravel(), resid.ravel()) == 1.0
    s = obj.exact_step(x, eta)
    xd = tg.tangent_tensor(eta)
    assert s == pytest.approx(float(np.vdot(xd, resid)) / float(np.vdot(xd, xd)), rel=1e-14)


def _trace(values, accepted=None, grads=None):
    tr = IterationTrace()
    for i, v in enumerate(values):
        tr.append(IterationRecord(iter=i, time_s=0.0, train_error=v,
                                  grad_norm=1.0 if grads is None else grads[i],
                                  accepted=True if accepted is None else accepted[i]))
    return tr


def test_stopping_rules():
    cfg = SolverConfig(max_iters=10, train_tol=1e-6, rel_change_tol=1e-3, grad_tol=1e-8, time_budget_s=5.0)
    assert stopping_check(IterationTrace(), cfg) is None
    assert stopping_check(_trace([1.0, 1e-7]), cfg) == "train_error"
    assert stopping_check(_trace([1.0, 1.0 - 1e-5]), cfg) == "rel_change"
    assert stopping_check(_trace([1.0, 0.5, 0.5], accepted=[True, True, False]), cfg) is None
    assert stopping_check(_trace([1.0, 0.5], grads=[1.0, 1e-9]), cfg) == "grad_norm"
    assert stopping_check(_trace([1.0, 0.5]), cfg, iters_done=10) == "max_iters"
    assert stopping_check(_trace([1.0, 0.5]), cfg, elapsed_s=6.0, iters_done=1) == "time_budget"
    assert stopping_check(_trace([1.0, 0.5]), cfg, elapsed_s=1.0, iters_done=1) is None


def test_config_round_trip_and_validation():
    cfg = SolverConfig.from_mapping({"max_iters": "50", "grad-tol": "1e-9", "rtr.rho_prime": "0.2",
                                     "delta_bar": "3", "unknown": "x"})
    assert cfg.max_iters == 50 and cfg.grad_tol == 1e-9
    assert cfg.rtr.rho_prime == 0.2 and cfg.rtr.delta_bar == 3.0
    flat = {k: v for k, v in cfg.as_dict().items() if k != "rtr"}
    flat.update({f"rtr.{k}": v for k, v in cfg.as_dict()["rtr"].items()})
    assert SolverConfig.from_mapping(flat) == cfg
    for bad in ({"max_iters": "-1"}, {"rtr.rho_prime": "0.3"}, {"rtr.delta0": "5", "rtr.delta_bar": "1"},
                {"grad_tol": "-1"}, {"rtr.tcg_max_iters": "0"}):
        with pytest.raises(ValueError):
            SolverConfig.from_mapping(bad)


def test_rcg_first_step_equals_rgd(problem):
    obj, x0 = problem
    cfg = SolverConfig(max_iters=1)
    a, _ = rgd_solve(x0, obj, cfg)
    b, _ = rcg_solve(x0, obj, cfg)
    np.testing.assert_allclose(tg.phi(a), tg.phi(b), atol=1e-14)


def test_conjugate_direction_clamp():
    x = tg.random_point((4, 3, 3), (2, 2, 2), 0)
    man = DesingManifold()
    g_old = tg.random_tangent(x, 1)
    eta = -g_old
    # Choose g_new with <g_new - g_old, g_new> < 0 and a nonzero denominator: beta clamps to zero.
    g_new = 0.5 * g_old
    d, beta, guarded = conjugate_direction(man, g_new, g_old, eta)
    assert beta == 0.0 and not guarded
    assert tg.tangent_norm(d + g_new) == 0.0
    g_new = 2.0 * g_old + tg.random_tangent(x, 2)
    d, beta, guarded = conjugate_direction(man, g_new, g_old, eta)
    y = g_new - g_old
    assert beta == pytest.approx(max(0.0, man.inner(y, g_new) / man.inner(y, eta)), rel=1e-14)
    assert tg.tangent_norm(d - (-g_new + beta * eta)) <= 1e-14 * tg.tangent_norm(d)
    d, beta, guarded = conjugate_direction(man, g_old, g_old, eta)
    assert guarded and beta == 0.0


@pytest.mark.parametrize("name", sorted(SOLVERS))
def test_solvers_decrease_full_observation_objective(problem, name):
    obj, x0 = problem
    _, tr = SOLVERS[name](x0, obj, SolverConfig(max_iters=25))
    vals = [r.train_error for r in tr.records if r.accepted]
    assert monotone(vals)
    assert vals[-1] < 1e-2 * vals[0]
    assert tr.termination in ("train_error", "rel_change", "grad_norm", "max_iters")


def test_zero_gradient_takes_no_steps():
    x0 = tg.random_point((4, 4, 3), (2, 2, 2), 5)
    obj = quadratic_objective(tg.phi(x0))
    for name in SOLVERS:
        x, tr = SOLVERS[name](x0, obj, SolverConfig(max_iters=10))
        assert len(tr) == 1 and tr.last.iter == 0
        assert tr.termination in ("train_error", "grad_norm")
        assert x is x0


def test_rtr_defaults(problem):
    obj, x0 = problem
    cfg = SolverConfig()
    assert cfg.rtr.rho_prime == 0.1 and cfg.rtr.delta_bar is None and cfg.rtr.delta0 is None
    _, tr = rtr_solve(x0, obj, SolverConfig(max_iters=0))
    dim = tg.manifold_dim(x0.dims, x0.ranks)
    assert tr[0].step == pytest.approx(math.sqrt(dim) / 16.0, rel=1e-15)


def test_rtr_converges_quadratically_near_solution():
    dims, ranks = (6, 5, 4), (2, 2, 2)
    truth = tg.random_point(dims, ranks, 21)
    obj = quadratic_objective(tg.phi(truth))
    x0 = tg.retract(truth, tg.random_tangent(truth, 3), 1e-2)
    _, tr = rtr_solve(x0, obj, SolverConfig(max_iters=30, train_tol=1e-28))
    assert tr.last.train_error <= 1e-20


def test_product_manifold_tangency():
    x = tg.random_point((5, 4, 3), (2, 2, 2), 0)
    man = TuckerProductManifold()
    g = man.grad(x, make_rng(1).standard_normal(x.dims))
    for u, v in zip(x.factors, g.factor_dots):
        s = u.T @ v
        np.testing.assert_allclose(s + s.T, 0.0, atol=1e-13)
    with pytest.raises(NotImplementedError):
        man.hess(x, g, None, None)


def test_trace_csv_round_trip(tmp_path, problem):
    obj, x0 = problem
    _, tr = rcg_solve(x0, obj, SolverConfig(max_iters=5))
    path = tmp_path / "trace.csv"
    tr.write_csv(path)
    rows = read_trace_csv(path)
    assert [int(r["iter"]) for r in rows] == tr.column("iter")
    np.testing.assert_array_equal([float(r["train_error"]) for r in rows], tr.column("train_error"))


def test_trace_rejects_non_increasing_iterations():
    tr = _trace([1.0])
    with pytest.raises(ValueError):
        tr.append(IterationRecord(iter=0, time_s=0.0, train_error=1.0, grad_norm=1.0))
