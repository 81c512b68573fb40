"""Seeded property suites behind ``tensordesing validate`` and the acceptance tests.

Each suite returns a list of :class:`PropertyResult` holding the worst
residual seen over its instances, the tolerance, and a verdict.  The dense
oracles here are only used at small dimensions.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import tt_geometry as tt
from . import tucker_geometry as tg
from .stationarity import (
    counterexample_construct,
    counterexample_cone_direction,
    first_order_residual,
    group_action_apply,
    second_order_quadform,
    tucker_param_grad,
    tucker_phi,
)
from .tensor_core import inner, make_rng, multi_mode_product, random_gaussian, spawn_seeds

GEOMETRY_TOLS = {
    "projection_idempotence": 1e-11,
    "metric_consistency": 1e-11,
    "retraction_base": 1e-13,
    "retraction_slope": 0.1,
    "gradient_fd": 1e-5,
    "hessian_symmetry": 1e-9,
    "hessian_fd": 1e-4,
}


@dataclass
class PropertyResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _result(name: str, value: float, tol: float, detail: str = "", ge: bool = False) -> PropertyResult:
    ok = (value >= tol) if ge else (value <= tol)
    return PropertyResult(name, float(value), float(tol), bool(ok and math.isfinite(value)), detail)


def _random_sym(n: int, rng) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


def _embedding_vector(pair) -> np.ndarray:
    x, ps = pair
    return np.concatenate([np.ravel(x)] + [np.ravel(p) for p in ps])


def _ambient_inner(a, b) -> float:
    return inner(a[0], b[0]) + sum(inner(p, q) for p, q in zip(a[1], b[1]))


class _MaskedLS:
    """``f(X) = 1/2 ||M * (X - T)||^2`` with a random 0/1 mask."""

    def __init__(self, dims, rng):
        self.mask = (rng.random(dims) < 0.6).astype(float)
        self.target = rng.standard_normal(dims)

    def value(self, x) -> float:
        r = self.mask * (x - self.target)
        return 0.5 * float(np.sum(r * r))

    def egrad(self, x):
        return self.mask * (x - self.target)

    def ehess(self, xdot):
        return self.mask * xdot


def _random_shape(rng, max_dim: int = 12):
    dims = tuple(int(v) for v in rng.integers(3, max_dim + 1, size=3))
    ranks = tuple(int(rng.integers(1, min(n - 1, 4) + 1)) for n in dims)
    return dims, ranks


def geometry_instance(seed) -> dict[str, float]:
    """All Tucker-geometry residuals for one seeded instance."""
    s_shape, s_point, s_xi, s_eta, s_amb, s_obj = spawn_seeds(seed, 6)
    dims, ranks = _random_shape(make_rng(s_shape))
    x = tg.random_point(dims, ranks, s_point)
    xi = tg.random_tangent(x, s_xi)
    eta = tg.random_tangent(x, s_eta)
    out: dict[str, float] = {}

    rng = make_rng(s_amb)
    amb = tg.AmbientVector(random_gaussian(dims, rng), [_random_sym(n, rng) for n in dims])
    p1 = tg.project_tangent(x, amb)
    p2 = tg.project_tangent(x, tg.AmbientVector(*tg.embed_tangent(p1)))
    out["projection_idempotence"] = tg.tangent_norm(p2 - p1) / max(tg.tangent_norm(p1), 1e-300)

    ambient = _ambient_inner(tg.embed_tangent(xi), tg.embed_tangent(eta))
    out["metric_consistency"] = abs(tg.tangent_inner(xi, eta) - ambient) / (tg.tangent_norm(xi) * tg.tangent_norm(eta))

    base = _embedding_vector(tg.embed(x))
    same = _embedding_vector(tg.embed(tg.retract(x, xi, 0.0)))
    out["retraction_base"] = float(np.linalg.norm(same - base) / np.linalg.norm(base))
    xi_vec = _embedding_vector(tg.embed_tangent(xi))
    steps = np.array([1e-2, 5e-3, 2e-3, 1e-3])
    errs = [np.linalg.norm(_embedding_vector(tg.embed(tg.retract(x, xi, t))) - base - t * xi_vec) for t in steps]
    out["retraction_slope"] = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])

    obj = _MaskedLS(dims, make_rng(s_obj))
    egrad = obj.egrad(tg.phi(x))
    grad = tg.riem_grad(x, egrad)
    h = 1e-6
    fd = (obj.value(tg.phi(tg.retract(x, xi, h))) - obj.value(tg.phi(tg.retract(x, xi, -h)))) / (2 * h)
    out["gradient_fd"] = abs(fd - tg.tangent_inner(grad, xi)) / (tg.tangent_norm(grad) * tg.tangent_norm(xi))

    h_xi = tg.hess_apply(x, xi, egrad, obj.ehess(tg.tangent_tensor(xi)))
    h_eta = tg.hess_apply(x, eta, egrad, obj.ehess(tg.tangent_tensor(eta)))
    sym_scale = tg.tangent_norm(h_xi) * tg.tangent_norm(eta) + tg.tangent_norm(xi) * tg.tangent_norm(h_eta)
    out["hessian_symmetry"] = abs(tg.tangent_inner(h_xi, eta) - tg.tangent_inner(xi, h_eta)) / sym_scale

    h = 1e-4
    plus = tg.embed_tangent(tg.riem_grad(y := tg.retract(x, xi, h), obj.egrad(tg.phi(y))))
    minus = tg.embed_tangent(tg.riem_grad(y := tg.retract(x, xi, -h), obj.egrad(tg.phi(y))))
    diff = tg.AmbientVector((plus[0] - minus[0]) / (2 * h), [(a - b) / (2 * h) for a, b in zip(plus[1], minus[1])])
    fd_h = tg.project_tangent(x, diff)
    out["hessian_fd"] = tg.tangent_norm(fd_h - h_xi) / tg.tangent_norm(h_xi)
    return out


def geometry_suite(seeds: Sequence[int] = range(50)) -> list[PropertyResult]:
    worst: dict[str, float] = {k: 0.0 for k in GEOMETRY_TOLS}
    slope_dev = 0.0
    slopes = []
    for seed in seeds:
        res = geometry_instance(seed)
        for key, val in res.items():
            if key == "retraction_slope":
                slopes.append(val)
                slope_dev = max(slope_dev, abs(val - 2.0))
            else:
                worst[key] = max(worst[key], val)
    out = [_result(k, worst[k], GEOMETRY_TOLS[k]) for k in GEOMETRY_TOLS if k != "retraction_slope"]
    out.insert(3, _result("retraction_slope", slope_dev, GEOMETRY_TOLS["retraction_slope"],
                          detail=f"slopes in [{min(slopes):.4f}, {max(slopes):.4f}], value is max |slope - 2|"))
    return out


# ---------------------------------------------------------------------------
# Counterexample
# ---------------------------------------------------------------------------

def _quadform_matrix(x, egrad, basis) -> np.ndarray:
    """Matrix of the symmetric Hessian form in ``basis``, by polarization."""
    n = len(basis)
    diag = [second_order_quadform(x, b, egrad, None) for b in basis]
    q = np.diag(diag)
    for i in range(n):
        for j in range(i + 1, n):
            q[i, j] = q[j, i] = 0.5 * (second_order_quadform(x, basis[i] + basis[j], egrad, None)
                                       - diag[i] - diag[j])
    return q


def counterexample_instance(seed, dims=(4, 4, 4), r=(2, 2, 2), r_under=(1, 1, 1), n_dirs: int = 1000,
                            n_direct: int = 5) -> dict:
    """Residuals at the counterexample point.

    Random unit tangents are drawn uniformly on the metric unit sphere via
    a metric-orthonormalized tangent basis, and the quadratic form is
    evaluated through its matrix in that basis.  The first ``n_direct``
    directions are also evaluated directly as a cross-check.
    """
    ce = counterexample_construct(dims, r, r_under, seed)
    x, egrad = ce.point, ce.egrad
    grad_residual = first_order_residual(x, egrad) / ce.egrad_norm
    basis = tg.tangent_basis(x)
    chol = np.linalg.cholesky(tg.gram_matrix(basis))
    q = _quadform_matrix(x, egrad, basis)
    z = make_rng(spawn_seeds(seed, 2)[1]).standard_normal((n_dirs, len(basis)))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    coeffs = np.linalg.solve(chol.T, z.T).T
    quads = np.einsum("ni,ij,nj->n", coeffs, q, coeffs)
    direct = 0.0
    for c, val in zip(coeffs[:n_direct], quads[:n_direct]):
        xi = tg.combine(basis, c)
        direct = max(direct, abs(second_order_quadform(x, xi, egrad, None) - val), abs(tg.tangent_norm(xi) - 1.0))
    cone = counterexample_cone_direction(ce)
    value = inner(egrad, cone.dense())
    expected = -math.prod(float(np.linalg.norm(v)) ** 2 for v in ce.vectors)
    return {"grad_residual": grad_residual, "min_quadform": float(quads.min()),
            "quadform_cross_check": direct, "cone_descent": value, "cone_expected": expected,
            "cone_rel_error": abs(value - expected) / abs(expected)}


def counterexample_suite(seeds: Sequence[int] = range(20), n_dirs: int = 1000) -> list[PropertyResult]:
    res = [counterexample_instance(s, n_dirs=n_dirs) for s in seeds]
    return [
        _result("grad_residual", max(r["grad_residual"] for r in res), 1e-12, "relative to ||egrad||"),
        _result("min_quadform", min(r["min_quadform"] for r in res), -1e-10, f"{n_dirs} unit tangents", ge=True),
        _result("quadform_cross_check", max(r["quadform_cross_check"] for r in res), 1e-12,
                "matrix route vs direct evaluation"),
        _result("cone_descent", max(r["cone_rel_error"] for r in res), 1e-12,
                f"value {res[0]['cone_descent']:.6g} vs -prod||v_k||^2 = {res[0]['cone_expected']:.6g} (first seed)"),
    ]


# ---------------------------------------------------------------------------
# Group action of the Tucker parametrization
# ---------------------------------------------------------------------------

def _random_invertible(n: int, rng) -> np.ndarray:
    while True:
        a = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
        if np.linalg.cond(a) < 1e3:
            return a


def _random_orthogonal(n: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


def group_action_instance(seed) -> dict[str, float]:
    s_shape, s_pt, s_obj, s_r, s_dir = spawn_seeds(seed, 5)
    dims, ranks = _random_shape(make_rng(s_shape), max_dim=8)
    rng = make_rng(s_pt)
    core = rng.standard_normal(ranks)
    factors = [rng.standard_normal((n, r)) for n, r in zip(dims, ranks)]
    obj = _MaskedLS(dims, make_rng(s_obj))
    rr = make_rng(s_r)
    rs = [_random_invertible(r, rr) for r in ranks]
    qs = [_random_orthogonal(r, rr) for r in ranks]

    def grads(c, fs):
        return tucker_param_grad(c, fs, obj.egrad(tucker_phi(c, fs)))

    g0, u0 = grads(core, factors)
    out = {}
    core_r, fac_r = group_action_apply(core, factors, rs)
    g1, u1 = grads(core_r, fac_r)
    out["phi_invariance"] = _rel(tucker_phi(core_r, fac_r), tucker_phi(core, factors))
    out["partial_core"] = _rel(g1, multi_mode_product(g0, [r.T for r in rs]))
    out["partial_factor"] = max(_rel(a, b @ np.linalg.inv(r).T) for a, b, r in zip(u1, u0, rs))
    # with orthogonal R_k the inverse transpose is R_k itself
    core_q, fac_q = group_action_apply(core, factors, qs)
    _, uq = grads(core_q, fac_q)
    out["partial_factor_orthogonal"] = max(_rel(a, b @ q) for a, b, q in zip(uq, u0, qs))

    rd = make_rng(s_dir)
    core_dot = rd.standard_normal(ranks)
    dots = [rd.standard_normal((n, r)) for n, r in zip(dims, ranks)]
    core_dot_r, _ = group_action_apply(core_dot, [np.zeros_like(u) for u in dots], rs)
    dots_r = [u @ r for u, r in zip(dots, rs)]

    def quad_fd(c, fs, cd, ds, h=1e-4):
        def g(t):
            return obj.value(tucker_phi(c + t * cd, [u + t * v for u, v in zip(fs, ds)]))
        return (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h)

    q0 = quad_fd(core, factors, core_dot, dots)
    q1 = quad_fd(core_r, fac_r, core_dot_r, dots_r)
    out["quadform_invariance"] = abs(q1 - q0) / abs(q0)
    return out


GROUP_TOLS = {"phi_invariance": 1e-11, "partial_core": 1e-11, "partial_factor": 1e-11,
              "partial_factor_orthogonal": 1e-11, "quadform_invariance": 1e-6}


def group_action_suite(seeds: Sequence[int] = range(20)) -> list[PropertyResult]:
    res = [group_action_instance(s) for s in seeds]
    return [_result(k, max(r[k] for r in res), tol) for k, tol in GROUP_TOLS.items()]


# ---------------------------------------------------------------------------
# Tensor train
# ---------------------------------------------------------------------------

def _random_tt_shape(rng):
    d = int(rng.integers(3, 5))
    dims = tuple(int(v) for v in rng.integers(2, 5, size=d))
    ranks = []
    for k in range(1, d):
        left = math.prod(dims[:k])
        right = math.prod(dims[k:])
        ranks.append(int(rng.integers(1, min(left, right, 3) + 1)))
    # keep r_k <= r_{k-1} n_k and r_{k-1} <= n_k r_k so the generic TT has these exact ranks
    full = [1] + ranks + [1]
    for k in range(1, d):
        full[k] = min(full[k], full[k - 1] * dims[k - 1])
    for k in range(d - 1, 0, -1):
        full[k] = min(full[k], full[k + 1] * dims[k])
    return dims, tuple(full[1:-1])


def tt_instance(seed) -> dict[str, float]:
    s_shape, s_tt, s_a = spawn_seeds(seed, 3)
    dims, ranks = _random_tt_shape(make_rng(s_shape))
    t = tt.random_tt(dims, ranks, s_tt)
    x = tt.tt_eval(t)
    xn = np.linalg.norm(x)
    out: dict[str, float] = {}

    rec = 0.0
    unf = 0.0
    for k in range(1, t.ndim + 1):
        prev = tt.interface_leq(t, k - 1)
        oracle = np.kron(np.eye(t.dims[k - 1]), prev) @ tt.left_unfold(t.cores[k - 1])
        rec = max(rec, _rel(tt.interface_leq(t, k), oracle))
    for k in range(t.ndim):
        nxt = tt.interface_geq(t, k + 1)
        oracle = np.kron(nxt, np.eye(t.dims[k])) @ tt.right_unfold(t.cores[k]).T
        rec = max(rec, _rel(tt.interface_geq(t, k), oracle))
    for k in range(1, t.ndim):
        unf = max(unf, np.linalg.norm(tt.unfolding(x, k) - tt.interface_leq(t, k) @ tt.interface_geq(t, k).T) / xn)
    out["interface_recursion"] = rec
    out["unfolding_identity"] = unf

    el = tt.psi(t)
    back = tt.psi_inverse(el.x, el.bases)
    el2 = tt.psi(back)
    rt = np.linalg.norm(el2.x - el.x) / xn
    for v, w in zip(el.bases, el2.bases):
        rt = max(rt, np.linalg.norm(v @ v.T - w @ w.T))
    out["psi_round_trip"] = rt
    out["right_orthogonality"] = max(
        np.linalg.norm(tt.right_unfold(u) @ tt.right_unfold(u).T - np.eye(u.shape[0])) for u in back.cores[1:])

    rng = make_rng(s_a)
    mats = [_random_invertible(r, rng) for r in t.ranks]
    moved = tt.group_action_tt(t, mats)
    found = tt.recover_group_element(moved, t)
    again = tt.group_action_tt(t, found)
    out["group_recovery"] = max(_rel(a, b) for a, b in zip(again.cores, moved.cores))
    out["group_psi_invariance"] = max(np.linalg.norm(v @ v.T - w @ w.T)
                                      for v, w in zip(tt.psi(moved).bases, el.bases))
    out["horizontal_dim_mismatch"] = float(abs(tt.horizontal_dimension(t)
                                               - tt.horizontal_dimension_formula(t.dims, t.ranks)))
    return out


TT_TOLS = {"interface_recursion": 1e-11, "unfolding_identity": 1e-11, "psi_round_trip": 1e-10,
           "right_orthogonality": 1e-10, "group_recovery": 1e-9, "group_psi_invariance": 1e-10,
           "horizontal_dim_mismatch": 0.0}


def tt_suite(seeds: Sequence[int] = range(10)) -> list[PropertyResult]:
    res = [tt_instance(s) for s in seeds]
    return [_result(k, max(r[k] for r in res), tol) for k, tol in TT_TOLS.items()]


# ---------------------------------------------------------------------------

SUITES = {
    "tucker_geometry": lambda: geometry_suite(range(50)),
    "counterexample": lambda: counterexample_suite(range(20)),
    "group_action": lambda: group_action_suite(range(20)),
    "tt_geometry": lambda: tt_suite(range(10)),
}


def run_all(names: Sequence[str] | None = None) -> dict:
    """Run the named suites (all by default) and return a JSON-ready report."""
    report = {}
    for name in names or SUITES:
        t0 = time.perf_counter()
        results = SUITES[name]()
        report[name] = {"seconds": time.perf_counter() - t0,
                        "passed": all(r.passed for r in results),
                        "properties": [r.as_dict() for r in results]}
    return report
