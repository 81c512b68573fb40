"""Riemannian trust-region method with a truncated-CG inner solver."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from .config import SolverConfig
from .manifolds import DesingManifold
from .objective import has_method
from .stopping import stopping_check
from .trace import IterationRecord, IterationTrace

FD_HESS_STEP = 1e-6


@dataclass
class TCGResult:
    step: object
    hess_step: object
    iterations: int
    reason: str  # "zero_gradient", "negative_curvature", "boundary", "residual", "max_iters"

    @property
    def hit_boundary(self) -> bool:
        return self.reason in ("negative_curvature", "boundary")


def _boundary_tau(inner, eta, delta_dir, delta):
    """Positive ``tau`` with ``||eta + tau * delta_dir|| = delta``."""
    e_d = inner(eta, delta_dir)
    d_d = inner(delta_dir, delta_dir)
    e_e = inner(eta, eta)
    disc = max(e_d * e_d + d_d * (delta * delta - e_e), 0.0)
    return (-e_d + math.sqrt(disc)) / d_d


def tcg_subproblem(x, grad, hess_operator, delta: float, cfg: SolverConfig, manifold=None) -> TCGResult:
    """Steihaug-Toint truncated CG for ``min <g, eta> + 1/2 <eta, H eta>`` s.t. ``||eta|| <= delta``.

    Stops at the boundary (including on nonpositive curvature) or when
    ``||r|| <= ||r_0|| min(kappa, ||r_0||^theta)``.
    """
    manifold = manifold or DesingManifold()
    inner = manifold.inner
    rcfg = cfg.rtr
    eta = manifold.zero(x)
    h_eta = manifold.zero(x)
    r = grad
    rr = inner(r, r)
    r0 = math.sqrt(rr)
    if r0 == 0.0:
        return TCGResult(eta, h_eta, 0, "zero_gradient")
    target = r0 * min(rcfg.tcg_kappa, r0 ** rcfg.tcg_theta)
    direction = -r
    for j in range(1, rcfg.tcg_max_iters + 1):
        h_dir = hess_operator(direction)
        curv = inner(direction, h_dir)
        if curv <= 0:
            tau = _boundary_tau(inner, eta, direction, delta)
            return TCGResult(eta + tau * direction, h_eta + tau * h_dir, j, "negative_curvature")
        alpha = rr / curv
        trial = eta + alpha * direction
        if inner(trial, trial) >= delta * delta:
            tau = _boundary_tau(inner, eta, direction, delta)
            return TCGResult(eta + tau * direction, h_eta + tau * h_dir, j, "boundary")
        eta = trial
        h_eta = h_eta + alpha * h_dir
        r = r + alpha * h_dir
        rr_new = inner(r, r)
        if math.sqrt(rr_new) <= target:
            return TCGResult(eta, h_eta, j, "residual")
        direction = -r + (rr_new / rr) * direction
        rr = rr_new
    return TCGResult(eta, h_eta, rcfg.tcg_max_iters, "max_iters")


def update_radius(delta: float, rho: float, hit_boundary: bool, delta_bar: float) -> float:
    """Quarter on ``rho < 1/4``; double (capped) on ``rho > 3/4`` at the boundary; else keep."""
    if rho < 0.25:
        return delta / 4.0
    if rho > 0.75 and hit_boundary:
        return min(2.0 * delta, delta_bar)
    return delta


def model_decrease(grad, tcg: TCGResult, inner) -> float:
    """``m(0) - m(eta) = -<g, eta> - 1/2 <eta, H eta>``."""
    return -inner(grad, tcg.step) - 0.5 * inner(tcg.step, tcg.hess_step)


def _hess_operator(manifold, obj, x, egrad, grad):
    if has_method(obj, "ehess"):
        return lambda v: manifold.hess(x, v, egrad, obj.ehess(x, v))

    def fd(v):
        nv = manifold.norm(v)
        if nv == 0:
            return manifold.zero(x)
        h = FD_HESS_STEP / nv
        y = manifold.retract(x, v, h)
        g_y = manifold.transport(x, manifold.grad(y, obj.egrad(y)))
        return (1.0 / h) * (g_y - grad)

    return fd


def rtr_solve(x0, obj, cfg: SolverConfig | None = None, trace: IterationTrace | None = None):
    """Riemannian trust-region method on the desingularized manifold.

    The subproblem uses the exact Riemannian Hessian when the objective
    supplies ``ehess``, otherwise a finite difference of the gradient.  The
    step is retracted with unit step size.  Rejected steps are recorded
    with ``accepted=False``; a nonpositive model decrease with nonzero
    gradient is logged as a ``numerical_failure`` event and the radius is
    shrunk.

    Returns
    -------
    (TuckerPoint, IterationTrace)
    """
    cfg = (cfg or SolverConfig()).validate()
    rcfg = cfg.rtr
    manifold = DesingManifold()
    t0 = time.perf_counter()
    trace = IterationTrace() if trace is None else trace
    x = x0
    delta_bar = rcfg.delta_bar if rcfg.delta_bar is not None else math.sqrt(manifold.dim(x))
    delta = rcfg.delta0 if rcfg.delta0 is not None else delta_bar / 16.0
    fx = obj.value(x)
    egrad = obj.egrad(x)
    grad = manifold.grad(x, egrad)
    gnorm = manifold.norm(grad)
    trace.append(_rec(obj, x, 0, t0, fx, gnorm, delta, None, True))
    it = 0
    while True:
        rule = stopping_check(trace, cfg, time.perf_counter() - t0, it)
        if rule:
            trace.termination = rule
            break
        it += 1
        tcg = tcg_subproblem(x, grad, _hess_operator(manifold, obj, x, egrad, grad), delta, cfg, manifold)
        mdec = model_decrease(grad, tcg, manifold.inner)
        if not mdec > 0:
            trace.event(it, "numerical_failure")
            rho = -math.inf
            accepted = False
        else:
            x_cand = manifold.retract(x, tcg.step, 1.0)
            f_cand = obj.value(x_cand)
            rho = (fx - f_cand) / mdec
            accepted = rho >= rcfg.rho_prime
        used_delta = delta
        delta = update_radius(delta, rho, tcg.hit_boundary, delta_bar)
        if accepted:
            x, fx = x_cand, f_cand
            egrad = obj.egrad(x)
            grad = manifold.grad(x, egrad)
            gnorm = manifold.norm(grad)
        trace.append(_rec(obj, x, it, t0, fx, gnorm, used_delta, rho, accepted))
    return x, trace


def _rec(obj, x, it, t0, fx, gnorm, delta, rho, accepted):
    m = obj.metrics(x) if has_method(obj, "metrics") else {"train_error": fx}
    return IterationRecord(iter=it, time_s=time.perf_counter() - t0, train_error=m.get("train_error", fx),
                           grad_norm=gnorm, test_error=m.get("test_error"), step=delta,
                           rho=None if rho is None or not math.isfinite(rho) else rho,
                           sv_error=m.get("sv_error"), accepted=accepted)
