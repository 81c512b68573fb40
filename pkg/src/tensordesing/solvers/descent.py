"""Riemannian gradient descent and nonlinear conjugate gradients."""

from __future__ import annotations

import logging
import time

import numpy as np

from ..errors import DegenerateDirectionError
from .config import SolverConfig
from .linesearch import DEGENERATE_TOL, armijo_backtracking
from .manifolds import DesingManifold, TuckerProductManifold
from .objective import has_method
from .stopping import DEGENERATE, stopping_check
from .trace import IterationRecord, IterationTrace

log = logging.getLogger(__name__)

MAX_SAFEGUARD_HALVINGS = 30


def _record(obj, x, it, t0, value, grad_norm, step=None, rho=None, accepted=True) -> IterationRecord:
    if has_method(obj, "metrics"):
        m = obj.metrics(x)
    else:
        m = {"train_error": value}
    return IterationRecord(iter=it, time_s=time.perf_counter() - t0, train_error=m.get("train_error", value),
                           grad_norm=grad_norm, test_error=m.get("test_error"), step=step, rho=rho,
                           sv_error=m.get("sv_error"), accepted=accepted)


def _step_size(manifold, obj, x, eta, slope, fx):
    """Exact step if the objective provides one, otherwise Armijo backtracking."""
    if has_method(obj, "exact_step"):
        return obj.exact_step(x, eta), None
    s, val = armijo_backtracking(fx, slope, lambda s: obj.value(manifold.retract(x, eta, s)))
    return s, val


def conjugate_direction(manifold, grad_new, t_grad, t_eta):
    """Direction ``-g+ + beta T(eta)`` with the clamped Hestenes-Stiefel ``beta``.

    Returns ``(eta, beta, guarded)``; ``guarded`` is true when the denominator
    ``<g+ - T g, T eta>`` vanished and ``beta`` was reset to zero.
    """
    y = grad_new - t_grad
    den = manifold.inner(y, t_eta)
    if abs(den) < DEGENERATE_TOL:
        return -grad_new, 0.0, True
    beta = max(0.0, manifold.inner(y, grad_new) / den)
    return (-grad_new + beta * t_eta if beta > 0 else -grad_new), beta, False


def _descent(x0, obj, cfg: SolverConfig, manifold, conjugate: bool, trace: IterationTrace | None = None):
    cfg.validate()
    t0 = time.perf_counter()
    trace = IterationTrace() if trace is None else trace
    x = x0
    fx = obj.value(x)
    grad = manifold.grad(x, obj.egrad(x))
    gnorm = manifold.norm(grad)
    trace.append(_record(obj, x, 0, t0, fx, gnorm))
    eta = -grad
    it = 0
    while True:
        rule = stopping_check(trace, cfg, time.perf_counter() - t0, it)
        if rule:
            trace.termination = rule
            break
        slope = manifold.inner(grad, eta)
        if slope >= 0:
            eta = -grad
            slope = -gnorm ** 2
            trace.event(it + 1, "restart")
        try:
            s, _ = _step_size(manifold, obj, x, eta, slope, fx)
        except DegenerateDirectionError:
            trace.termination = DEGENERATE
            break
        x_new = manifold.retract(x, eta, s)
        f_new = obj.value(x_new)
        halvings = 0
        while f_new > fx and halvings < MAX_SAFEGUARD_HALVINGS:
            s *= 0.5
            x_new = manifold.retract(x, eta, s)
            f_new = obj.value(x_new)
            halvings += 1
        if halvings:
            trace.event(it + 1, f"step_halved:{halvings}")
        if f_new > fx:
            x_new, f_new, s = x, fx, 0.0
        it += 1
        grad_new = manifold.grad(x_new, obj.egrad(x_new))
        gnorm_new = manifold.norm(grad_new)
        if conjugate:
            eta, _, guarded = conjugate_direction(manifold, grad_new, manifold.transport(x_new, grad),
                                                  manifold.transport(x_new, eta))
            if guarded:
                trace.event(it, "restart")
        else:
            eta = -grad_new
        x, fx, grad, gnorm = x_new, f_new, grad_new, gnorm_new
        trace.append(_record(obj, x, it, t0, fx, gnorm, step=s))
    log.debug("%s stopped after %d iterations: %s", "rcg" if conjugate else "rgd", it, trace.termination)
    return x, trace


def rgd_solve(x0, obj, cfg: SolverConfig | None = None, trace: IterationTrace | None = None):
    """Riemannian gradient descent on the desingularized manifold.

    Parameters
    ----------
    x0 : TuckerPoint
        Starting point.
    obj : objective
        Provides ``value`` and ``egrad``; ``exact_step`` if available is used
        as line search, otherwise Armijo backtracking on the retraction.
    cfg : SolverConfig

    Returns
    -------
    (TuckerPoint, IterationTrace)
    """
    return _descent(x0, obj, cfg or SolverConfig(), DesingManifold(), False, trace)


def rcg_solve(x0, obj, cfg: SolverConfig | None = None, trace: IterationTrace | None = None):
    """Riemannian conjugate gradients with the clamped Hestenes-Stiefel rule.

    ``beta = max(0, <g+ - T g, g+> / <g+ - T g, T eta>)`` where ``T`` is the
    projection transport; a vanishing denominator resets ``beta = 0`` and
    is recorded as a ``restart`` event, as is any non-descent direction.
    """
    return _descent(x0, obj, cfg or SolverConfig(), DesingManifold(), True, trace)


def baseline_tucker_rgd(x0, obj, cfg: SolverConfig | None = None, trace: IterationTrace | None = None):
    """Gradient descent over a Euclidean core and Stiefel factors."""
    return _descent(x0, obj, cfg or SolverConfig(), TuckerProductManifold(), False, trace)


def baseline_tucker_rcg(x0, obj, cfg: SolverConfig | None = None, trace: IterationTrace | None = None):
    """Conjugate gradients over a Euclidean core and Stiefel factors."""
    return _descent(x0, obj, cfg or SolverConfig(), TuckerProductManifold(), True, trace)


def monotone(values, slack: float = 1e-14) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= slack * np.maximum(1.0, np.abs(v[:-1]))))
