"""Termination rules shared by all solvers."""

from __future__ import annotations

from .config import SolverConfig
from .trace import IterationTrace

TRAIN_ERROR = "train_error"
REL_CHANGE = "rel_change"
GRAD_NORM = "grad_norm"
MAX_ITERS = "max_iters"
TIME_BUDGET = "time_budget"
DEGENERATE = "degenerate_direction"
NUMERICAL = "numerical_failure"


def stopping_check(trace: IterationTrace, cfg: SolverConfig, elapsed_s: float | None = None,
                   iters_done: int | None = None) -> str | None:
    """Return the identifier of the first triggered rule, or ``None``.

    Rules in order: training error below ``train_tol``; relative change of
    the training error between the last two accepted iterates below
    ``rel_change_tol``; gradient norm at most ``grad_tol``; iteration count
    reached; wall-clock budget exhausted.
    """
    if not trace.records:
        return None
    last = trace.last
    if last.train_error is not None and last.train_error < cfg.train_tol:
        return TRAIN_ERROR
    accepted = [r for r in trace.records if r.accepted]
    if len(accepted) >= 2 and last.accepted:
        prev, cur = accepted[-2].train_error, accepted[-1].train_error
        if prev is not None and cur is not None:
            if prev == cur or (prev > 0 and abs(cur - prev) / prev < cfg.rel_change_tol):
                return REL_CHANGE
    if last.grad_norm is not None and last.grad_norm <= cfg.grad_tol:
        return GRAD_NORM
    done = last.iter if iters_done is None else iters_done
    if done >= cfg.max_iters:
        return MAX_ITERS
    if elapsed_s is not None and elapsed_s >= cfg.time_budget_s:
        return TIME_BUDGET
    return None
