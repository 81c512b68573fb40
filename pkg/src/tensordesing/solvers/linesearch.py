"""Step-size rules."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateDirectionError

DEGENERATE_TOL = 1e-30


def exact_linesearch(xdot_sampled: np.ndarray, residual_sampled: np.ndarray) -> float:
    """Minimizer of ``s -> 1/2 ||s * P(Xdot) - P(A - X)||^2``.

    Parameters
    ----------
    xdot_sampled : array
        ``Xdot`` on the sample set.
    residual_sampled : array
        ``A - X`` on the sample set.
    """
    den = float(xdot_sampled @ xdot_sampled)
    if den < DEGENERATE_TOL:
        raise DegenerateDirectionError(f"||P(Xdot)||^2 = {den:.3e} is below {DEGENERATE_TOL:.0e}")
    return float(xdot_sampled @ residual_sampled) / den


def armijo_backtracking(phi0: float, slope: float, trial, s0: float = 1.0, c: float = 1e-4,
                        shrink: float = 0.5, max_halvings: int = 50) -> tuple[float, float]:
    """Backtracking on ``trial(s)`` until ``trial(s) <= phi0 + c s slope``.

    Returns ``(s, trial(s))``; ``s = 0`` if no step is accepted.
    """
    s = s0
    for _ in range(max_halvings):
        val = trial(s)
        if val <= phi0 + c * s * slope:
            return s, val
        s *= shrink
    return 0.0, phi0
