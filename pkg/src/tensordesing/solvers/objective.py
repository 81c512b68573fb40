"""Objective callback interface.

An objective supplies ``value(x)``, ``egrad(x)`` (any tensor handle accepted
by the geometry code) and optionally ``ehess(x, xi)``, ``exact_step(x, eta)``
and ``metrics(x)``.  :class:`~tensordesing.completion.CompletionObjective`
is the main implementation; :class:`DenseObjective` wraps functions of a
dense tensor for small problems and tests.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..tucker_geometry import TuckerPoint, TuckerTangent, phi, tangent_tensor


class DenseObjective:
    """Objective given by functions of the dense tensor ``X = phi(x)``.

    ``ehess_fn(X, Xdot)`` returns the Euclidean Hessian applied to ``Xdot``.
    If ``quadratic`` is true the objective is assumed quadratic in ``X``,
    which enables the exact step along ``Xdot``.
    """

    def __init__(self, value_fn: Callable, egrad_fn: Callable, ehess_fn: Callable | None = None,
                 quadratic: bool = False):
        self.value_fn = value_fn
        self.egrad_fn = egrad_fn
        self.ehess_fn = ehess_fn
        self.quadratic_in_step = bool(quadratic and ehess_fn is not None)
        self._cache: tuple[TuckerPoint, np.ndarray] | None = None

    def _dense(self, x: TuckerPoint) -> np.ndarray:
        if self._cache is None or self._cache[0] is not x:
            self._cache = (x, phi(x))
        return self._cache[1]

    def value(self, x: TuckerPoint) -> float:
        return float(self.value_fn(self._dense(x)))

    def egrad(self, x: TuckerPoint) -> np.ndarray:
        return self.egrad_fn(self._dense(x))

    def ehess(self, x: TuckerPoint, xi: TuckerTangent) -> np.ndarray:
        if self.ehess_fn is None:
            raise AttributeError("objective has no Hessian callback")
        return self.ehess_fn(self._dense(x), tangent_tensor(xi))

    def exact_step(self, x: TuckerPoint, eta: TuckerTangent) -> float:
        if not self.quadratic_in_step:
            raise AttributeError("exact step needs a quadratic objective")
        from ..errors import DegenerateDirectionError
        from .linesearch import DEGENERATE_TOL

        xd = tangent_tensor(eta)
        curv = float(np.vdot(xd, self.ehess_fn(self._dense(x), xd)))
        if curv < DEGENERATE_TOL:
            raise DegenerateDirectionError(f"curvature {curv:.3e} along the direction")
        return -float(np.vdot(xd, self.egrad(x))) / curv


def has_method(obj, name: str) -> bool:
    if name == "exact_step" and not getattr(obj, "quadratic_in_step", False):
        return False
    if name == "ehess" and isinstance(obj, DenseObjective) and obj.ehess_fn is None:
        return False
    return callable(getattr(obj, name, None))
