"""Search-space adapters used by the generic solver loops.

:class:`DesingManifold` wraps the desingularization geometry.
:class:`TuckerProductManifold` is the comparison space: a Euclidean core times
Stiefel factors with the product Euclidean metric, reusing the parameter
containers of the desingularization code.
"""

from __future__ import annotations

import numpy as np

from .. import tucker_geometry as tg
from ..errors import BasePointError
from ..stationarity import tucker_param_grad
from ..tensor_core import thin_qr


class DesingManifold:
    name = "desing"

    def grad(self, x, egrad):
        return tg.riem_grad(x, egrad)

    def inner(self, xi, eta) -> float:
        return tg.tangent_inner(xi, eta)

    def norm(self, xi) -> float:
        return tg.tangent_norm(xi)

    def retract(self, x, eta, s: float = 1.0):
        return tg.retract(x, eta, s)

    def transport(self, y, xi):
        return tg.transport(y, xi)

    def hess(self, x, xi, egrad, ehess):
        return tg.hess_apply(x, xi, egrad, ehess)

    def dim(self, x) -> int:
        return tg.manifold_dim(x.dims, x.ranks)

    def zero(self, x):
        return tg.zero_tangent(x)


def _stiefel_proj(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    utv = u.T @ v
    return v - u @ (0.5 * (utv + utv.T))


class TuckerProductManifold:
    """``R^{r_0 x ... x r_{d-1}} x St(r_0, n_0) x ... x St(r_{d-1}, n_{d-1})``."""

    name = "tucker"

    def grad(self, x, egrad):
        d_core, d_factors = tucker_param_grad(x.core, x.factors, egrad)
        return tg.TuckerTangent(d_core, [_stiefel_proj(u, v) for u, v in zip(x.factors, d_factors)], x)

    def inner(self, xi, eta) -> float:
        if xi.base is not eta.base:
            raise BasePointError("tangent vectors live at different base points")
        return float(np.vdot(xi.core_dot, eta.core_dot)
                     + sum(np.vdot(a, b) for a, b in zip(xi.factor_dots, eta.factor_dots)))

    def norm(self, xi) -> float:
        return float(np.sqrt(max(self.inner(xi, xi), 0.0)))

    def retract(self, x, eta, s: float = 1.0):
        factors = [thin_qr(u + s * v)[0] for u, v in zip(x.factors, eta.factor_dots)]
        return tg.TuckerPoint(x.core + s * eta.core_dot, factors)

    def transport(self, y, xi):
        return tg.TuckerTangent(xi.core_dot, [_stiefel_proj(u, v) for u, v in zip(y.factors, xi.factor_dots)], y)

    def hess(self, x, xi, egrad, ehess):
        raise NotImplementedError("the comparison space is used with first-order solvers only")

    def dim(self, x) -> int:
        r = x.ranks
        return int(np.prod(r)) + sum(n * k - k * (k + 1) // 2 for n, k in zip(x.dims, r))

    def zero(self, x):
        return tg.zero_tangent(x)
