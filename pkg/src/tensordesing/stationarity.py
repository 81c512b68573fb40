"""Optimality analysis on the desingularized Tucker manifold.

First- and second-order stationarity tests, a family of rank-deficient
points that are second-order stationary for ``g = f o phi`` while ``phi(x)``
is not stationary on the variety, tangent-cone elements of the variety, and
the unconstrained Tucker parametrization with its ``GL(r)`` group action.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PreconditionError, RankError
from .tensor_core import (
    contract,
    mode_product,
    multi_mode_product,
    outer,
    random_gaussian,
    random_stiefel,
    spawn_seeds,
    unfold,
)
from .tucker_geometry import (
    TuckerPoint,
    TuckerTangent,
    embed,
    orth_complement,
    tangent_as_tucker,
    embed_tangent,
)

STATIONARY_TOL = 1e-9


def first_order_residual(x: TuckerPoint, egrad) -> float:
    """Largest of ``||egrad x_k U_k^T||`` (all modes) and ``||(egrad)_(k) V_k G_(k)^T||``.

    Zero exactly when the Riemannian gradient vanishes.
    """
    u = x.factors
    res = float(np.linalg.norm(contract(egrad, u)))
    for k in range(x.ndim):
        zk = unfold(contract(egrad, u, skip=k), k) @ x.core_unfoldings[k].T
        res = max(res, float(np.linalg.norm(zk)))
    return res


def _handle_inner(a, core: np.ndarray, factors: Sequence[np.ndarray]) -> float:
    """``<a, core x_k factors[k]>`` for any tensor handle ``a``."""
    return float(np.vdot(contract(a, factors), core))


def second_order_quadform(x: TuckerPoint, xi: TuckerTangent, egrad, ehess,
                          tol: float = STATIONARY_TOL) -> float:
    """Hessian quadratic form at a first-order stationary point.

        <ehess, Xdot> + sum_k sum_{j != k} <egrad, G x_k Udot_k x_j Udot_j x_{l not in {j,k}} U_l>

    Raises
    ------
    PreconditionError
        If ``first_order_residual(x, egrad) > tol``; away from stationary
        points this expression is not the Hessian form.
    """
    res = first_order_residual(x, egrad)
    if res > tol:
        raise PreconditionError(f"base point is not stationary (residual {res:.3e} > {tol:.1e})")
    val = 0.0
    if ehess is not None:
        xd = tangent_as_tucker(xi)
        val += _handle_inner(ehess, xd.core, xd.factors)
    d = x.ndim
    for k in range(d):
        for j in range(d):
            if j == k:
                continue
            mats = list(x.factors)
            mats[k] = xi.factor_dots[k]
            mats[j] = xi.factor_dots[j]
            val += _handle_inner(egrad, x.core, mats)
    return val


# ---------------------------------------------------------------------------
# Counterexample and tangent cone
# ---------------------------------------------------------------------------

@dataclass
class TangentConeElement:
    """Parameters ``(C, U_{k,1}, R_{k,2}, U_{k,2})`` of a tangent-cone element at a thin Tucker tensor."""

    C: np.ndarray
    U1_blocks: list
    R2_blocks: list
    U2_blocks: list
    base_thin: tuple  # (core, factors) with orthonormal factors

    def dense(self) -> np.ndarray:
        return cone_element(self.base_thin, self.C, self.U1_blocks, self.R2_blocks, self.U2_blocks)


@dataclass
class Counterexample:
    """A point with its linear objective ``f(X) = <X, v_0 o ... o v_{d-1}>``."""

    point: TuckerPoint
    vectors: list
    thin_core: np.ndarray
    thin_factors: list

    @property
    def egrad(self) -> np.ndarray:
        return outer(*self.vectors)

    @property
    def egrad_norm(self) -> float:
        return float(np.prod([np.linalg.norm(v) for v in self.vectors]))


def _unit_perp(basis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(basis.shape[0])
    v -= basis @ (basis.T @ v)
    return v


def counterexample_construct(dims: Sequence[int], r: Sequence[int], r_under: Sequence[int],
                             seed=None) -> Counterexample:
    """Rank-deficient second-order stationary point of a linear objective.

    The core has Tucker rank ``r_under``: ``G = Gu x_k W_k`` with orthonormal
    ``W_k``.  Each ``v_k`` is orthogonal to ``span(U_k)`` when ``r_k < n_k`` and
    to ``span(U_k W_k)`` otherwise.  Then ``x`` is stationary with vanishing
    Hessian form although ``grad f = v_0 o ... o v_{d-1}`` is nonzero.

    Requires ``d >= 3``: for matrices the mixed second-order terms do not
    vanish and the construction does not apply.
    """
    dims = tuple(int(n) for n in dims)
    r = tuple(int(v) for v in r)
    r_under = tuple(int(v) for v in r_under)
    d = len(dims)
    if not (len(r) == len(r_under) == d):
        raise RankError("dims, r and r_under must have equal length")
    if d < 3:
        raise RankError("the construction needs order d >= 3")
    if any(not (1 <= ru < rk <= n) for ru, rk, n in zip(r_under, r, dims)):
        raise RankError("need 1 <= r_under < r <= dims componentwise")
    if all(rk == n for rk, n in zip(r, dims)):
        raise RankError("need r_k < n_k for at least one mode")

    seeds = spawn_seeds(seed, 3 * d + 1)
    thin_core = random_gaussian(r_under, seeds[0])
    ws = [random_stiefel(rk, ru, seeds[1 + k]) for k, (rk, ru) in enumerate(zip(r, r_under))]
    us = [random_stiefel(n, rk, seeds[1 + d + k]) for k, (n, rk) in enumerate(zip(dims, r))]
    core = multi_mode_product(thin_core, ws)
    vectors = []
    for k in range(d):
        rng = np.random.default_rng(seeds[1 + 2 * d + k])
        basis = us[k] if r[k] < dims[k] else us[k] @ ws[k]
        vectors.append(_unit_perp(basis, rng))
    thin_factors = [u @ w for u, w in zip(us, ws)]
    return Counterexample(TuckerPoint(core, us), vectors, thin_core, thin_factors)


def _check_orthonormal(m: np.ndarray, what: str, tol: float = 1e-12) -> None:
    err = np.linalg.norm(m.T @ m - np.eye(m.shape[1])) if m.shape[1] else 0.0
    if err > tol * max(1.0, np.sqrt(m.shape[1])):
        raise ValueError(f"{what} columns are not orthonormal (error {err:.2e})")


def cone_element(base_thin, C: np.ndarray, U1_blocks, R2_blocks, U2_blocks) -> np.ndarray:
    """Dense tangent-cone element

        V = C x_k [Uu_k U_{k,1}] + sum_k Gu x_k (U_{k,2} R_{k,2}) x_{j != k} Uu_j

    at the thin Tucker tensor ``base_thin = (Gu, [Uu_k])``.
    """
    thin_core, thin_factors = base_thin
    d = len(thin_factors)
    blocks = []
    for k in range(d):
        full = np.hstack([thin_factors[k], U1_blocks[k], U2_blocks[k]])
        _check_orthonormal(full, f"mode-{k} block")
        blocks.append(np.hstack([thin_factors[k], U1_blocks[k]]))
        if blocks[-1].shape[1] != C.shape[k]:
            raise ValueError(f"C has size {C.shape[k]} in mode {k}, blocks give {blocks[-1].shape[1]}")
        if R2_blocks[k].shape != (U2_blocks[k].shape[1], thin_core.shape[k]):
            raise ValueError(f"R2 block {k} has shape {R2_blocks[k].shape}")
    out = multi_mode_product(C, blocks)
    for k in range(d):
        mats = list(thin_factors)
        mats[k] = U2_blocks[k] @ R2_blocks[k]
        out = out + multi_mode_product(thin_core, mats)
    return out


def counterexample_cone_direction(ce: Counterexample) -> TangentConeElement:
    """Cone element with ``<grad f, V> = -prod ||v_k||^2``.

    ``U_{k,1}`` starts with ``v_k / ||v_k||``; ``C`` is ``-prod ||v_k||`` at the
    coordinate of those columns and zero elsewhere; ``R_{k,2} = 0``.
    """
    r = ce.point.ranks
    d = len(r)
    u1s, u2s, r2s = [], [], []
    for k in range(d):
        uu = ce.thin_factors[k]
        v = ce.vectors[k] / np.linalg.norm(ce.vectors[k])
        rest = orth_complement(np.hstack([uu, v[:, None]]))
        n_extra = r[k] - uu.shape[1] - 1
        u1 = np.hstack([v[:, None], rest[:, :n_extra]])
        u1s.append(u1)
        u2 = orth_complement(np.hstack([uu, u1]))
        u2s.append(u2)
        r2s.append(np.zeros((u2.shape[1], uu.shape[1])))
    c = np.zeros(r)
    c[tuple(uu.shape[1] for uu in ce.thin_factors)] = -ce.egrad_norm
    return TangentConeElement(c, u1s, r2s, u2s, (ce.thin_core, ce.thin_factors))


# ---------------------------------------------------------------------------
# Tucker parametrization
# ---------------------------------------------------------------------------

def tucker_phi(core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    return multi_mode_product(core, factors)


def tucker_param_grad(core: np.ndarray, factors: Sequence[np.ndarray], egrad):
    """Euclidean gradient of ``(G, U_0, ...) -> f(G x_k U_k)`` with unconstrained factors.

    Returns ``(dG, [dU_k])`` with ``dG = egrad x_k U_k^T`` and
    ``dU_k = (egrad)_(k) V_k G_(k)^T``.
    """
    core = np.asarray(core, dtype=float)
    factors = [np.asarray(u, dtype=float) for u in factors]
    partial = [contract(egrad, factors, skip=k) for k in range(core.ndim)]
    d_core = mode_product(partial[0], 0, factors[0].T)
    d_factors = [unfold(p, k) @ unfold(core, k).T for k, p in enumerate(partial)]
    return d_core, d_factors


def group_action_apply(core: np.ndarray, factors: Sequence[np.ndarray], rs: Sequence[np.ndarray],
                       max_cond: float = 1e12):
    """``(G x_k R_k^{-1}, U_0 R_0, ..., U_{d-1} R_{d-1})``; leaves ``G x_k U_k`` unchanged."""
    invs = []
    for k, r in enumerate(rs):
        r = np.asarray(r, dtype=float)
        cond = np.linalg.cond(r)
        if not np.isfinite(cond) or cond > max_cond:
            raise RankError(f"group element R_{k} is singular (condition number {cond:.2e})")
        invs.append(np.linalg.inv(r))
    new_core = multi_mode_product(core, invs)
    return new_core, [np.asarray(u) @ np.asarray(r) for u, r in zip(factors, rs)]


# ---------------------------------------------------------------------------
# Per-mode matrix tangent predicate
# ---------------------------------------------------------------------------

def matrix_desing_tangent_check(x: TuckerPoint, xi, k: int, tol: float = 1e-10) -> bool:
    """Check the implicit per-mode tangency conditions obtained from ``X x_k P_k = 0``.

    ``xi`` is a :class:`TuckerTangent` or a dense :class:`AmbientVector`.  True
    iff ``Xdot x_k P_k + X x_k Pdot_k = 0``, ``Pdot_k`` is symmetric and
    ``Pdot_k P_k + P_k Pdot_k = Pdot_k``, each to ``tol`` relative to the
    size of the inputs.
    """
    if isinstance(xi, TuckerTangent):
        xdot, pdots = embed_tangent(xi)
    else:
        xdot = np.asarray(xi.tensor)
        pdots = [np.asarray(s) for s in xi.syms] if xi.syms is not None else \
            [np.zeros((n, n)) for n in x.dims]
    xt, projs = embed(x)
    p, pd = projs[k], pdots[k]
    scale = max(1.0, np.linalg.norm(xdot), np.linalg.norm(pd)) * max(1.0, np.linalg.norm(xt))
    r1 = np.linalg.norm(mode_product(xdot, k, p) + mode_product(xt, k, pd))
    r2 = np.linalg.norm(pd - pd.T)
    r3 = np.linalg.norm(pd @ p + p @ pd - pd)
    return bool(r1 <= tol * scale and r2 <= tol * scale and r3 <= tol * scale)
