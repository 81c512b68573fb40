"""Geometry of the desingularized bounded-Tucker-rank set.

A point is a pair ``(X, P_0, ..., P_{d-1})`` where ``X`` has Tucker rank at most
``r`` and each ``P_k`` is an orthogonal projector of rank ``n_k - r_k`` with
``X x_k P_k = 0``.  We store it through parameters ``(G, U_0, ..., U_{d-1})``
with orthonormal ``U_k``:

    X = G x_0 U_0 ... x_{d-1} U_{d-1},        P_k = I - U_k U_k^T.

Tangent vectors are stored as ``(Gdot, Udot_0, ...)`` with ``U_k^T Udot_k = 0``;
they represent

    Xdot = Gdot x_k U_k + sum_k G x_k Udot_k x_{j != k} U_j,
    Pdot_k = -Udot_k U_k^T - U_k Udot_k^T.

The ambient space is ``R^{n_0 x ... x n_{d-1}} x Sym(n_0) x ... x Sym(n_{d-1})``
with the Frobenius inner product on each block.  Everything below works on
parameters only.  ``embed`` and ``embed_tangent`` build dense ambient objects
for testing and are meant for small dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import BasePointError, DimensionError, RankError
from .tensor_core import (
    TuckerTensor,
    contract,
    mode_product,
    multi_mode_product,
    random_gaussian,
    random_stiefel,
    spawn_seeds,
    thin_qr,
    unfold,
)

ORTHO_TOL = 1e-12


class TuckerPoint:
    """Point of the desingularized manifold, stored as ``(core, factors)``.

    Use :func:`make_point` to build one from arbitrary factors.  The
    constructor trusts that the factors are orthonormal.
    """

    def __init__(self, core: np.ndarray, factors: Sequence[np.ndarray]):
        core = np.asarray(core, dtype=float)
        factors = tuple(np.asarray(u, dtype=float) for u in factors)
        if core.ndim != len(factors):
            raise DimensionError(f"core has order {core.ndim} but {len(factors)} factors were given")
        for k, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != core.shape[k]:
                raise DimensionError(f"factor {k} of shape {u.shape} does not match core size {core.shape[k]}")
            if u.shape[1] > u.shape[0]:
                raise RankError(f"rank r_{k}={u.shape[1]} exceeds n_{k}={u.shape[0]}")
        self.core = core
        self.factors = factors

    @property
    def ndim(self) -> int:
        return self.core.ndim

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    @cached_property
    def core_unfoldings(self) -> tuple[np.ndarray, ...]:
        return tuple(unfold(self.core, k) for k in range(self.ndim))

    @cached_property
    def metric_factors(self):
        """Cholesky factors of ``F_k = 2 I + G_(k) G_(k)^T``."""
        out = []
        for gk in self.core_unfoldings:
            f = 2.0 * np.eye(gk.shape[0]) + gk @ gk.T
            out.append(cho_factor(f, lower=True))
        return tuple(out)

    def metric_matrix(self, k: int) -> np.ndarray:
        gk = self.core_unfoldings[k]
        return 2.0 * np.eye(gk.shape[0]) + gk @ gk.T

    def solve_metric(self, m: np.ndarray, k: int) -> np.ndarray:
        """``m F_k^{-1}`` for an ``(n_k, r_k)`` matrix ``m``."""
        return cho_solve(self.metric_factors[k], m.T).T

    def orthogonality_error(self) -> float:
        return max(float(np.linalg.norm(u.T @ u - np.eye(u.shape[1]))) for u in self.factors)

    def __repr__(self) -> str:
        return f"TuckerPoint(dims={self.dims}, ranks={self.ranks})"


class TuckerTangent:
    """Tangent vector ``(core_dot, factor_dots)`` attached to ``base``.

    Supports addition, subtraction and scalar multiplication.  Combining
    tangents at different base points raises :class:`BasePointError`.
    """

    __slots__ = ("core_dot", "factor_dots", "base")

    def __init__(self, core_dot: np.ndarray, factor_dots: Sequence[np.ndarray], base: TuckerPoint):
        self.core_dot = np.asarray(core_dot, dtype=float)
        self.factor_dots = tuple(np.asarray(v, dtype=float) for v in factor_dots)
        self.base = base
        if self.core_dot.shape != base.ranks:
            raise DimensionError(f"core_dot shape {self.core_dot.shape} does not match ranks {base.ranks}")
        for k, (v, u) in enumerate(zip(self.factor_dots, base.factors)):
            if v.shape != u.shape:
                raise DimensionError(f"factor_dot {k} shape {v.shape} does not match {u.shape}")

    def _check(self, other: "TuckerTangent") -> None:
        if other.base is not self.base:
            raise BasePointError("tangent vectors live at different base points")

    def __add__(self, other: "TuckerTangent") -> "TuckerTangent":
        self._check(other)
        return TuckerTangent(self.core_dot + other.core_dot,
                             [a + b for a, b in zip(self.factor_dots, other.factor_dots)], self.base)

    def __sub__(self, other: "TuckerTangent") -> "TuckerTangent":
        return self + (-1.0) * other

    def __mul__(self, s: float) -> "TuckerTangent":
        return TuckerTangent(s * self.core_dot, [s * v for v in self.factor_dots], self.base)

    __rmul__ = __mul__

    def __neg__(self) -> "TuckerTangent":
        return self * -1.0

    def orthogonality_error(self) -> float:
        return max(float(np.linalg.norm(u.T @ v)) for u, v in zip(self.base.factors, self.factor_dots))

    def to_vector(self) -> np.ndarray:
        """Parameters stacked into one vector (Euclidean coordinates)."""
        return np.concatenate([self.core_dot.ravel(order="F")] + [v.ravel(order="F") for v in self.factor_dots])


class SymLowRank:
    """Symmetric matrix ``a b^T + b a^T`` kept in factored form."""

    __slots__ = ("a", "b")

    def __init__(self, a: np.ndarray, b: np.ndarray):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def __matmul__(self, m: np.ndarray) -> np.ndarray:
        return self.a @ (self.b.T @ m) + self.b @ (self.a.T @ m)

    def to_dense(self) -> np.ndarray:
        ab = self.a @ self.b.T
        return ab + ab.T


@dataclass
class AmbientVector:
    """Element ``(A, A_0, ..., A_{d-1})`` of the ambient space.

    ``tensor`` may be a dense array, a :class:`~tensordesing.tensor_core.SparseTensor`
    or a :class:`~tensordesing.tensor_core.TuckerTensor`.  ``syms`` holds the
    symmetric blocks as dense arrays or :class:`SymLowRank`; ``None`` means all
    zero.
    """

    tensor: object
    syms: list | None = field(default=None)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def make_point(core: np.ndarray, factors: Sequence[np.ndarray]) -> TuckerPoint:
    """Orthonormalize ``factors`` by thin QR and absorb the ``R`` factors into the core."""
    core = np.asarray(core, dtype=float)
    qs, rs = [], []
    for k, u in enumerate(factors):
        u = np.asarray(u, dtype=float)
        if u.shape[1] > u.shape[0]:
            raise RankError(f"rank r_{k}={u.shape[1]} exceeds n_{k}={u.shape[0]}")
        q, r = thin_qr(u)
        qs.append(q)
        rs.append(r)
    return TuckerPoint(multi_mode_product(core, rs), qs)


def random_point(dims: Sequence[int], ranks: Sequence[int], seed=None) -> TuckerPoint:
    """Gaussian core and random orthonormal factors.

    The seed is split into ``d + 1`` streams: stream 0 draws the core and
    stream ``k + 1`` draws factor ``k``.
    """
    dims = tuple(int(n) for n in dims)
    ranks = tuple(int(r) for r in ranks)
    if len(dims) != len(ranks):
        raise DimensionError("dims and ranks differ in length")
    for k, (n, r) in enumerate(zip(dims, ranks)):
        if not 1 <= r <= n:
            raise RankError(f"need 1 <= r_{k} <= n_{k}, got r={r}, n={n}")
    seeds = spawn_seeds(seed, len(dims) + 1)
    core = random_gaussian(ranks, seeds[0])
    factors = [random_stiefel(n, r, s) for n, r, s in zip(dims, ranks, seeds[1:])]
    return TuckerPoint(core, factors)


def zero_tangent(x: TuckerPoint) -> TuckerTangent:
    return TuckerTangent(np.zeros(x.ranks), [np.zeros_like(u) for u in x.factors], x)


def random_tangent(x: TuckerPoint, seed=None) -> TuckerTangent:
    """Gaussian tangent: Gaussian parameters with the factor parts projected onto ``P_k``."""
    seeds = spawn_seeds(seed, x.ndim + 1)
    core_dot = random_gaussian(x.ranks, seeds[0])
    dots = []
    for u, s in zip(x.factors, seeds[1:]):
        v = random_gaussian(u.shape, s)
        dots.append(v - u @ (u.T @ v))
    return TuckerTangent(core_dot, dots, x)


def manifold_dim(dims: Sequence[int], ranks: Sequence[int]) -> int:
    """``prod r_k + sum r_k (n_k - r_k)``."""
    return int(np.prod(ranks, dtype=np.int64)) + sum(int(r) * (int(n) - int(r)) for n, r in zip(dims, ranks))


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

def phi(x: TuckerPoint) -> np.ndarray:
    """Dense tensor ``G x_k U_k``."""
    return multi_mode_product(x.core, x.factors)


def phi_handle(x: TuckerPoint) -> TuckerTensor:
    return TuckerTensor(x.core, x.factors)


def embed(x: TuckerPoint) -> tuple[np.ndarray, list[np.ndarray]]:
    """Dense ``(X, [P_k])``; small dimensions only."""
    projs = [np.eye(u.shape[0]) - u @ u.T for u in x.factors]
    return phi(x), projs


def tangent_as_tucker(xi: TuckerTangent, scale: float = 1.0) -> TuckerTensor:
    """``Xdot`` as a Tucker tensor with a doubled core over factors ``[U_k, scale*Udot_k]``.

    The core block with every index in the first half holds ``scale * Gdot``
    and the block with only mode ``k`` in the second half holds ``G``, so the
    tensor represented is ``scale * Xdot``.
    """
    x = xi.base
    r = x.ranks
    core2 = np.zeros(tuple(2 * rk for rk in r))
    core2[tuple(slice(0, rk) for rk in r)] = scale * xi.core_dot
    for k in range(x.ndim):
        sl = tuple(slice(rk, 2 * rk) if j == k else slice(0, rk) for j, rk in enumerate(r))
        core2[sl] = x.core
    factors = [np.hstack([u, scale * v]) for u, v in zip(x.factors, xi.factor_dots)]
    return TuckerTensor(core2, factors)


def tangent_tensor(xi: TuckerTangent) -> np.ndarray:
    """Dense ``Xdot``."""
    x = xi.base
    out = multi_mode_product(xi.core_dot, x.factors)
    for k in range(x.ndim):
        mats = list(x.factors)
        mats[k] = xi.factor_dots[k]
        out = out + multi_mode_product(x.core, mats)
    return out


def tangent_syms(xi: TuckerTangent) -> list[SymLowRank]:
    """``Pdot_k = -Udot_k U_k^T - U_k Udot_k^T`` in factored form."""
    return [SymLowRank(-v, u) for u, v in zip(xi.base.factors, xi.factor_dots)]


def embed_tangent(xi: TuckerTangent) -> tuple[np.ndarray, list[np.ndarray]]:
    """Dense ``(Xdot, [Pdot_k])``; small dimensions only."""
    return tangent_tensor(xi), [s.to_dense() for s in tangent_syms(xi)]


def tangent_ambient(xi: TuckerTangent) -> AmbientVector:
    """Structured ambient representation of a tangent, no dense arrays."""
    return AmbientVector(tangent_as_tucker(xi), tangent_syms(xi))


# ---------------------------------------------------------------------------
# Metric and projection
# ---------------------------------------------------------------------------

def tangent_inner(xi: TuckerTangent, eta: TuckerTangent) -> float:
    """``<Gdot, Gdot'> + sum_k <Udot_k, Udot'_k (2 I + G_(k) G_(k)^T)>``."""
    if xi.base is not eta.base:
        raise BasePointError("tangent vectors live at different base points")
    x = xi.base
    val = float(np.vdot(xi.core_dot, eta.core_dot))
    for k, gk in enumerate(x.core_unfoldings):
        a, b = xi.factor_dots[k], eta.factor_dots[k]
        ab = a.T @ b
        val += 2.0 * np.trace(ab) + float(np.vdot(gk, ab @ gk))
    return val


def tangent_norm(xi: TuckerTangent) -> float:
    return float(np.sqrt(max(tangent_inner(xi, xi), 0.0)))


def _sym_times(s, u: np.ndarray) -> np.ndarray:
    if isinstance(s, SymLowRank):
        return s @ u
    s = np.asarray(s)
    return 0.5 * (s @ u + s.T @ u)


def _perp(u: np.ndarray, m: np.ndarray) -> np.ndarray:
    return m - u @ (u.T @ m)


def project_tangent(x: TuckerPoint, v) -> TuckerTangent:
    """Orthogonal projection of an ambient vector onto the tangent space at ``x``.

    ``v`` is an :class:`AmbientVector` or a bare tensor handle (symmetric
    blocks taken as zero).
    """
    if not isinstance(v, AmbientVector):
        v = AmbientVector(v)
    a = v.tensor
    u = x.factors
    partial = [contract(a, u, skip=k) for k in range(x.ndim)]
    core_dot = mode_product(partial[0], 0, u[0].T)
    dots = []
    for k in range(x.ndim):
        yk = unfold(partial[k], k)
        zk = yk @ x.core_unfoldings[k].T
        if v.syms is not None and v.syms[k] is not None:
            zk = zk - 2.0 * _sym_times(v.syms[k], u[k])
        dots.append(x.solve_metric(_perp(u[k], zk), k))
    return TuckerTangent(core_dot, dots, x)


def riem_grad(x: TuckerPoint, egrad) -> TuckerTangent:
    """Riemannian gradient from the Euclidean gradient ``egrad`` (dense, sparse or Tucker)."""
    return project_tangent(x, AmbientVector(egrad))


# ---------------------------------------------------------------------------
# Retraction and transport
# ---------------------------------------------------------------------------

def retract(x: TuckerPoint, xi: TuckerTangent, s: float = 1.0) -> TuckerPoint:
    """Retraction ``x + s xi`` followed by projection of ``X`` onto the new factor spans.

    New factors are the Q factors of ``U_k + s Udot_k``, which span the same
    space as the polar factor, so the retracted point is identical to the
    inverse-square-root formula.  The new core is ``(X + s Xdot) x_k Q_k^T``,
    assembled from the doubled-core representation of ``X + s Xdot``.
    """
    if xi.base is not x:
        raise BasePointError("tangent is not attached to this point")
    new_factors, left, right = [], [], []
    for u, v in zip(x.factors, xi.factor_dots):
        sv = s * v
        q, _ = thin_qr(u + sv)
        new_factors.append(q)
        left.append(q.T @ u)
        right.append(q.T @ sv)
    core = multi_mode_product(x.core + s * xi.core_dot, left)
    for k in range(x.ndim):
        mats = list(left)
        mats[k] = right[k]
        core = core + multi_mode_product(x.core, mats)
    return TuckerPoint(core, new_factors)


def transport(x_new: TuckerPoint, xi: TuckerTangent) -> TuckerTangent:
    """Projection transport: ``project_tangent(x_new, embedding of xi)``."""
    return project_tangent(x_new, tangent_ambient(xi))


# ---------------------------------------------------------------------------
# Hessian
# ---------------------------------------------------------------------------

def hess_apply(x: TuckerPoint, xi: TuckerTangent, egrad, ehess) -> TuckerTangent:
    """Riemannian Hessian applied to ``xi``.

    Parameters
    ----------
    x : TuckerPoint
    xi : TuckerTangent
        Direction at ``x``.
    egrad : tensor handle
        Euclidean gradient ``grad f(X)``.
    ehess : tensor handle or None
        Euclidean Hessian applied to ``Xdot``; ``None`` for a linear ``f``.

    Returns
    -------
    TuckerTangent
        Sum of the curvature term (from ``egrad``) and the projected
        Euclidean Hessian term.

    Notes
    -----
    With ``A = egrad``, ``Y_k = (A x_{j != k} U_j^T)_(k)``, ``Z_k = Y_k G_(k)^T``,
    ``W_k = sum_{j != k} (A x_j Udot_j^T x_{l != j, k} U_l^T)_(k)`` and
    ``F_k = 2 I + G_(k) G_(k)^T``, the curvature term is

        Ghat   = sum_k A x_k Udot_k^T x_{j != k} U_j^T - G x_k (Udot_k^T Z_k F_k^{-1})
        Uhat_k = P_k (W_k G_(k)^T + Y_k Gdot_(k)^T - Z_k F_k^{-1} G_(k) Gdot_(k)^T) F_k^{-1}.
    """
    if xi.base is not x:
        raise BasePointError("tangent is not attached to this point")
    d = x.ndim
    u = x.factors
    udot = xi.factor_dots
    g_unf = x.core_unfoldings
    gdot_unf = [unfold(xi.core_dot, k) for k in range(d)]

    core_hat = np.zeros(x.ranks)
    dots = []
    for k in range(d):
        yk = unfold(contract(egrad, u, skip=k), k)
        zk = yk @ g_unf[k].T
        zk_finv = x.solve_metric(zk, k)

        mats = list(u)
        mats[k] = udot[k]
        core_hat += contract(egrad, mats)
        core_hat -= mode_product(x.core, k, udot[k].T @ zk_finv)

        wk = np.zeros_like(yk)
        for j in range(d):
            if j == k:
                continue
            mats = list(u)
            mats[j] = udot[j]
            wk += unfold(contract(egrad, mats, skip=k), k)
        inner_k = wk @ g_unf[k].T + yk @ gdot_unf[k].T - zk_finv @ (g_unf[k] @ gdot_unf[k].T)
        dots.append(x.solve_metric(_perp(u[k], inner_k), k))

    out = TuckerTangent(core_hat, dots, x)
    if ehess is not None:
        out = out + project_tangent(x, AmbientVector(ehess))
    return out


# ---------------------------------------------------------------------------
# Coordinates (test-scale utilities)
# ---------------------------------------------------------------------------

def orth_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(u)``."""
    n, r = u.shape
    if r == n:
        return np.zeros((n, 0))
    q, _ = np.linalg.qr(u, mode="complete")
    return q[:, r:]


def tangent_basis(x: TuckerPoint) -> list[TuckerTangent]:
    """Euclidean-coordinate basis of the tangent space (small dimensions only).

    Core directions are unit tensors; factor directions are
    ``U_k^perp e_i e_j^T``.  The basis is not orthonormal in the metric.
    """
    basis = []
    zero_dots = [np.zeros_like(u) for u in x.factors]
    for idx in np.ndindex(*x.ranks):
        c = np.zeros(x.ranks)
        c[idx] = 1.0
        basis.append(TuckerTangent(c, zero_dots, x))
    for k, u in enumerate(x.factors):
        perp = orth_complement(u)
        for i in range(perp.shape[1]):
            for j in range(u.shape[1]):
                dots = list(zero_dots)
                m = np.zeros_like(u)
                m[:, j] = perp[:, i]
                dots[k] = m
                basis.append(TuckerTangent(np.zeros(x.ranks), dots, x))
    return basis


def gram_matrix(basis: Sequence[TuckerTangent], other: Sequence[TuckerTangent] | None = None) -> np.ndarray:
    other = basis if other is None else other
    return np.array([[tangent_inner(a, b) for b in other] for a in basis])


def combine(basis: Sequence[TuckerTangent], coeffs: np.ndarray) -> TuckerTangent:
    out = zero_tangent(basis[0].base)
    for c, b in zip(coeffs, basis):
        out = out + float(c) * b
    return out
