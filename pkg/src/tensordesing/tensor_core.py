"""Dense multiway-array kernel.

Tensors are plain :class:`numpy.ndarray` objects of shape ``(n_0, ..., n_{d-1})``.
Whenever a tensor is flattened (files, unfoldings) the first index runs
fastest, i.e. Fortran order.  The mode-``k`` unfolding therefore places
``t[i_0, ..., i_{d-1}]`` in row ``i_k`` and column

    j = sum_{l != k} i_l * prod_{m < l, m != k} n_m

with 0-based indices.  Modes are 0-based throughout the Python API.

Besides dense kernels, this module supplies two structured tensor handles
used by the geometry code so that ambient tensors never need to be dense:

* :class:`SparseTensor`, an Omega-supported tensor in coordinate format;
* :class:`TuckerTensor`, a core with factor matrices.

Both implement :meth:`contract`, the one operation the projection and
Hessian formulas need.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ModeIndexError, RankError

DEFAULT_RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# Unfoldings and mode products
# ---------------------------------------------------------------------------

def _check_mode(k: int, d: int) -> None:
    if not 0 <= k < d:
        raise ModeIndexError(f"mode {k} out of range for order-{d} tensor")


def unfold(t: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` unfolding ``t_(k)`` of shape ``(n_k, prod_{j != k} n_j)``."""
    t = np.asarray(t)
    _check_mode(k, t.ndim)
    return np.moveaxis(t, k, 0).reshape(t.shape[k], -1, order="F")


def fold(m: np.ndarray, k: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    dims = tuple(int(n) for n in dims)
    _check_mode(k, len(dims))
    m = np.asarray(m)
    rest = dims[:k] + dims[k + 1:]
    if m.shape != (dims[k], int(np.prod(rest, dtype=np.int64))):
        raise DimensionError(f"matrix of shape {m.shape} cannot fold to {dims} along mode {k}")
    return np.moveaxis(m.reshape((dims[k],) + rest, order="F"), 0, k)


def mode_product(t: np.ndarray, k: int, a: np.ndarray) -> np.ndarray:
    """Mode-``k`` product ``t x_k a`` with ``a`` of shape ``(M, n_k)``."""
    t = np.asarray(t)
    _check_mode(k, t.ndim)
    a = np.atleast_2d(a)
    if a.shape[1] != t.shape[k]:
        raise DimensionError(f"mode-{k} product: matrix has {a.shape[1]} columns, tensor has n_k={t.shape[k]}")
    return np.moveaxis(np.tensordot(a, t, axes=(1, k)), 0, k)


def multi_mode_product(t: np.ndarray, mats: Sequence[np.ndarray | None], transpose: bool = False,
                       skip: int | None = None) -> np.ndarray:
    """Apply ``t x_0 A_0 x_1 A_1 ...``; ``None`` entries and mode ``skip`` are left alone.

    With ``transpose=True`` the transposed matrices ``A_k^T`` are applied.
    """
    out = np.asarray(t)
    for k, a in enumerate(mats):
        if a is None or k == skip:
            continue
        out = mode_product(out, k, a.T if transpose else a)
    return out


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with block ``(i, j)`` equal to ``a[i, j] * b``."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def kron_chain(mats: Sequence[np.ndarray]) -> np.ndarray:
    """``mats[0] (x) mats[1] (x) ...``; an empty list gives the 1x1 identity."""
    if not mats:
        return np.ones((1, 1))
    return reduce(kron, mats)


def outer(*vectors: np.ndarray) -> np.ndarray:
    """Outer product ``v_0 o v_1 o ... o v_{d-1}``."""
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float))
    return out


def inner(s: np.ndarray, t: np.ndarray) -> float:
    """Frobenius inner product."""
    s = np.asarray(s)
    t = np.asarray(t)
    if s.shape != t.shape:
        raise DimensionError(f"inner product of shapes {s.shape} and {t.shape}")
    return float(np.vdot(s, t))


def frob_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(t)))


# ---------------------------------------------------------------------------
# Factorizations
# ---------------------------------------------------------------------------

def thin_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR with nonnegative diagonal of ``R``.

    Rank-deficient inputs give zeros on the diagonal of ``R``; the
    corresponding columns of ``Q`` are whatever LAPACK returns.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    if m < n:
        raise DimensionError(f"thin_qr needs rows >= cols, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, signs[:, None] * r


def thin_svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``a = U diag(s) V^T`` with ``s`` descending; returns ``(U, s, V)``."""
    u, s, vt = np.linalg.svd(np.asarray(a, dtype=float), full_matrices=False)
    return u, s, vt.T


def tucker_rank(t: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> tuple[int, ...]:
    """Numerical Tucker rank: per mode, singular values above ``tol * sigma_max``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    t = np.asarray(t, dtype=float)
    ranks = []
    for k in range(t.ndim):
        s = np.linalg.svd(unfold(t, k), compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            ranks.append(0)
        else:
            ranks.append(int(np.sum(s > tol * s[0])))
    return tuple(ranks)


# ---------------------------------------------------------------------------
# Random generation
# ---------------------------------------------------------------------------
#
# All randomness goes through numpy's PCG64 bit generator.  An integer seed is
# turned into a SeedSequence; composite objects split it with
# SeedSequence.spawn so that, e.g., the core of a random Tucker tensor uses
# child stream 0 and factor k uses child stream k + 1.

def make_rng(seed=None) -> np.random.Generator:
    """PCG64 generator from an int, a SeedSequence, or pass through a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """Split ``seed`` into ``n`` independent child seed sequences."""
    if isinstance(seed, np.random.Generator):
        return [np.random.SeedSequence(int(x)) for x in seed.integers(0, 2**63, size=n)]
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(n)


def random_gaussian(dims: Sequence[int], seed=None) -> np.ndarray:
    """Standard normal tensor; values are drawn in storage (Fortran) order."""
    dims = tuple(int(n) for n in dims)
    rng = make_rng(seed)
    return rng.standard_normal(int(np.prod(dims, dtype=np.int64))).reshape(dims, order="F")


def random_stiefel(n: int, r: int, seed=None) -> np.ndarray:
    """Orthonormal ``n x r`` matrix: Q factor of a Gaussian matrix."""
    if r > n:
        raise RankError(f"cannot draw {r} orthonormal columns in dimension {n}")
    return thin_qr(random_gaussian((n, r), seed))[0]


# ---------------------------------------------------------------------------
# Structured tensor handles
# ---------------------------------------------------------------------------

ROW_CACHE_SIZE = 4
# Minimum mean number of entries per (i_k, i_p) pair for the pair route in contract.
PAIR_DENSITY = 2.0


class SparseTensor:
    """Tensor supported on a finite index set, in coordinate format.

    Parameters
    ----------
    dims : sequence of int
        Tensor shape.
    indices : (m, d) integer array
        0-based coordinates.  Uniqueness is the caller's responsibility
        (use :meth:`check` to verify).
    values : (m,) array
    """

    __slots__ = ("dims", "indices", "values", "_mode_ops", "_rows")

    def __init__(self, dims: Sequence[int], indices: np.ndarray, values: np.ndarray):
        self.dims = tuple(int(n) for n in dims)
        self.indices = np.asarray(indices, dtype=np.int64).reshape(-1, len(self.dims))
        self.values = np.asarray(values, dtype=float).reshape(-1)
        if self.values.shape[0] != self.indices.shape[0]:
            raise DimensionError("indices and values have different lengths")
        self._mode_ops: dict[int, sp.csr_matrix] = {}
        self._rows: dict = {}

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: np.ndarray) -> "SparseTensor":
        """Same support, new values; shares the cached scatter operators."""
        out = SparseTensor.__new__(SparseTensor)
        out.dims = self.dims
        out.indices = self.indices
        out.values = np.asarray(values, dtype=float).reshape(-1)
        if out.values.shape[0] != self.count:
            raise DimensionError("value array does not match support size")
        out._mode_ops = self._mode_ops
        out._rows = self._rows
        return out

    def check(self) -> None:
        """Raise if indices are out of range or repeated."""
        idx = self.indices
        if idx.size and (idx.min() < 0 or np.any(idx.max(axis=0) >= np.array(self.dims))):
            raise IndexError("sparse index out of range")
        lin = self.linear_indices()
        if np.unique(lin).size != lin.size:
            raise ValueError("duplicate sparse indices")

    def linear_indices(self) -> np.ndarray:
        """Storage-order (Fortran) linear index of each entry."""
        return np.ravel_multi_index(tuple(self.indices.T), self.dims, order="F")

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dims)
        out[tuple(self.indices.T)] = self.values
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def gather(self, k: int, mat: np.ndarray) -> np.ndarray:
        """Rows ``mat[i_k]`` for every entry, cached per factor array.

        The cache holds a reference to ``mat`` so identity checks stay valid;
        it is shared by supports created with :meth:`with_values`.
        """
        key = (k, id(mat))
        hit = self._rows.get(key)
        if hit is not None and hit[0] is mat:
            return hit[1]
        if len(self._rows) >= ROW_CACHE_SIZE * len(self.dims):
            self._rows.clear()
        rows = np.take(mat, self.indices[:, k], axis=0)
        self._rows[key] = (mat, rows)
        return rows

    def _scatter(self, k: int) -> sp.csr_matrix:
        op = self._mode_ops.get(k)
        if op is None:
            m = self.count
            op = sp.csr_matrix((np.ones(m), (self.indices[:, k], np.arange(m))),
                               shape=(self.dims[k], m))
            self._mode_ops[k] = op
        return op

    def _pair_scatter(self, k: int, p: int) -> sp.csr_matrix:
        """0/1 operator summing entries that share ``(i_k, i_p)``; rows ordered ``i_k + n_k i_p``."""
        op = self._mode_ops.get((k, p))
        if op is None:
            m = self.count
            lin = self.indices[:, k] + self.dims[k] * self.indices[:, p]
            op = sp.csr_matrix((np.ones(m), (lin, np.arange(m))), shape=(self.dims[k] * self.dims[p], m))
            self._mode_ops[(k, p)] = op
        return op

    def _pair_mode(self, skip: int) -> int | None:
        """Partner mode for the pair route, or ``None`` when pairs are too sparse to pay off."""
        others = [j for j in range(self.ndim) if j != skip]
        p = min(others, key=lambda j: self.dims[j])
        if PAIR_DENSITY * self.dims[skip] * self.dims[p] > self.count:
            return None
        return p

    def contract(self, mats: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
        """Dense ``self x_j mats[j]^T`` over all ``j != skip``.

        ``mats[j]`` has shape ``(n_j, r_j)``.  The result has size ``r_j`` in each
        contracted mode and ``n_skip`` in mode ``skip``.
        """
        d = self.ndim
        if skip is None:
            rows0 = self.gather(0, mats[0])
            rest = [self.gather(j, mats[j]) for j in range(1, d)]
            rest[0] = rest[0] * self.values[:, None]
            out = rows0.T @ rowwise_kron(rest)
            return fold(out, 0, [mats[j].shape[1] for j in range(d)])
        if d == 1:
            return self.to_dense()
        shape = [self.dims[skip] if j == skip else mats[j].shape[1] for j in range(d)]
        p = self._pair_mode(skip) if d > 2 else None
        if p is not None:
            # Scatter onto (i_skip, i_p) pairs first, then contract mode p densely.
            rest = [j for j in range(d) if j not in (skip, p)]
            rows = [self.gather(j, mats[j]) for j in rest]
            rows[0] = rows[0] * self.values[:, None]
            acc = np.asarray(self._pair_scatter(skip, p) @ rowwise_kron(rows))
            acc = acc.reshape([self.dims[skip], self.dims[p]] + [shape[j] for j in rest], order="F")
            out = np.tensordot(acc, mats[p], axes=(1, 0))
            order = [skip] + rest + [p]
            return np.transpose(out, np.argsort(order))
        rows = [self.gather(j, mats[j]) for j in range(d) if j != skip]
        rows[0] = rows[0] * self.values[:, None]
        out = np.asarray(self._scatter(skip) @ rowwise_kron(rows))
        return fold(out, skip, shape)

    def _pair_rows(self) -> np.ndarray | None:
        """Row index ``i_0 + n_0 i_1`` into the mode-(0, 1) pair grid, or ``None`` if too sparse."""
        if self.ndim < 3 or PAIR_DENSITY * self.dims[0] * self.dims[1] > self.count:
            return None
        lin = self._mode_ops.get("pair01")
        if lin is None:
            lin = self.indices[:, 0] + self.dims[0] * self.indices[:, 1]
            self._mode_ops["pair01"] = lin
        return lin

    def sample_tucker(self, core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
        """Entries of ``core x_k factors[k]`` on this support (see :func:`sample_tucker`)."""
        lin = self._pair_rows()
        if lin is not None:
            rows = [None, None] + [self.gather(k, factors[k]) for k in range(2, self.ndim)]
            return sample_tucker(core, factors, self.indices, rows, pair_rows=lin)
        rows = [self.gather(k, u) for k, u in enumerate(factors)]
        return sample_tucker(core, factors, self.indices, rows)

    def sample_tucker_tangent(self, core: np.ndarray, factors: Sequence[np.ndarray], core_dot: np.ndarray,
                              factor_dots: Sequence[np.ndarray]) -> np.ndarray:
        """Tangent entries on this support (see :func:`sample_tucker_tangent`)."""
        lin = self._pair_rows()
        if lin is not None:
            rows = [None, None] + [self.gather(k, factors[k]) for k in range(2, self.ndim)]
            return sample_tucker_tangent(core, factors, core_dot, factor_dots, self.indices, rows, pair_rows=lin)
        rows = [self.gather(k, u) for k, u in enumerate(factors)]
        return sample_tucker_tangent(core, factors, core_dot, factor_dots, self.indices, rows)

    def inner_dense(self, t: np.ndarray) -> float:
        """``<self, t>`` for a dense tensor ``t``."""
        return float(self.values @ np.asarray(t)[tuple(self.indices.T)])


class TuckerTensor:
    """Tensor ``core x_0 U_0 x_1 U_1 ...`` with unconstrained factors."""

    __slots__ = ("core", "factors")

    def __init__(self, core: np.ndarray, factors: Sequence[np.ndarray]):
        self.core = np.asarray(core, dtype=float)
        self.factors = [np.asarray(u, dtype=float) for u in factors]
        if len(self.factors) != self.core.ndim:
            raise DimensionError("need one factor per core mode")
        for k, u in enumerate(self.factors):
            if u.shape[1] != self.core.shape[k]:
                raise DimensionError(f"factor {k} has {u.shape[1]} columns, core has {self.core.shape[k]}")

    @property
    def ndim(self) -> int:
        return self.core.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    def to_dense(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)

    def contract(self, mats: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
        small = [None if j == skip else mats[j].T @ u for j, u in enumerate(self.factors)]
        if skip is not None:
            small[skip] = self.factors[skip]
        return multi_mode_product(self.core, small)

    def sample(self, indices: np.ndarray) -> np.ndarray:
        return sample_tucker(self.core, self.factors, indices)


def contract(a, mats: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
    """``a x_j mats[j]^T`` for all ``j != skip``; ``a`` may be dense or a structured handle."""
    if isinstance(a, np.ndarray):
        return multi_mode_product(a, mats, transpose=True, skip=skip)
    return a.contract(mats, skip)


def rowwise_kron(rows: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product with the first factor varying fastest.

    For rows ``R_0 (m x a), R_1 (m x b)`` the result has
    ``out[z, i + a * j] = R_0[z, i] * R_1[z, j]``, matching unfolding column order.
    """
    if not rows:
        raise ValueError("need at least one factor")
    out = rows[0]
    m = out.shape[0]
    for r in rows[1:]:
        out = np.einsum("zi,zj->zji", out, r).reshape(m, -1)
    return out


def _contract_rows(w: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Contract the fastest remaining core index of ``w`` (shape ``(m, c)``) with ``rows``."""
    m, r = rows.shape
    w3 = w.reshape(m, -1, r)
    return np.einsum("zcj,zj->zc", w3, rows, optimize=False)


def _pair_grid(core: np.ndarray, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """``core x_0 u0 x_1 u1`` as an ``(n_0 n_1, prod_{k>1} r_k)`` matrix, row ``i_0 + n_0 i_1``."""
    h = mode_product(mode_product(core, 0, u0), 1, u1)
    return h.reshape(u0.shape[0] * u1.shape[0], -1, order="F")


def sample_tucker(core: np.ndarray, factors: Sequence[np.ndarray], indices: np.ndarray,
                  rows: Sequence[np.ndarray] | None = None, pair_rows: np.ndarray | None = None) -> np.ndarray:
    """Entries of ``core x_k factors[k]`` at the 0-based ``indices`` (shape ``(m, d)``).

    ``rows[k]`` may supply ``factors[k][indices[:, k]]`` if already gathered.
    Cost is ``O(m prod r_k)``; the dense tensor is never formed.  With
    ``pair_rows = i_0 + n_0 i_1`` (order ``d >= 3``) the first two modes are
    contracted densely over all ``(i_0, i_1)`` pairs and then gathered, which
    is cheaper when the samples cover those pairs several times over; only
    ``rows[2:]`` are used in that case.
    """
    d = core.ndim
    indices = np.asarray(indices, dtype=np.int64)
    if rows is None:
        rows = [np.take(factors[k], indices[:, k], axis=0) for k in range(d)]
    if pair_rows is not None:
        w = np.take(_pair_grid(core, factors[0], factors[1]), pair_rows, axis=0)
        start = 2
    else:
        w = rows[0] @ unfold(core, 0)
        start = 1
    for k in range(start, d):
        w = _contract_rows(w, rows[k])
    return w.reshape(-1)


def sample_tucker_tangent(core: np.ndarray, factors: Sequence[np.ndarray], core_dot: np.ndarray,
                          factor_dots: Sequence[np.ndarray], indices: np.ndarray,
                          rows: Sequence[np.ndarray] | None = None,
                          pair_rows: np.ndarray | None = None) -> np.ndarray:
    """Entries of ``core_dot x U + sum_k core x_k Udot_k x_{j!=k} U_j`` at ``indices``.

    Modes are contracted one at a time while carrying the terms with and
    without a dotted factor, so the cost is that of two plain samples.
    """
    indices = np.asarray(indices, dtype=np.int64)
    d = core.ndim
    if rows is None:
        rows = [np.take(factors[k], indices[:, k], axis=0) for k in range(d)]
    if pair_rows is not None:
        u0, u1 = factors[0], factors[1]
        plain = np.take(_pair_grid(core, u0, u1), pair_rows, axis=0)
        grid = _pair_grid(core_dot, u0, u1) + _pair_grid(core, factor_dots[0], u1) \
            + _pair_grid(core, u0, factor_dots[1])
        dotted = np.take(grid, pair_rows, axis=0)
        for k in range(2, d):
            dot_k = np.take(factor_dots[k], indices[:, k], axis=0)
            dotted = _contract_rows(dotted, rows[k]) + _contract_rows(plain, dot_k)
            plain = _contract_rows(plain, rows[k])
        return dotted.reshape(-1)
    dot_rows = [np.take(factor_dots[k], indices[:, k], axis=0) for k in range(d)]
    g0, gd0 = unfold(core, 0), unfold(core_dot, 0)
    if d == 1:
        return rows[0] @ gd0[:, 0] + dot_rows[0] @ g0[:, 0]
    # One product yields both terms, laid out as (m, rest, [dotted | plain]) over
    # the next mode's index so the second contraction needs no concatenation.
    m, r0 = rows[0].shape
    r1 = core.shape[1]
    rest = g0.shape[1] // r1
    g3 = g0.reshape(r0, r1, rest, order="F").transpose(0, 2, 1)
    gd3 = gd0.reshape(r0, r1, rest, order="F").transpose(0, 2, 1)
    big = np.zeros((2 * r0, rest, 2, r1))
    big[:r0, :, 0], big[:r0, :, 1], big[r0:, :, 0] = gd3, g3, g3
    big = big.reshape(2 * r0, -1)
    w = (np.hstack([rows[0], dot_rows[0]]) @ big).reshape(m, rest, 2 * r1)
    both = np.hstack([rows[1], dot_rows[1]])
    dotted = np.einsum("zcj,zj->zc", w, both, optimize=False)
    plain = np.einsum("zcj,zj->zc", w[:, :, r1:], rows[1], optimize=False)
    for k in range(2, d):
        dotted = _contract_rows(dotted, rows[k]) + _contract_rows(plain, dot_rows[k])
        plain = _contract_rows(plain, rows[k])
    return dotted.reshape(-1)
