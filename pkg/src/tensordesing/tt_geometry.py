"""Tensor-train representations and their desingularization.

Cores are arrays ``U_c`` of shape ``(r_c, n_c, r_{c+1})`` for ``c = 0..d-1``
with ``r_0 = r_d = 1``.  Unfoldings use Fortran reshapes:

* left unfolding ``L(U_c)``: ``(r_c n_c) x r_{c+1}``, row index ``a + r_c i``;
* right unfolding ``R(U_c)``: ``r_c x (n_c r_{c+1})``, column index ``i + n_c b``.

Interface matrices (0-based, ``k`` counts cores):

* ``leq(k)`` contracts cores ``0..k-1``: rows ``(i_0, ..., i_{k-1})``, ``r_k`` columns;
* ``geq(k)`` contracts cores ``k..d-1``: rows ``(i_k, ..., i_{d-1})``, ``r_k`` columns;

with the first index fastest in every row multi-index, so that

    leq(k) = (I_{n_{k-1}} (x) leq(k-1)) L(U_{k-1}),
    geq(k) = (geq(k+1) (x) I_{n_k}) R(U_k)^T,
    X_<k> = leq(k) geq(k)^T.

The desingularized element pairs ``X`` with projectors
``P_k = I - V_k V_k^T``, ``k = 1..d-1``, where ``V_k`` is an orthonormal
basis of ``span(geq(k))``.  Only the bases are stored; ``bases[k - 1]`` holds
``V_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InconsistencyError, RankError
from .tensor_core import make_rng, mode_product, spawn_seeds

RANK_TOL = 1e-10


@dataclass
class TTRepresentation:
    cores: list

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=float) for c in self.cores]
        if not self.cores:
            raise DimensionError("a TT needs at least one core")
        for c, u in enumerate(self.cores):
            if u.ndim != 3:
                raise DimensionError(f"core {c} must be a 3-way array, got shape {u.shape}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise DimensionError("boundary ranks must be 1")
        for c in range(len(self.cores) - 1):
            if self.cores[c].shape[2] != self.cores[c + 1].shape[0]:
                raise DimensionError(f"rank mismatch between cores {c} and {c + 1}")

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(u.shape[1] for u in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Interior ranks ``(r_1, ..., r_{d-1})``."""
        return tuple(u.shape[2] for u in self.cores[:-1])

    @property
    def full_ranks(self) -> tuple[int, ...]:
        return (1,) + self.ranks + (1,)

    def in_parameter_space(self, tol: float = RANK_TOL) -> bool:
        """``R(U_c)`` has full row rank for every ``c >= 1``."""
        for u in self.cores[1:]:
            s = np.linalg.svd(right_unfold(u), compute_uv=False)
            if s[0] == 0 or np.sum(s > tol * s[0]) < u.shape[0]:
                return False
        return True


@dataclass
class TTDesingElement:
    """``(X, P_1, ..., P_{d-1})`` with ``P_k = I - V_k V_k^T``; ``bases[k - 1] = V_k``."""

    x: np.ndarray
    bases: list

    def projector(self, k: int) -> np.ndarray:
        v = self.bases[k - 1]
        return np.eye(v.shape[0]) - v @ v.T


# ---------------------------------------------------------------------------
# Unfoldings and interfaces
# ---------------------------------------------------------------------------

def left_unfold(u: np.ndarray) -> np.ndarray:
    a, n, b = u.shape
    return u.reshape(a * n, b, order="F")


def right_unfold(u: np.ndarray) -> np.ndarray:
    a, n, b = u.shape
    return u.reshape(a, n * b, order="F")


def fold_left(m: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.asarray(m).reshape(tuple(shape), order="F")


fold_right = fold_left


def interface_leq(tt: TTRepresentation, k: int) -> np.ndarray:
    """``leq(k)``: contraction of the first ``k`` cores, shape ``(n_0 ... n_{k-1}) x r_k``."""
    if not 0 <= k <= tt.ndim:
        raise IndexError(f"k={k} outside 0..{tt.ndim}")
    out = np.ones((1, 1))
    for u in tt.cores[:k]:
        t = np.tensordot(out, u, axes=(1, 0))  # (N, n, b)
        out = t.reshape(-1, u.shape[2], order="F")
    return out


def interface_geq(tt: TTRepresentation, k: int) -> np.ndarray:
    """``geq(k)``: contraction of cores ``k..d-1``, shape ``(n_k ... n_{d-1}) x r_k``."""
    if not 0 <= k <= tt.ndim:
        raise IndexError(f"k={k} outside 0..{tt.ndim}")
    out = np.ones((1, 1))
    for u in reversed(tt.cores[k:]):
        out = _geq_step(out, u)
    return out


def _geq_step(y: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``(y (x) I_n) R(u)^T``."""
    t = np.tensordot(u, y, axes=(2, 1))  # (a, n, N)
    return t.transpose(1, 2, 0).reshape(-1, u.shape[0], order="F")


def tt_eval(tt: TTRepresentation) -> np.ndarray:
    """Dense tensor (small dimensions)."""
    return interface_leq(tt, tt.ndim).reshape(tt.dims, order="F")


def tt_entry(tt: TTRepresentation, index: Sequence[int]) -> float:
    """``U_0[:, i_0, :] U_1[:, i_1, :] ... U_{d-1}[:, i_{d-1}, :]`` (0-based index)."""
    if len(index) != tt.ndim:
        raise IndexError("index length does not match the tensor order")
    out = np.ones((1, 1))
    for u, i in zip(tt.cores, index):
        if not 0 <= i < u.shape[1]:
            raise IndexError(f"index {i} out of range for dimension {u.shape[1]}")
        out = out @ u[:, i, :]
    return float(out[0, 0])


def unfolding(x: np.ndarray, k: int) -> np.ndarray:
    """``X_<k>``: first ``k`` modes as rows, first index fastest."""
    rows = int(np.prod(x.shape[:k], dtype=np.int64))
    return np.asarray(x).reshape(rows, -1, order="F")


def random_tt(dims: Sequence[int], ranks: Sequence[int], seed=None) -> TTRepresentation:
    """Gaussian cores; ``ranks`` are the interior ranks ``(r_1, ..., r_{d-1})``."""
    dims = tuple(int(n) for n in dims)
    full = (1,) + tuple(int(r) for r in ranks) + (1,)
    if len(full) != len(dims) + 1:
        raise DimensionError("need d - 1 interior ranks")
    seeds = spawn_seeds(seed, len(dims))
    cores = [make_rng(s).standard_normal((full[c], n, full[c + 1])) for c, (n, s) in enumerate(zip(dims, seeds))]
    return TTRepresentation(cores)


# ---------------------------------------------------------------------------
# Orthogonalization
# ---------------------------------------------------------------------------

def _qr_pos(a: np.ndarray):
    q, r = np.linalg.qr(a, mode="reduced")
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s, s[:, None] * r


def orthogonalize(tt: TTRepresentation, k: int, tol: float = RANK_TOL) -> TTRepresentation:
    """``k``-orthogonal form: ``L(U_c)`` orthonormal for ``c < k`` and ``R(U_c)^T`` for ``c > k``.

    Raises
    ------
    RankError
        If a right unfolding is rank deficient during the right sweep.
    """
    d = tt.ndim
    if not 0 <= k < d:
        raise IndexError(f"k={k} outside 0..{d - 1}")
    cores = [u.copy() for u in tt.cores]
    for c in range(k):
        a, n, b = cores[c].shape
        lu = left_unfold(cores[c])
        if lu.shape[0] < lu.shape[1]:
            raise RankError(f"left unfolding of core {c} has more columns than rows")
        q, r = _qr_pos(lu)
        cores[c] = fold_left(q, (a, n, b))
        cores[c + 1] = np.tensordot(r, cores[c + 1], axes=(1, 0))
    for c in range(d - 1, k, -1):
        a, n, b = cores[c].shape
        ru = right_unfold(cores[c])
        if ru.shape[1] < ru.shape[0]:
            raise RankError(f"right unfolding of core {c} has more rows than columns")
        q, r = _qr_pos(ru.T)
        diag = np.abs(np.diag(r))
        if diag.size and (diag.max() == 0 or diag.min() <= tol * diag.max()):
            raise RankError(f"right unfolding of core {c} is rank deficient")
        cores[c] = fold_right(q.T, (a, n, b))
        cores[c - 1] = np.tensordot(cores[c - 1], r.T, axes=(2, 0))
    return TTRepresentation(cores)


# ---------------------------------------------------------------------------
# psi and its inverse
# ---------------------------------------------------------------------------

def psi(tt: TTRepresentation, tol: float = RANK_TOL) -> TTDesingElement:
    """``(X, P_1, ..., P_{d-1})`` with bases from QR of the right interfaces."""
    bases = []
    for k in range(1, tt.ndim):
        g = interface_geq(tt, k)
        q, r = _qr_pos(g)
        diag = np.abs(np.diag(r))
        if diag.max() == 0 or diag.min() <= tol * diag.max():
            raise RankError(f"interface geq({k}) is rank deficient")
        bases.append(q)
    return TTDesingElement(tt_eval(tt), bases)


def _sub_projection(v_prev: np.ndarray, v_next: np.ndarray, n: int) -> np.ndarray:
    """Project the columns of ``v_prev`` onto ``span(v_next (x) I_n)``."""
    a = v_prev.shape[1]
    w = v_prev.reshape(n, v_next.shape[0], a, order="F")
    coeff = np.einsum("rb,ira->iba", v_next, w)
    proj = np.einsum("rb,iba->ira", v_next, coeff)
    return proj.reshape(-1, a, order="F")


def membership_check(x: np.ndarray, bases: Sequence[np.ndarray], tol: float = 1e-10):
    """Check that ``(X, I - V_k V_k^T)`` is a desingularized element.

    Conditions per ``k``: ``V_k`` has orthonormal columns of the right
    length; ``X_<k> (I - V_k V_k^T) = 0``; and, for ``k >= 2``,
    ``span(V_{k-1}) <= span(V_k (x) I_{n_{k-1}})`` so that the bases come
    from one TT.

    Returns
    -------
    ok : bool
    residuals : list of float
        Largest relative residual for each ``k = 1..d-1``.
    """
    x = np.asarray(x, dtype=float)
    d = x.ndim
    if len(bases) != d - 1:
        raise DimensionError(f"need {d - 1} bases, got {len(bases)}")
    xn = max(np.linalg.norm(x), 1e-300)
    residuals = []
    for k in range(1, d):
        v = np.asarray(bases[k - 1], dtype=float)
        rows = int(np.prod(x.shape[k:], dtype=np.int64))
        if v.ndim != 2 or v.shape[0] != rows:
            residuals.append(np.inf)
            continue
        res = np.linalg.norm(v.T @ v - np.eye(v.shape[1]))
        xk = unfolding(x, k)
        res = max(res, np.linalg.norm(xk - (xk @ v) @ v.T) / xn)
        if k >= 2:
            vp = np.asarray(bases[k - 2], dtype=float)
            if vp.shape[0] == rows * x.shape[k - 1]:
                res = max(res, np.linalg.norm(vp - _sub_projection(vp, v, x.shape[k - 1])))
            else:
                res = np.inf
        residuals.append(float(res))
    return all(r <= tol for r in residuals), residuals


def psi_inverse(x: np.ndarray, bases: Sequence[np.ndarray], tol: float = 1e-10) -> TTRepresentation:
    """Right-orthogonal TT reproducing ``(X, P_1, ..., P_{d-1})``.

    ``R(U_{d-1}) = V_{d-1}^T``, ``R(U_c) = V_c^T (geq(c+1) (x) I_{n_c})`` for
    ``c = d-2..1`` and ``L(U_0) = X_<1> geq(1)``.

    Raises
    ------
    InconsistencyError
        If the input fails :func:`membership_check`; ``mode`` is the first
        failing ``k``.
    """
    x = np.asarray(x, dtype=float)
    ok, residuals = membership_check(x, bases, tol)
    if not ok:
        k = next(i for i, r in enumerate(residuals, start=1) if r > tol)
        raise InconsistencyError(f"projector P_{k} is inconsistent (residual {residuals[k - 1]:.2e})",
                                 mode=k, residual=residuals[k - 1])
    d = x.ndim
    dims = x.shape
    if d == 1:
        return TTRepresentation([x.reshape(1, -1, 1)])
    cores: list = [None] * d
    v_last = bases[d - 2]
    cores[d - 1] = v_last.T.reshape(v_last.shape[1], dims[d - 1], 1, order="F")
    y = v_last
    for c in range(d - 2, 0, -1):
        v = bases[c - 1]
        n = dims[c]
        v3 = v.reshape(n, y.shape[0], v.shape[1], order="F")
        cores[c] = np.einsum("ira,rb->aib", v3, y)
        y = _geq_step(y, cores[c])
    l0 = unfolding(x, 1) @ y
    cores[0] = l0.reshape(1, dims[0], l0.shape[1], order="F")
    return TTRepresentation(cores)


# ---------------------------------------------------------------------------
# Group action
# ---------------------------------------------------------------------------

def _check_invertible(a: np.ndarray, name: str, max_cond: float = 1e12) -> np.ndarray:
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > max_cond:
        raise RankError(f"{name} is singular (condition number {cond:.2e})")
    return np.linalg.inv(a)


def group_action_tt(tt: TTRepresentation, mats: Sequence[np.ndarray]) -> TTRepresentation:
    """Apply ``A_1, ..., A_{d-1}``: right-multiply the slices of core ``c`` by ``A_{c+1}``
    and left-multiply them by ``A_c^{-1}``."""
    d = tt.ndim
    if len(mats) != d - 1:
        raise DimensionError(f"need {d - 1} group elements, got {len(mats)}")
    invs = [_check_invertible(np.asarray(a, dtype=float), f"A_{j + 1}") for j, a in enumerate(mats)]
    cores = []
    for c, u in enumerate(tt.cores):
        if c >= 1:
            u = mode_product(u, 0, invs[c - 1])
        if c <= d - 2:
            u = mode_product(u, 2, np.asarray(mats[c], dtype=float).T)
        cores.append(u)
    return TTRepresentation(cores)


def recover_group_element(tt_u: TTRepresentation, tt_v: TTRepresentation, tol: float = 1e-9):
    """Group elements ``A`` with ``group_action_tt(tt_v, A) == tt_u``.

    Uses ``A_{d-1} = R(V_{d-1}) R(U_{d-1})^+`` and then
    ``A_c = R(V_c) (A_{c+1} (x) I_{n_c}) R(U_c)^+`` downwards.

    Raises
    ------
    InconsistencyError
        If the recovered action does not reproduce ``tt_u``.
    """
    d = tt_u.ndim
    if tt_u.dims != tt_v.dims or tt_u.full_ranks != tt_v.full_ranks:
        raise InconsistencyError("TT shapes differ")
    mats: list = [None] * (d - 1)
    if d == 1:
        return mats
    mats[d - 2] = right_unfold(tt_v.cores[d - 1]) @ np.linalg.pinv(right_unfold(tt_u.cores[d - 1]))
    for c in range(d - 2, 0, -1):
        n = tt_v.dims[c]
        mats[c - 1] = right_unfold(tt_v.cores[c]) @ np.kron(mats[c], np.eye(n)) @ \
            np.linalg.pinv(right_unfold(tt_u.cores[c]))
    try:
        back = group_action_tt(tt_v, mats)
    except RankError as exc:
        raise InconsistencyError(f"recovered group element is singular: {exc}") from None
    err = max(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300) for a, b in zip(back.cores, tt_u.cores))
    if err > tol:
        raise InconsistencyError(f"no group element maps one TT to the other (residual {err:.2e})", residual=err)
    return mats


# ---------------------------------------------------------------------------
# Vertical and horizontal directions
# ---------------------------------------------------------------------------

def vertical_vector(tt: TTRepresentation, ds: Sequence[np.ndarray]) -> list:
    """Derivative of the group action at the identity in direction ``(D_1, ..., D_{d-1})``."""
    d = tt.ndim
    if len(ds) != d - 1:
        raise DimensionError(f"need {d - 1} directions, got {len(ds)}")
    out = []
    for c, u in enumerate(tt.cores):
        v = np.zeros_like(u)
        if c >= 1:
            v = v - mode_product(u, 0, ds[c - 1])
        if c <= d - 2:
            v = v + mode_product(u, 2, np.asarray(ds[c]).T)
        out.append(v)
    return out


def _horizontal_operators(tt: TTRepresentation) -> list:
    """``M_c = (geq(c+1)^T geq(c+1) (x) I_{n_c}) R(U_c)^T`` for ``c = 1..d-1``."""
    ops = []
    for c in range(1, tt.ndim):
        g = interface_geq(tt, c + 1)
        gram = g.T @ g
        ops.append(np.kron(gram, np.eye(tt.dims[c])) @ right_unfold(tt.cores[c]).T)
    return ops


def horizontal_residuals(tt: TTRepresentation, dirs: Sequence[np.ndarray]) -> list[float]:
    """Per-core condition norms relative to ``||Udot|| ||M_c||``, with ``||Udot||`` over all cores.

    The whole-direction norm keeps a core that is zero up to roundoff from
    reading as a large relative violation.
    """
    total = float(np.sqrt(sum(np.linalg.norm(v) ** 2 for v in dirs)))
    out = []
    for c, m in zip(range(1, tt.ndim), _horizontal_operators(tt)):
        cond = right_unfold(dirs[c]) @ m
        scale = max(total * np.linalg.norm(m), 1e-300)
        out.append(float(np.linalg.norm(cond) / scale))
    return out


def horizontal_check(tt: TTRepresentation, dirs: Sequence[np.ndarray], tol: float = 1e-10) -> bool:
    """True iff ``R(Udot_c) (geq(c+1)^T geq(c+1) (x) I) R(U_c)^T = 0`` for ``c = 1..d-1``."""
    if len(dirs) != tt.ndim:
        raise DimensionError("need one direction per core")
    for c, (u, v) in enumerate(zip(tt.cores, dirs)):
        if np.shape(v) != u.shape:
            raise DimensionError(f"direction {c} has shape {np.shape(v)}, core has {u.shape}")
    return all(r <= tol for r in horizontal_residuals(tt, dirs))


def horizontal_projection(tt: TTRepresentation, dirs: Sequence[np.ndarray]) -> list:
    """Euclidean projection of core directions onto the horizontal conditions."""
    out = [np.asarray(dirs[0], dtype=float).copy()]
    for c, m in zip(range(1, tt.ndim), _horizontal_operators(tt)):
        ru = right_unfold(np.asarray(dirs[c], dtype=float))
        q, _ = np.linalg.qr(m)
        ru = ru - (ru @ q) @ q.T
        out.append(fold_right(ru, tt.cores[c].shape))
    return out


def horizontal_dimension(tt: TTRepresentation, tol: float = 1e-10) -> int:
    """Null-space dimension of the horizontal conditions, counted from an explicit matrix."""
    sizes = [u.size for u in tt.cores]
    total = sum(sizes)
    ops = _horizontal_operators(tt)
    rows = []
    offset = sizes[0]
    for c, m in zip(range(1, tt.ndim), ops):
        a, n, b = tt.cores[c].shape
        block = np.zeros((a * a, total))
        # vec(R(E) M) for each unit core direction E, Fortran vec of an (a x a) result
        for j in range(sizes[c]):
            e = np.zeros(sizes[c])
            e[j] = 1.0
            block[:, offset + j] = (right_unfold(e.reshape((a, n, b), order="F")) @ m).ravel(order="F")
        rows.append(block)
        offset += sizes[c]
    if not rows:
        return total
    mat = np.vstack(rows)
    s = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return total - rank


def horizontal_dimension_formula(dims: Sequence[int], ranks: Sequence[int]) -> int:
    """``sum_c r_c n_c r_{c+1} - sum_{k=1}^{d-1} r_k^2``."""
    full = (1,) + tuple(ranks) + (1,)
    return sum(full[c] * n * full[c + 1] for c, n in enumerate(dims)) - sum(r * r for r in ranks)
