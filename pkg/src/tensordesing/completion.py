"""Low-rank tensor completion.

The objective is ``f(X) = 1/2 ||P_Omega(X) - P_Omega(A)||^2``.  Its gradient
is the residual on ``Omega`` and its Hessian maps ``Xdot`` to
``P_Omega(Xdot)``; both are carried as :class:`SparseTensor` handles so that
no dense ``n_0 x ... x n_{d-1}`` array is formed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, PreconditionError
from .tensor_core import SparseTensor, make_rng, sample_tucker, spawn_seeds
from .tucker_geometry import TuckerPoint, TuckerTangent, random_point

# Observations are sparse tensors with unique 0-based indices.
SparseObservations = SparseTensor


@dataclass
class CompletionProblem:
    """Training set ``Omega``, test set ``Gamma`` and optional ground truth."""

    train: SparseTensor
    test: SparseTensor
    truth: TuckerPoint | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.train.dims != self.test.dims:
            raise DataError("train and test sets have different dimensions")
        if self.train.count and self.test.count:
            common = np.intersect1d(self.train.linear_indices(), self.test.linear_indices())
            if common.size:
                raise DataError(f"train and test sets share {common.size} entries")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.train.dims


# ---------------------------------------------------------------------------
# Sampled evaluation
# ---------------------------------------------------------------------------

def _check_obs(x: TuckerPoint, obs: SparseTensor) -> None:
    if tuple(obs.dims) != x.dims:
        raise DataError(f"observation dims {obs.dims} do not match point dims {x.dims}")


def sample_phi(x: TuckerPoint, obs: SparseTensor) -> np.ndarray:
    """Entries of ``phi(x)`` on the support of ``obs``."""
    _check_obs(x, obs)
    return obs.sample_tucker(x.core, x.factors)


def sample_tangent(x: TuckerPoint, xi: TuckerTangent, obs: SparseTensor) -> np.ndarray:
    """Entries of ``Xdot`` on the support of ``obs``: a sum of ``d + 1`` Tucker terms."""
    _check_obs(x, obs)
    return obs.sample_tucker_tangent(x.core, x.factors, xi.core_dot, xi.factor_dots)


def objective(x: TuckerPoint, problem: CompletionProblem) -> float:
    res = sample_phi(x, problem.train) - problem.train.values
    return 0.5 * float(res @ res)


def egrad_sparse(x: TuckerPoint, problem: CompletionProblem) -> SparseTensor:
    return problem.train.with_values(sample_phi(x, problem.train) - problem.train.values)


def ehess_completion(x: TuckerPoint, xi: TuckerTangent, problem: CompletionProblem) -> SparseTensor:
    return problem.train.with_values(sample_tangent(x, xi, problem.train))


def errors(x: TuckerPoint, problem: CompletionProblem) -> tuple[float, float]:
    """Relative errors ``||P(X - A)|| / ||P(A)||`` on the training and test sets."""
    out = []
    for name, obs in (("train", problem.train), ("test", problem.test)):
        denom = obs.norm()
        if denom == 0.0:
            raise PreconditionError(f"{name} data has zero norm; relative error undefined")
        out.append(float(np.linalg.norm(sample_phi(x, obs) - obs.values)) / denom)
    return out[0], out[1]


def core_singular_values(x: TuckerPoint) -> list[np.ndarray]:
    """Singular values of each unfolding of ``phi(x)``.

    The factors are orthonormal, so these equal the singular values of
    ``G_(k)``.
    """
    return [np.linalg.svd(g, compute_uv=False) for g in x.core_unfoldings]


def sv_error(x: TuckerPoint, truth: TuckerPoint) -> float:
    """``sum_k sum_{i <= r_k} |sigma_{i,k}(phi(x)) - sigma*_{i,k}|``; missing values count as zero."""
    total = 0.0
    for s, s_true in zip(core_singular_values(x), core_singular_values(truth)):
        rk = s.size
        padded = np.zeros(rk)
        m = min(rk, s_true.size)
        padded[:m] = s_true[:m]
        total += float(np.sum(np.abs(s - padded)))
    return total


def sv_total(truth: TuckerPoint) -> float:
    return float(sum(s.sum() for s in core_singular_values(truth)))


# ---------------------------------------------------------------------------
# Objective wrapper for the solvers
# ---------------------------------------------------------------------------

class CompletionObjective:
    """Sampled least-squares objective exposing the solver callback interface.

    The residual at the most recent point is cached, so ``value`` followed by
    ``egrad`` at the same point samples ``phi(x)`` only once.
    """

    quadratic_in_step = True

    def __init__(self, problem: CompletionProblem):
        self.problem = problem
        self._cache: tuple[TuckerPoint, np.ndarray] | None = None

    def residual(self, x: TuckerPoint) -> np.ndarray:
        if self._cache is not None and self._cache[0] is x:
            return self._cache[1]
        res = sample_phi(x, self.problem.train) - self.problem.train.values
        self._cache = (x, res)
        return res

    def value(self, x: TuckerPoint) -> float:
        res = self.residual(x)
        return 0.5 * float(res @ res)

    def egrad(self, x: TuckerPoint) -> SparseTensor:
        return self.problem.train.with_values(self.residual(x))

    def ehess(self, x: TuckerPoint, xi: TuckerTangent) -> SparseTensor:
        return ehess_completion(x, xi, self.problem)

    def exact_step(self, x: TuckerPoint, eta: TuckerTangent) -> float:
        from .solvers.linesearch import exact_linesearch

        return exact_linesearch(sample_tangent(x, eta, self.problem.train), -self.residual(x))

    def metrics(self, x: TuckerPoint) -> dict:
        train = self.problem.train
        out = {"train_error": float(np.linalg.norm(self.residual(x))) / train.norm()}
        test = self.problem.test
        if test.count and test.norm() > 0:
            out["test_error"] = float(np.linalg.norm(sample_phi(x, test) - test.values)) / test.norm()
        if self.problem.truth is not None:
            out["sv_error"] = sv_error(x, self.problem.truth)
        return out


# ---------------------------------------------------------------------------
# Data generation and ingestion
# ---------------------------------------------------------------------------

def sample_count(dims: Sequence[int], p: float) -> int:
    return int(round(p * math.prod(int(n) for n in dims)))


def _distinct_linear_indices(total: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct uniform draws from ``range(total)`` in draw order."""
    if count > total // 4:
        return rng.permutation(total)[:count]
    seen = np.empty(0, dtype=np.int64)
    while seen.size < count:
        cand = rng.integers(0, total, size=int(1.1 * (count - seen.size)) + 16)
        merged = np.concatenate([seen, cand])
        _, first = np.unique(merged, return_index=True)
        seen = merged[np.sort(first)]
    return seen[:count]


def synth_generate(dims: Sequence[int], r_star: Sequence[int], p: float, seed=None) -> CompletionProblem:
    """Synthetic problem ``A = G* x_k U*_k`` with disjoint uniform ``Omega`` and ``Gamma``.

    Both sets have ``round(p * prod(dims))`` entries.  The seed is split into
    a ground-truth stream and a sampling stream.
    """
    dims = tuple(int(n) for n in dims)
    total = math.prod(dims)
    m = sample_count(dims, p)
    if p <= 0 or m < 1:
        raise PreconditionError(f"sampling rate p={p} gives no observations for dims {dims}")
    if 2 * m > total:
        raise PreconditionError(f"p={p} too large: two disjoint sets of {m} entries do not fit in {total}")
    s_truth, s_sample = spawn_seeds(seed, 2)
    truth = random_point(dims, r_star, s_truth)
    lin = _distinct_linear_indices(total, 2 * m, make_rng(s_sample))
    idx = np.stack(np.unravel_index(lin, dims, order="F"), axis=1)
    values = sample_tucker(truth.core, truth.factors, idx)
    train = SparseTensor(dims, idx[:m], values[:m])
    test = SparseTensor(dims, idx[m:], values[m:])
    return CompletionProblem(train, test, truth, {"p": p, "r_star": tuple(r_star)})


_INT = re.compile(r"^[+-]?\d+$")


def ingest_ratings(path: str | Path, period_seconds: int = 604800) -> SparseTensor:
    """Parse ``UserID::MovieID::Rating::Timestamp`` lines into a user x item x period tensor.

    The third index is ``floor((t - t_min) / period_seconds)`` (0-based).
    Repeated ``(user, item, period)`` keys keep the last rating seen.
    Dimensions are the largest 1-based index in each mode.
    """
    if period_seconds <= 0:
        raise PreconditionError("period_seconds must be positive")
    users, items, ratings, stamps = [], [], [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise DataError(f"expected 4 '::'-separated fields, got {len(parts)}", line=lineno)
            u, i, rating, ts = (p.strip() for p in parts)
            if not (_INT.match(u) and _INT.match(i) and _INT.match(ts)):
                raise DataError("user, item and timestamp must be integers", line=lineno)
            try:
                val = float(rating)
            except ValueError:
                raise DataError(f"rating {rating!r} is not numeric", line=lineno) from None
            if not math.isfinite(val):
                raise DataError(f"rating {rating!r} is not finite", line=lineno)
            if int(u) < 1 or int(i) < 1:
                raise DataError("user and item ids must be positive", line=lineno)
            users.append(int(u))
            items.append(int(i))
            ratings.append(val)
            stamps.append(int(ts))
    if not users:
        raise DataError(f"{path}: no ratings found")
    t0 = min(stamps)
    entries: dict[tuple[int, int, int], float] = {}
    for u, i, val, ts in zip(users, items, ratings, stamps):
        entries[(u - 1, i - 1, (ts - t0) // period_seconds)] = val
    idx = np.array(list(entries.keys()), dtype=np.int64)
    vals = np.array(list(entries.values()))
    dims = tuple(int(v) + 1 for v in idx.max(axis=0))
    return SparseTensor(dims, idx, vals)


def split_train_test(obs: SparseTensor, train_count: int, seed=None) -> CompletionProblem:
    """Uniformly random split into ``train_count`` training entries and the rest."""
    if not 0 <= train_count <= obs.count:
        raise PreconditionError(f"train_count={train_count} outside [0, {obs.count}]")
    perm = make_rng(seed).permutation(obs.count)
    tr = np.sort(perm[:train_count])
    te = np.sort(perm[train_count:])
    train = SparseTensor(obs.dims, obs.indices[tr], obs.values[tr])
    test = SparseTensor(obs.dims, obs.indices[te], obs.values[te])
    return CompletionProblem(train, test)
