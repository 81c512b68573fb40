"""Text file formats.

* ``TDNS1`` dense tensor: header, order, dims, then values in storage order.
* ``TOBS1`` observations: ``TOBS1 d n_1 ... n_d count`` then ``count`` lines
  ``i_1 ... i_d value`` with 1-based indices.
* ``TDPT1`` desingularization point: header, ranks, dims, core values, then
  each factor matrix, all in storage order.
* ``TTRP1`` tensor train: header, order, interior ranks, dims, then each core.
* Manifests: ``key = value`` lines, ``#`` starts a comment.

Floats are written with ``repr`` so that reading back is exact.  Malformed
input raises :class:`~tensordesing.errors.DataError` with a line number
where one is meaningful.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError
from .tensor_core import SparseTensor
from .tt_geometry import TTRepresentation
from .tucker_geometry import TuckerPoint


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def _ints(tokens, what: str, line: int) -> tuple[int, ...]:
    try:
        out = tuple(int(t) for t in tokens)
    except ValueError:
        raise DataError(f"{what} must be integers", line=line) from None
    if any(v < 0 for v in out):
        raise DataError(f"{what} must be nonnegative", line=line)
    return out


def _single_int(line: str, what: str, n: int) -> int:
    vals = _ints(line.split(), what, n)
    if len(vals) != 1:
        raise DataError(f"{what} must be a single integer", line=n)
    return vals[0]


def _floats(tokens, what: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in tokens])
    except ValueError:
        raise DataError(f"{what}: non-numeric value") from None


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError:
        raise DataError(f"{path}: not a text file") from None


class _Tokens:
    """Whitespace tokens that remember their source line."""

    def __init__(self, lines: list[str], start: int):
        self._items = [(tok, n) for n, line in enumerate(lines[start:], start=start + 1) for tok in line.split()]
        self._pos = 0

    def take(self, count: int, what: str) -> list[str]:
        end = self._pos + count
        if end > len(self._items):
            raise DataError(f"{what}: expected {count} values, found {len(self._items) - self._pos}")
        out = [t for t, _ in self._items[self._pos:end]]
        self._pos = end
        return out

    def finish(self) -> None:
        if self._pos != len(self._items):
            raise DataError("trailing data after the last block", line=self._items[self._pos][1])


def _header(lines: list[str], magic: str, path) -> None:
    if not lines or lines[0].strip() != magic:
        raise DataError(f"{path}: missing {magic} header", line=1)


# ---------------------------------------------------------------------------
# TDNS1
# ---------------------------------------------------------------------------

def write_dense(path, tensor: np.ndarray) -> None:
    t = np.asarray(tensor, dtype=float)
    text = ["TDNS1", str(t.ndim), " ".join(str(n) for n in t.shape), _fmt(t.ravel(order="F"))]
    Path(path).write_text("\n".join(text) + "\n", encoding="utf-8")


def read_dense(path) -> np.ndarray:
    lines = _read_lines(path)
    _header(lines, "TDNS1", path)
    if len(lines) < 3:
        raise DataError(f"{path}: truncated header")
    d = _single_int(lines[1], "order", 2)
    dims = _ints(lines[2].split(), "dims", 3)
    if len(dims) != d:
        raise DataError(f"expected {d} dims, got {len(dims)}", line=3)
    toks = _Tokens(lines, 3)
    values = _floats(toks.take(int(np.prod(dims, dtype=np.int64)), "tensor values"), "tensor values")
    toks.finish()
    return values.reshape(dims, order="F")


# ---------------------------------------------------------------------------
# TOBS1
# ---------------------------------------------------------------------------

def write_obs(path, obs: SparseTensor) -> None:
    head = f"TOBS1 {obs.ndim} {' '.join(str(n) for n in obs.dims)} {obs.count}"
    body = [" ".join(str(int(i) + 1) for i in idx) + " " + repr(float(v))
            for idx, v in zip(obs.indices, obs.values)]
    Path(path).write_text("\n".join([head] + body) + "\n", encoding="utf-8")


def read_obs(path) -> SparseTensor:
    lines = _read_lines(path)
    head = lines[0].split() if lines else []
    if not head or head[0] != "TOBS1":
        raise DataError(f"{path}: missing TOBS1 header", line=1)
    nums = _ints(head[1:], "header fields", 1)
    if not nums:
        raise DataError("header lacks the tensor order", line=1)
    d = nums[0]
    if len(nums) != d + 2:
        raise DataError(f"header should hold d={d} dims and a count", line=1)
    dims, count = nums[1:d + 1], nums[d + 1]
    body = [(n, line) for n, line in enumerate(lines[1:], start=2) if line.strip()]
    if len(body) != count:
        raise DataError(f"header announces {count} entries, file has {len(body)}")
    idx = np.zeros((count, d), dtype=np.int64)
    vals = np.zeros(count)
    for row, (n, line) in enumerate(body):
        parts = line.split()
        if len(parts) != d + 1:
            raise DataError(f"expected {d} indices and a value", line=n)
        ii = _ints(parts[:d], "indices", n)
        if any(i < 1 or i > dim for i, dim in zip(ii, dims)):
            raise DataError("index out of range", line=n)
        idx[row] = np.array(ii) - 1
        try:
            vals[row] = float(parts[d])
        except ValueError:
            raise DataError(f"value {parts[d]!r} is not numeric", line=n) from None
    obs = SparseTensor(dims, idx, vals)
    lin = obs.linear_indices()
    if np.unique(lin).size != lin.size:
        raise DataError(f"{path}: repeated index")
    return obs


# ---------------------------------------------------------------------------
# TDPT1
# ---------------------------------------------------------------------------

def write_point(path, x: TuckerPoint) -> None:
    text = ["TDPT1", " ".join(str(r) for r in x.ranks), " ".join(str(n) for n in x.dims),
            _fmt(x.core.ravel(order="F"))]
    text += [_fmt(u.ravel(order="F")) for u in x.factors]
    Path(path).write_text("\n".join(text) + "\n", encoding="utf-8")


def read_point(path, check: bool = True) -> TuckerPoint:
    """Read a point; with ``check`` the factors must be orthonormal."""
    lines = _read_lines(path)
    _header(lines, "TDPT1", path)
    if len(lines) < 3:
        raise DataError(f"{path}: truncated header")
    ranks = _ints(lines[1].split(), "ranks", 2)
    dims = _ints(lines[2].split(), "dims", 3)
    if len(ranks) != len(dims):
        raise DataError("ranks and dims have different lengths", line=3)
    toks = _Tokens(lines, 3)
    core = _floats(toks.take(int(np.prod(ranks)), "core"), "core").reshape(ranks, order="F")
    factors = [_floats(toks.take(n * r, f"factor {k}"), f"factor {k}").reshape((n, r), order="F")
               for k, (n, r) in enumerate(zip(dims, ranks))]
    toks.finish()
    x = TuckerPoint(core, factors)
    if check and x.orthogonality_error() > 1e-10:
        raise DataError(f"{path}: factor matrices are not orthonormal")
    return x


# ---------------------------------------------------------------------------
# TTRP1
# ---------------------------------------------------------------------------

def write_tt(path, tt: TTRepresentation) -> None:
    text = ["TTRP1", str(tt.ndim), " ".join(str(r) for r in tt.ranks), " ".join(str(n) for n in tt.dims)]
    text += [_fmt(u.ravel(order="F")) for u in tt.cores]
    Path(path).write_text("\n".join(text) + "\n", encoding="utf-8")


def read_tt(path) -> TTRepresentation:
    lines = _read_lines(path)
    _header(lines, "TTRP1", path)
    if len(lines) < 4:
        raise DataError(f"{path}: truncated header")
    d = _single_int(lines[1], "order", 2)
    ranks = _ints(lines[2].split(), "ranks", 3)
    dims = _ints(lines[3].split(), "dims", 4)
    if len(ranks) != d - 1 or len(dims) != d:
        raise DataError(f"order {d} needs {d - 1} ranks and {d} dims", line=4)
    full = (1,) + ranks + (1,)
    toks = _Tokens(lines, 4)
    cores = []
    for c, n in enumerate(dims):
        shape = (full[c], n, full[c + 1])
        cores.append(_floats(toks.take(int(np.prod(shape)), f"core {c}"), f"core {c}").reshape(shape, order="F"))
    toks.finish()
    return TTRepresentation(cores)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def write_manifest(path, entries: Mapping[str, object]) -> None:
    lines = []
    for key, value in entries.items():
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(_read_lines(path), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise DataError(f"expected 'key = value', got {raw.strip()!r}", line=n)
        out[key.strip()] = value.strip()
    return out
