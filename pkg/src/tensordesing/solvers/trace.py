"""Per-iteration solver traces."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO

TRACE_FIELDS = ("iter", "time_s", "train_error", "test_error", "grad_norm", "step", "rho", "sv_error")


@dataclass
class IterationRecord:
    iter: int
    time_s: float
    train_error: float
    grad_norm: float
    test_error: float | None = None
    step: float | None = None
    rho: float | None = None
    sv_error: float | None = None
    accepted: bool = True

    def row(self) -> list[str]:
        out = []
        for name in TRACE_FIELDS:
            v = getattr(self, name)
            out.append("" if v is None else (str(v) if name == "iter" else repr(float(v))))
        return out


@dataclass
class IterationTrace:
    """Ordered iteration records plus events (restarts, diagnostics) and the stop reason."""

    records: list[IterationRecord] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)
    termination: str | None = None
    stream: IO | None = None
    _writer: object = None

    def append(self, rec: IterationRecord) -> None:
        if self.records:
            last = self.records[-1]
            if rec.iter <= last.iter:
                raise ValueError("iteration numbers must increase")
            rec.time_s = max(rec.time_s, last.time_s)
        self.records.append(rec)
        if self.stream is not None:
            if self._writer is None:
                self._writer = csv.writer(self.stream, lineterminator="\n")
                self._writer.writerow(TRACE_FIELDS)
            self._writer.writerow(rec.row())
            self.stream.flush()

    def event(self, it: int, what: str) -> None:
        self.events.append((it, what))

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> IterationRecord:
        return self.records[i]

    @property
    def last(self) -> IterationRecord:
        return self.records[-1]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    @property
    def restarts(self) -> int:
        return sum(1 for _, what in self.events if what == "restart")

    def first_iter_below(self, name: str, threshold: float) -> int | None:
        for r in self.records:
            v = getattr(r, name)
            if v is not None and not math.isnan(v) and v <= threshold:
                return r.iter
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for r in self.records:
                w.writerow(r.row())


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({k: (None if v == "" else (int(v) if k == "iter" else float(v))) for k, v in row.items()})
    return out
