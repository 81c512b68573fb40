"""Solver configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Mapping


@dataclass
class RTRConfig:
    """Trust-region parameters.

    ``delta_bar`` and ``delta0`` default to ``sqrt(dim M)`` and
    ``delta_bar / 16`` when left as ``None``.
    """

    rho_prime: float = 0.1
    delta_bar: float | None = None
    delta0: float | None = None
    tcg_max_iters: int = 200
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0

    def validate(self) -> None:
        if not 0.0 < self.rho_prime < 0.25:
            raise ValueError("rho_prime must lie in (0, 1/4)")
        if self.delta_bar is not None and self.delta_bar <= 0:
            raise ValueError("delta_bar must be positive")
        if self.delta0 is not None:
            if self.delta0 <= 0:
                raise ValueError("delta0 must be positive")
            if self.delta_bar is not None and self.delta0 > self.delta_bar:
                raise ValueError("delta0 must not exceed delta_bar")
        if self.tcg_max_iters < 1:
            raise ValueError("tcg_max_iters must be at least 1")


@dataclass
class SolverConfig:
    max_iters: int = 500
    grad_tol: float = 1e-13
    train_tol: float = 1e-12
    rel_change_tol: float = 1e-12
    time_budget_s: float = float("inf")
    seed: int = 0
    rtr: RTRConfig = field(default_factory=RTRConfig)

    def validate(self) -> "SolverConfig":
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        for name in ("grad_tol", "train_tol", "rel_change_tol", "time_budget_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        self.rtr.validate()
        return self

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "SolverConfig":
        """Build from flat ``key=value`` pairs; RTR keys may be prefixed with ``rtr.``.

        Unknown keys are ignored so one config file can serve several commands.
        """
        top = {f.name: f for f in fields(cls) if f.name != "rtr"}
        sub = {f.name: f for f in fields(RTRConfig)}
        kw, rtr_kw = {}, {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key.startswith("rtr."):
                key = key[4:]
                target, spec = rtr_kw, sub
            elif key in top:
                target, spec = kw, top
            elif key in sub:
                target, spec = rtr_kw, sub
            else:
                continue
            if key not in spec:
                continue
            target[key] = _coerce(raw, spec[key].type)
        return cls(rtr=RTRConfig(**rtr_kw), **kw).validate()

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(raw, type_name):
    if raw is None or not isinstance(raw, str):
        return raw
    text = raw.strip()
    if "int" in str(type_name):
        if text.lower() in ("none", ""):
            return None
        return int(float(text))
    if text.lower() in ("none", ""):
        return None
    return float(text)
