"""Type-I hybrid censoring and its Type-I / Type-II special cases.

A life test on ``n`` units stops at ``min(X_{r:n}, x0)``.  When the ``r``-th
failure comes first (Case I) the sample keeps ``d = r`` failures and the
remaining units are censored at ``c = X_{r:n}``; otherwise (Case II) it keeps
the ``d < r`` failures strictly below ``x0`` and censors the rest at ``c = x0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "CensoringKind",
    "CensoringScheme",
    "HybridCensoredSample",
    "censor",
    "effective_threshold",
]


class CensoringKind(str, enum.Enum):
    HYBRID = "hybrid"
    TYPE_I = "type1"
    TYPE_II = "type2"


@dataclass(frozen=True)
class CensoringScheme:
    n: int
    r: int
    x0: float
    kind: CensoringKind = CensoringKind.HYBRID

    def __post_init__(self):
        kind = CensoringKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if int(self.r) != self.r or not 1 <= self.r <= self.n:
            raise DomainError(f"r must be an integer in [1, n], got {self.r!r}")
        if not self.x0 > 0:
            raise DomainError(f"x0 must be > 0, got {self.x0!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "x0", float(self.x0))
        if kind is CensoringKind.TYPE_I and self.r != self.n:
            raise DomainError("a Type-I scheme has r == n")
        if kind is CensoringKind.TYPE_II and not math.isinf(self.x0):
            raise DomainError("a Type-II scheme has x0 == inf")

    @classmethod
    def hybrid(cls, n: int, r: int, x0: float) -> "CensoringScheme":
        return cls(n, r, x0, CensoringKind.HYBRID)

    @classmethod
    def type_i(cls, n: int, x0: float) -> "CensoringScheme":
        return cls(n, n, x0, CensoringKind.TYPE_I)

    @classmethod
    def type_ii(cls, n: int, r: int) -> "CensoringScheme":
        return cls(n, r, math.inf, CensoringKind.TYPE_II)

    @classmethod
    def complete(cls, n: int) -> "CensoringScheme":
        """No censoring: a Type-II scheme whose quota is the whole sample."""
        return cls(n, n, math.inf, CensoringKind.TYPE_II)

    def with_n(self, n: int, r: int | None = None) -> "CensoringScheme":
        r = self.r if r is None else r
        if self.kind is CensoringKind.TYPE_I:
            r = n
        return CensoringScheme(n, r, self.x0, self.kind)

    def to_dict(self) -> dict:
        return {"n": self.n, "r": self.r, "x0": None if math.isinf(self.x0) else self.x0,
                "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "CensoringScheme":
        x0 = math.inf if d.get("x0") is None else float(d["x0"])
        return cls(int(d["n"]), int(d["r"]), x0, CensoringKind(d.get("kind", "hybrid")))


@dataclass(frozen=True, eq=False)
class HybridCensoredSample:
    """Observed failures plus the count and threshold of censored units."""

    observed: np.ndarray
    d: int
    c: float
    scheme: CensoringScheme

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=float)
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)
        if obs.ndim != 1 or len(obs) != self.d:
            raise DomainError("d must equal the number of observed values")
        if self.d > self.scheme.r:
            raise DomainError("d cannot exceed the failure quota r")
        if np.any(obs <= 0) or np.any(np.diff(obs) < 0):
            raise DomainError("observed values must be positive and ascending")
        if not (self.c > 0 and self.c <= self.scheme.x0):
            raise DomainError("censoring threshold must satisfy 0 < c <= x0")
        if self.d == self.scheme.r:
            if self.d and obs[-1] != self.c and self.d < self.scheme.n:
                raise DomainError("Case I sample must have c equal to the r-th failure")
        elif self.d and obs[-1] >= self.c:
            raise DomainError("Case II observed values must lie below c")

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def n_censored(self) -> int:
        return self.scheme.n - self.d

    @property
    def case(self) -> int:
        """1 when the failure quota ended the test, 2 when the time bound did."""
        return 1 if self.d == self.scheme.r else 2

    @property
    def is_degenerate(self) -> bool:
        return self.d == 0

    def __eq__(self, other):
        if not isinstance(other, HybridCensoredSample):
            return NotImplemented
        return (self.d == other.d and self.c == other.c and self.scheme == other.scheme
                and np.array_equal(self.observed, other.observed))

    def __repr__(self):
        return (f"HybridCensoredSample(d={self.d}, c={self.c:g}, n={self.n}, "
                f"r={self.scheme.r}, x0={self.scheme.x0:g})")


def censor(complete, scheme: CensoringScheme) -> HybridCensoredSample:
    """Apply ``scheme`` to a complete ascending sample of length ``scheme.n``."""
    x = np.asarray(complete, dtype=float)
    if x.ndim != 1 or len(x) != scheme.n:
        raise DomainError(f"expected {scheme.n} values, got {len(x)}")
    if np.any(np.diff(x) < 0):
        raise DomainError("complete sample must be sorted ascending")
    if np.any(x <= 0):
        raise DomainError("lifetimes must be positive")
    r = scheme.r
    if x[r - 1] < scheme.x0:
        return HybridCensoredSample(x[:r].copy(), r, float(x[r - 1]), scheme)
    d = int(np.searchsorted(x, scheme.x0, side="left"))
    return HybridCensoredSample(x[:d].copy(), d, scheme.x0, scheme)


def effective_threshold(sample: HybridCensoredSample) -> tuple[int, float]:
    return sample.d, sample.c
