"""Residual aggregation and nested-model F-tests.

Each frequency sample is complex, and its real and imaginary parts count as
independent observations. An n-sample experiment fit with the 4-parameter
model therefore leaves ``2n - 4`` residual degrees of freedom.

The F quantile is computed here from the regularized incomplete beta
function instead of pulling in a statistics package.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Iterable

from .errors import DegenerateFitError, DomainError, IncompleteGridError, NumericError
from .model import ModelKind


class Scope(str, enum.Enum):
    SUBJECT = "subject"
    EXPERIMENT = "experiment"
    ALL = "all"


class Comparison(str, enum.Enum):
    M1_M3 = "M1-vs-M3"
    M2_M3 = "M2-vs-M3"

    @property
    def reduced(self) -> ModelKind:
        return ModelKind.M1 if self is Comparison.M1_M3 else ModelKind.M2


# --- F distribution --------------------------------------------------------

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 10000, eps: float = 1e-15) -> float:
    """Continued fraction for I_x(a, b), modified Lentz method."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise DomainError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    # the continued fraction converges fast only below the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    if d1 <= 0 or d2 <= 0:
        raise DomainError("degrees of freedom must be positive")
    if x <= 0:
        return 0.0
    return betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


@lru_cache(maxsize=256)
def f_critical(p: float, d1: float, d2: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Upper-tail quantile: the x with P(F > x) = p for F ~ F(d1, d2).

    Bracket by doubling, then bisect on the CDF.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if d1 < 1 or d2 < 1:
        raise DomainError("degrees of freedom must be >= 1")
    target = 1.0 - p
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < target:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise NumericError(f"could not bracket F quantile (p={p}, d1={d1}, d2={d2})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, d1, d2) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            return 0.5 * (lo + hi)
    raise NumericError(
        f"F quantile bisection did not converge (p={p}, d1={d1}, d2={d2}, bracket=[{lo}, {hi}])"
    )


# --- RSS aggregation -------------------------------------------------------


@dataclass
class RssTable:
    """RSS per (subject, experiment, model); ``n`` complex samples per fit."""

    n: int = 10
    cells: dict[tuple[Hashable, Hashable, ModelKind], float] = field(default_factory=dict)

    def add(self, subject: Hashable, exp: Hashable, kind: ModelKind, rss: float) -> None:
        if rss < 0:
            raise DomainError("rss cannot be negative")
        self.cells[(subject, exp, ModelKind(kind))] = float(rss)

    @property
    def subjects(self) -> list:
        return sorted({s for s, _, _ in self.cells}, key=str)

    @property
    def experiments(self) -> list:
        return sorted({e for _, e, _ in self.cells}, key=str)

    @property
    def n_sub(self) -> int:
        return len(self.subjects)

    @property
    def n_exp(self) -> int:
        return len(self.experiments)

    def check_complete(self, kinds: Iterable[ModelKind] = (ModelKind.M1, ModelKind.M2, ModelKind.M3)) -> None:
        for s in self.subjects:
            for e in self.experiments:
                for k in kinds:
                    if (s, e, ModelKind(k)) not in self.cells:
                        raise IncompleteGridError(f"missing RSS cell subject={s!r} exp={e!r} model={ModelKind(k).value}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cells": [{"subject": s, "exp": e, "model": k.value, "rss": r} for (s, e, k), r in self.cells.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RssTable":
        table = cls(n=int(d["n"]))
        for c in d["cells"]:
            table.add(c["subject"], c["exp"], ModelKind(c["model"]), float(c["rss"]))
        return table


def aggregate_rss(table: RssTable, kind: ModelKind, scope: Scope, key: Hashable = None) -> float:
    """Sum RSS over experiments (subject scope), subjects (experiment scope) or both."""
    kind, scope = ModelKind(kind), Scope(scope)
    table.check_complete()
    if scope is Scope.SUBJECT:
        cells = [(key, e) for e in table.experiments]
    elif scope is Scope.EXPERIMENT:
        cells = [(s, key) for s in table.subjects]
    else:
        cells = [(s, e) for s in table.subjects for e in table.experiments]
    try:
        return sum(table.cells[(s, e, kind)] for s, e in cells)
    except KeyError as exc:
        raise IncompleteGridError(f"no RSS cell for {exc.args[0]!r}") from None


@dataclass(frozen=True)
class FTestReport:
    scope: Scope
    key: Hashable
    comparison: Comparison
    F: float
    df: tuple[int, int]
    F_crit: float
    p: float = 0.05

    @property
    def significant(self) -> bool:
        return self.F > self.F_crit

    def to_dict(self) -> dict:
        return {
            "scope": self.scope.value,
            "key": self.key,
            "comparison": self.comparison.value,
            "F": self.F,
            "df": list(self.df),
            "F_crit": self.F_crit,
            "p": self.p,
            "significant": self.significant,
        }


def degrees_of_freedom(table: RssTable, scope: Scope) -> tuple[int, int]:
    """(d1, d2): one extra parameter per fit, 2n - 4 residual dof per fit."""
    scope = Scope(scope)
    if table.n < 3:
        raise DomainError("need n >= 3 samples per experiment")
    fits = {Scope.SUBJECT: table.n_exp, Scope.EXPERIMENT: table.n_sub, Scope.ALL: table.n_exp * table.n_sub}[scope]
    return (4 - 3) * fits, (2 * table.n - 4) * fits


def f_statistic(
    table: RssTable,
    scope: Scope,
    comparison: Comparison,
    key: Hashable = None,
    p: float = 0.05,
) -> FTestReport:
    scope, comparison = Scope(scope), Comparison(comparison)
    r_full = aggregate_rss(table, ModelKind.M3, scope, key)
    r_reduced = aggregate_rss(table, comparison.reduced, scope, key)
    if r_full == 0:
        raise DegenerateFitError(f"M3 residual is zero for {scope.value} {key!r}; F undefined")
    d1, d2 = degrees_of_freedom(table, scope)
    # (n_exp or n_sub) factors appear in both numerator and denominator dof
    F = (r_reduced - r_full) / r_full * d2 / d1
    return FTestReport(scope, key, comparison, max(F, 0.0), (d1, d2), f_critical(p, d1, d2), p)


def f_test_suite(table: RssTable, p: float = 0.05) -> list[FTestReport]:
    """Every subject, every experiment and the pooled test, for both comparisons."""
    table.check_complete()
    reports = []
    for comparison in Comparison:
        keyed = [(Scope.SUBJECT, s) for s in table.subjects]
        keyed += [(Scope.EXPERIMENT, e) for e in table.experiments]
        keyed.append((Scope.ALL, None))
        for scope, key in keyed:
            reports.append(f_statistic(table, scope, comparison, key, p))
    return reports
