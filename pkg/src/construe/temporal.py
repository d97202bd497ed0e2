"""
Simple temporal networks: interval-valued variables, binary difference
constraints and late-checked predicate constraints.

The network keeps a closed distance matrix D where D[i, j] is the tightest
known upper bound on x_j - x_i. Index 0 is the origin (fixed at 0), so the
domain of x is [-D[x, 0], D[0, x]].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

INF = math.inf
ORIGIN = "@0"


class ConfigurationError(LookupError):
    """A predicate or procedure name has no registered implementation."""


@dataclass(frozen=True)
class DifferenceConstraint:
    """lo <= x - y <= hi"""

    x: str
    y: str
    lo: float = -INF
    hi: float = INF
    label: str = ""

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty bounds [{self.lo}, {self.hi}] on {self.x} - {self.y}")


@dataclass(frozen=True)
class PredicateConstraint:
    """Named check over a full assignment of its variables."""

    name: str
    variables: tuple[str, ...]
    evaluator: Callable[[Mapping[str, Any]], bool] | None = field(default=None, compare=False, hash=False)
    label: str = ""


class TemporalNetwork:
    def __init__(self, variables: Iterable[str] = ()):
        self.names: list[str] = [ORIGIN]
        self.index: dict[str, int] = {ORIGIN: 0}
        self.dist = np.zeros((1, 1))
        self.constraints: list[DifferenceConstraint] = []
        self.predicates: list[PredicateConstraint] = []
        self.consistent = True
        self.add_variables(variables)

    # -- structure ---------------------------------------------------------

    def copy(self) -> "TemporalNetwork":
        net = TemporalNetwork.__new__(TemporalNetwork)
        net.names = list(self.names)
        net.index = dict(self.index)
        net.dist = self.dist.copy()
        net.constraints = list(self.constraints)
        net.predicates = list(self.predicates)
        net.consistent = self.consistent
        return net

    def __contains__(self, name: str) -> bool:
        return name in self.index

    @property
    def variables(self) -> list[str]:
        return self.names[1:]

    def add_variables(self, names: Iterable[str]) -> None:
        new = [n for n in dict.fromkeys(names) if n not in self.index]
        if not new:
            return
        n, k = len(self.names), len(new)
        d = np.full((n + k, n + k), INF)
        d[:n, :n] = self.dist
        d[np.arange(n, n + k), np.arange(n, n + k)] = 0.0
        self.dist = d
        for i, name in enumerate(new):
            self.index[name] = n + i
            self.names.append(name)

    def add_variable(self, name: str, lo: float = -INF, hi: float = INF) -> None:
        self.add_variables([name])
        if lo > -INF or hi < INF:
            self.add_constraint(DifferenceConstraint(name, ORIGIN, lo, hi))

    # -- constraints -------------------------------------------------------

    def add_constraint(self, c: DifferenceConstraint) -> bool:
        """Add and tighten incrementally. Returns the consistency flag."""
        self.add_variables([c.x, c.y])
        self.constraints.append(c)
        x, y = self.index[c.x], self.index[c.y]
        if c.hi < INF:
            self._tighten(y, x, c.hi)
        if c.lo > -INF:
            self._tighten(x, y, -c.lo)
        return self.consistent

    def add_predicate(self, p: PredicateConstraint) -> None:
        self.predicates.append(p)

    def _tighten(self, i: int, j: int, w: float) -> None:
        # new edge i -> j with weight w on a closed matrix
        if not self.consistent:
            return
        d = self.dist
        if d[i, j] <= w:
            return
        cand = d[:, i : i + 1] + w + d[j : j + 1, :]
        np.minimum(d, cand, out=d)
        if (np.diagonal(d) < 0).any():
            self.consistent = False

    # -- queries -----------------------------------------------------------

    def domain(self, name: str) -> tuple[float, float]:
        i = self.index[name]
        return (-float(self.dist[i, 0]), float(self.dist[0, i]))

    def bound(self, name: str) -> bool:
        lo, hi = self.domain(name)
        return lo == hi

    def value(self, name: str) -> float | None:
        lo, hi = self.domain(name)
        return lo if lo == hi else None

    def difference(self, x: str, y: str) -> tuple[float, float]:
        """Tightest known [lo, hi] on x - y."""
        i, j = self.index[x], self.index[y]
        return (-float(self.dist[i, j]), float(self.dist[j, i]))

    def domains(self) -> dict[str, tuple[float, float]]:
        return {n: self.domain(n) for n in self.variables}


def propagate(net: TemporalNetwork) -> bool:
    """Recompute the closure from scratch (Floyd-Warshall). True iff consistent."""
    n = len(net.names)
    d = np.full((n, n), INF)
    np.fill_diagonal(d, 0.0)
    for c in net.constraints:
        x, y = net.index[c.x], net.index[c.y]
        if c.hi < INF:
            d[y, x] = min(d[y, x], c.hi)
        if c.lo > -INF:
            d[x, y] = min(d[x, y], -c.lo)
    for k in range(n):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    net.dist = d
    net.consistent = not (np.diagonal(d) < 0).any()
    return net.consistent


def bind(net: TemporalNetwork, var: str, value: float) -> bool:
    """Collapse var to [value, value] and propagate."""
    if var not in net:
        raise KeyError(var)
    lo, hi = net.domain(var)
    if not (lo <= value <= hi):
        net.consistent = False
        return False
    return net.add_constraint(DifferenceConstraint(var, ORIGIN, value, value, label=f"bind {var}"))


def check_predicates(
    net: TemporalNetwork,
    assignment: Mapping[str, Any] | None = None,
    registry: Mapping[str, Callable] | None = None,
) -> list[str]:
    """Evaluate predicates whose variables are all bound. Returns violated labels."""
    assignment = assignment or {}
    violated = []
    for p in net.predicates:
        values = {}
        ready = True
        for v in p.variables:
            if v in assignment:
                values[v] = assignment[v]
            elif v in net and net.bound(v):
                values[v] = net.value(v)
            else:
                ready = False
                break
        if not ready:
            continue
        fn = p.evaluator
        if fn is None:
            if registry is None or p.name not in registry:
                raise ConfigurationError(f"unknown predicate {p.name!r}")
            fn = registry[p.name]
        if not fn(values):
            violated.append(p.label or p.name)
    return violated

