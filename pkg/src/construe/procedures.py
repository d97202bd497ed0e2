"""
Registry of named host procedures referenced from the KB: observation
procedures (theta), predicates and detectors.

    theta(view) -> dict            attributes of the hypothesis, plus optional "b"/"e"
    predicate(view, *refs) -> bool
    detector(signal, window, observable) -> list of dicts with "b", "e" and attributes
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class Signal:
    """Sampled base series: strictly increasing integer times, float values."""

    t: np.ndarray
    v: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, float]]) -> "Signal":
        if not pairs:
            return cls(np.zeros(0, dtype=np.int64), np.zeros(0))
        t, v = zip(*pairs)
        return cls(np.asarray(t, dtype=np.int64), np.asarray(v, dtype=float))

    def window(self, b: float, e: float) -> tuple[np.ndarray, np.ndarray]:
        mask = (self.t >= b) & (self.t <= e)
        return self.t[mask], self.v[mask]

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class Item:
    """What a procedure sees of a finding, an observation or the hypothesis."""

    observable: str
    b: float | None
    e: float | None
    values: dict = field(default_factory=dict)
    abstracted: bool = True


@dataclass(frozen=True)
class View:
    hypothesis: str
    findings: tuple[Item, ...]
    signal: Signal | None = None

    def __iter__(self) -> Iterator[Item]:
        return iter(self.findings)


class InsufficientEvidence(ValueError):
    """An observation procedure cannot compute its output from the evidence given."""


class Registry:
    def __init__(self):
        self.thetas: dict[str, Callable] = {}
        self.predicates: dict[str, Callable] = {}
        self.detectors: dict[str, Callable] = {}

    def theta(self, name: str | None = None):
        def deco(fn):
            self.thetas[name or fn.__name__] = fn
            return fn
        return deco

    def predicate(self, name: str | None = None):
        def deco(fn):
            self.predicates[name or fn.__name__] = fn
            return fn
        return deco

    def detector(self, name: str | None = None):
        def deco(fn):
            self.detectors[name or fn.__name__] = fn
            return fn
        return deco

    def copy(self) -> "Registry":
        r = Registry()
        r.thetas.update(self.thetas)
        r.predicates.update(self.predicates)
        r.detectors.update(self.detectors)
        return r

    def knows(self, kind: str, name: str) -> bool:
        return name in {"theta": self.thetas, "pred": self.predicates, "detect": self.detectors}[kind]


DEFAULT = Registry()


@DEFAULT.theta()
def all_present(view: View) -> dict[str, Any]:
    """Conjunction of the findings' presence flags."""
    return {"present": all(bool(f.values.get("present", False)) for f in view.findings)}
