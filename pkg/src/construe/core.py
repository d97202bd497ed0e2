"""
Domain vocabulary: observables, observations, the generalization and
exclusion relations, and observation sequences indexed by observable.

Time is integer milliseconds everywhere.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from bisect import insort
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Any, Iterable, Mapping

log = logging.getLogger(__name__)


class LookupFailure(KeyError):
    """An identifier that should exist does not."""


class ObservationError(ValueError):
    """Malformed or inadmissible observation input."""


# --------------------------------------------------------------------------
# Attribute domains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf
    unit: str | None = None

    def contains(self, value: Any) -> bool:
        try:
            return self.lo <= float(value) <= self.hi
        except (TypeError, ValueError):
            return False

    def includes(self, other: "Domain") -> bool:
        return isinstance(other, Interval) and self.lo <= other.lo and other.hi <= self.hi

    def __str__(self):
        u = f" {self.unit}" if self.unit else ""
        return f"[{self.lo}, {self.hi}]{u}"


@dataclass(frozen=True)
class Labels:
    values: frozenset

    def contains(self, value: Any) -> bool:
        return value in self.values

    def includes(self, other: "Domain") -> bool:
        return isinstance(other, Labels) and other.values <= self.values

    def __str__(self):
        return "{" + ", ".join(sorted(map(str, self.values))) + "}"


@dataclass(frozen=True)
class Unconstrained:
    def contains(self, value: Any) -> bool:
        return True

    def includes(self, other: "Domain") -> bool:
        return True

    def __str__(self):
        return "any"


BOOL = Labels(frozenset({True, False}))
Domain = Interval | Labels | Unconstrained


# --------------------------------------------------------------------------
# Observables and observations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """A named process type with attributes and a temporal support."""

    id: str
    process: str = "unknown"
    attributes: tuple[tuple[str, Domain], ...] = ()
    instantaneous: bool = False

    def __post_init__(self):
        names = [a for a, _ in self.attributes]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate attribute in observable {self.id}")

    @property
    def attribute_map(self) -> dict[str, Domain]:
        return dict(self.attributes)


@total_ordering
@dataclass(frozen=True)
class Observation:
    """A valued, time-anchored instance of an observable."""

    observable: str
    t_begin: int
    t_end: int
    values: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)
    id: str | None = field(default=None, compare=False)
    abstracts: tuple[str, ...] = field(default=(), compare=False, hash=False)

    def __post_init__(self):
        if self.t_begin > self.t_end:
            raise ObservationError(
                f"{self.observable}: t_begin {self.t_begin} > t_end {self.t_end}"
            )

    def key(self) -> tuple:
        return (self.t_begin, self.t_end, self.observable)

    def __lt__(self, other: "Observation") -> bool:
        return obs_less(self, other)


def obs_less(o1: Observation, o2: Observation) -> bool:
    """Strict order: begin time, then end time, then observable name."""
    return o1.key() < o2.key()


# --------------------------------------------------------------------------
# Relations
# --------------------------------------------------------------------------


class RelationTable:
    """Generalization (is_a) and exclusion relations among observables."""

    def __init__(self, is_a: Iterable[tuple[str, str]] = (), excludes: Iterable[tuple[str, str]] = ()):
        self.is_a: set[tuple[str, str]] = set(is_a)
        self.declared_excludes: set[frozenset] = {frozenset(p) for p in excludes}
        self.excludes: set[frozenset] = set()
        self._general: dict[str, set[str]] = {}
        self.lint: list[str] = []
        self._close()

    def _close(self):
        nodes = {x for p in self.is_a for x in p}
        up: dict[str, set[str]] = {n: {n} for n in nodes}
        changed = True
        while changed:
            changed = False
            for spec, gen in self.is_a:
                new = up[gen] - up[spec]
                if new:
                    up[spec] |= new
                    changed = True
        self._general = up
        # exclusion closure: connected components of the declared pairs
        adj: dict[str, set[str]] = {}
        for pair in self.declared_excludes:
            a, b = tuple(pair) if len(pair) == 2 else (next(iter(pair)),) * 2
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        seen: set[str] = set()
        for start in sorted(adj):
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                n = stack.pop()
                if n in comp:
                    continue
                comp.add(n)
                stack.extend(adj[n] - comp)
            seen |= comp
            members = sorted(comp)
            for i, a in enumerate(members):
                for b in members[i + 1:]:
                    self.excludes.add(frozenset((a, b)))
        extra = self.excludes - self.declared_excludes
        if extra:
            pairs = ", ".join(sorted("/".join(sorted(p)) for p in extra))
            msg = f"exclusion closure adds undeclared pairs: {pairs}"
            self.lint.append(msg)
            log.warning(msg)

    def generalizations(self, q: str) -> set[str]:
        return self._general.get(q, {q})

    def is_a_rel(self, specific: str, general: str) -> bool:
        """Reflexive-transitive generalization test."""
        return specific == general or general in self.generalizations(specific)

    def validate(self, observables: Mapping[str, Observable]) -> list[str]:
        """Attribute-subset and domain-inclusion checks for declared is_a pairs."""
        problems = []
        for spec, gen in sorted(self.is_a):
            if spec not in observables or gen not in observables:
                problems.append(f"is_a {spec} {gen}: unknown observable")
                continue
            sa, ga = observables[spec].attribute_map, observables[gen].attribute_map
            for name, gdom in ga.items():
                if name not in sa:
                    problems.append(f"is_a {spec} {gen}: {spec} lacks attribute {name}")
                elif not gdom.includes(sa[name]):
                    problems.append(f"is_a {spec} {gen}: domain of {name} not included")
        nodes = {x for p in self.is_a for x in p}
        for n in nodes:
            if any(n in self.generalizations(g) for g in self.generalizations(n) - {n}):
                problems.append(f"is_a cycle through {n}")
        return problems


def mutually_exclusive(q1: str, q2: str, rel: RelationTable, known: Iterable[str] | None = None) -> bool:
    if known is not None:
        known = set(known)
        for q in (q1, q2):
            if q not in known:
                raise LookupFailure(q)
    return frozenset((q1, q2)) in rel.excludes and q1 != q2


# --------------------------------------------------------------------------
# Observation sequences
# --------------------------------------------------------------------------


class ObservationSequence:
    """Observations sorted by obs_less, with one q-sequence per observable."""

    def __init__(self, observations: Iterable[Observation] = ()):
        self._all: list[Observation] = []
        self._by_q: dict[str, list[Observation]] = {}
        for o in observations:
            self.insert(o)

    def insert(self, o: Observation) -> None:
        qs = self._by_q.setdefault(o.observable, [])
        for other in qs:
            if not (other.t_end < o.t_begin or o.t_end < other.t_begin):
                raise ObservationError(
                    f"{o.observable} observations overlap: "
                    f"({other.t_begin},{other.t_end}) and ({o.t_begin},{o.t_end})"
                )
        insort(qs, o)
        insort(self._all, o)

    def __iter__(self):
        return iter(self._all)

    def __len__(self):
        return len(self._all)

    def __getitem__(self, i):
        return self._all[i]

    def q_sequence(self, q: str) -> list[Observation]:
        return list(self._by_q.get(q, []))

    def observables(self) -> list[str]:
        return sorted(self._by_q)


def q_succ(o: Observation, seq: ObservationSequence) -> Observation | None:
    qs = seq._by_q.get(o.observable, [])
    for i, x in enumerate(qs):
        if x == o:
            return qs[i + 1] if i + 1 < len(qs) else None
    raise LookupFailure(f"observation {o.key()} not in sequence")


# --------------------------------------------------------------------------
# Ingestion
# --------------------------------------------------------------------------

_MMSS = re.compile(r"^(\d+):(\d{1,2})(?:\.(\d{1,3}))?$")


def parse_time(text: Any) -> int:
    """Integer ms, or an "mm:ss.fff" string."""
    if isinstance(text, bool):
        raise ObservationError(f"bad time value {text!r}")
    if isinstance(text, int):
        return text
    if isinstance(text, float):
        if not text.is_integer():
            raise ObservationError(f"fractional millisecond time {text}")
        return int(text)
    s = str(text).strip()
    m = _MMSS.match(s)
    if m:
        frac = (m.group(3) or "0").ljust(3, "0")
        return (int(m.group(1)) * 60 + int(m.group(2))) * 1000 + int(frac)
    try:
        return int(s)
    except ValueError:
        raise ObservationError(f"bad time value {text!r}") from None


def parse_value(text: str) -> Any:
    s = text.strip()
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _parse_attrs(text: str) -> dict[str, Any]:
    values = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise ObservationError(f"attribute without value: {part!r}")
        k, v = part.split("=", 1)
        values[k.strip()] = parse_value(v)
    return values


def read_observations_csv(text: str) -> list[Observation]:
    """Rows: t_begin,t_end,observable[,attr=value;...[,id[,abstracts]]]."""
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if row[0].strip() == "t_begin":
            continue
        if len(row) < 3:
            raise ObservationError(f"line {lineno}: expected at least 3 columns")
        try:
            tb, te = parse_time(row[0]), parse_time(row[1])
            values = _parse_attrs(row[3]) if len(row) > 3 else {}
            oid = row[4].strip() or None if len(row) > 4 else None
            abstracts = tuple(row[5].replace("|", " ").split()) if len(row) > 5 else ()
            out.append(Observation(row[2].strip(), tb, te, values, oid, abstracts))
        except ObservationError as e:
            raise ObservationError(f"line {lineno}: {e}") from None
    return out


def read_observations_json(text: str) -> list[Observation]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ObservationError(f"invalid JSON: {e}") from None
    if not isinstance(data, list):
        raise ObservationError("expected a JSON array of observations")
    out = []
    for i, item in enumerate(data):
        try:
            out.append(
                Observation(
                    item["observable"],
                    parse_time(item["t_begin"]),
                    parse_time(item.get("t_end", item["t_begin"])),
                    dict(item.get("values", {})),
                    item.get("id"),
                    tuple(item.get("abstracts", ())),
                )
            )
        except (KeyError, TypeError) as e:
            raise ObservationError(f"item {i}: missing or bad field {e}") from None
    return out


def read_observations(text: str) -> list[Observation]:
    return read_observations_json(text) if text.lstrip().startswith("[") else read_observations_csv(text)


def observations_to_json(observations: Iterable[Observation]) -> list[dict]:
    out = []
    for o in observations:
        d = {"observable": o.observable, "t_begin": o.t_begin, "t_end": o.t_end, "values": dict(o.values)}
        if o.id:
            d["id"] = o.id
        if o.abstracts:
            d["abstracts"] = list(o.abstracts)
        out.append(d)
    return out


def read_series_csv(text: str) -> list[tuple[int, float]]:
    """Rows: t,value. A header row is skipped."""
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        try:
            out.append((parse_time(row[0]), float(row[1])))
        except (ObservationError, ValueError, IndexError):
            if lineno == 1:
                continue
            raise ObservationError(f"line {lineno}: bad sample row {row!r}") from None
    ts = [t for t, _ in out]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ObservationError("sample times must be strictly increasing")
    return out
