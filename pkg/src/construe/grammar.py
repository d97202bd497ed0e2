"""
Abstraction grammars and incremental pattern generation.

A GenerationState is the pattern under construction together with the
applied production list L and its boundary nonterminals B and E. Extending
back prepends a production (X -> q B), extending forward appends one
(E -> q X). The resolved constraint set of a state is a pure function of L,
so it only grows as L grows at either end.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

from .core import Observable, RelationTable
from .procedures import Registry
from .temporal import INF, ORIGIN, DifferenceConstraint, PredicateConstraint, TemporalNetwork


class GenerationError(ValueError):
    """Precondition violation in pattern generation."""


# --------------------------------------------------------------------------
# Grammar structure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeRef:
    ref: str  # "h", "m", "prev" or an observable id
    which: Literal["b", "e"]

    def __str__(self):
        return f"{self.ref}.{self.which}"


@dataclass(frozen=True)
class DiffSpec:
    """lo <= x - y <= hi; a None side stands for the origin."""

    x: TimeRef | None
    y: TimeRef | None
    lo: float
    hi: float
    text: str = ""
    line: int = 0

    def refs(self) -> set[str]:
        return {r.ref for r in (self.x, self.y) if r is not None}


@dataclass(frozen=True)
class PredSpec:
    name: str
    args: tuple[str, ...]
    text: str = ""
    line: int = 0

    def refs(self) -> set[str]:
        return set(self.args)


@dataclass(frozen=True)
class Production:
    lhs: str
    terminal: str | None
    rhs: str | None
    abstracted: bool = True
    theta: str | None = None
    constraints: tuple[DiffSpec | PredSpec, ...] = ()
    line: int = 0
    col: int = 0

    @property
    def is_lambda(self) -> bool:
        return self.terminal is None

    def self_refs(self) -> set[str]:
        return {"m", self.terminal} if self.terminal else set()

    @property
    def relates_prior(self) -> bool:
        """True if some difference constraint ties the new finding to another finding."""
        own = self.self_refs()
        for c in self.constraints:
            if isinstance(c, DiffSpec) and c.x is not None and c.y is not None:
                refs = [c.x.ref, c.y.ref]
                if any(r in own for r in refs) and any(r not in own and r != "h" for r in refs):
                    return True
        return False

    def __str__(self):
        right = "lambda" if self.is_lambda else " ".join(filter(None, (self.terminal, self.rhs)))
        return f"{self.lhs} -> {right}"


@dataclass(frozen=True)
class AbstractionGrammar:
    name: str
    hypothesis: str
    productions: tuple[Production, ...]
    salient: tuple[str, ...] = ()
    detector: str | None = None
    instants: frozenset = frozenset()
    line: int = 0

    @property
    def start(self) -> str:
        return self.productions[0].lhs

    @property
    def nonterminals(self) -> set[str]:
        return {p.lhs for p in self.productions} | {p.rhs for p in self.productions if p.rhs}

    @property
    def terminals(self) -> set[str]:
        return {p.terminal for p in self.productions if p.terminal}

    @property
    def abstracted_terminals(self) -> set[str]:
        return {p.terminal for p in self.productions if p.terminal and p.abstracted}

    def by_lhs(self, nt: str) -> list[Production]:
        return [p for p in self.productions if p.lhs == nt]

    def by_rhs(self, nt: str) -> list[Production]:
        return [p for p in self.productions if p.rhs == nt]

    @property
    def periodic(self) -> frozenset:
        """Observables emitted by productions that lie on a nonterminal cycle."""
        reach: dict[str, set[str]] = {n: set() for n in self.nonterminals}
        for p in self.productions:
            if p.rhs:
                reach[p.lhs].add(p.rhs)
        changed = True
        while changed:
            changed = False
            for n in reach:
                extra = set().union(*(reach[m] for m in reach[n])) - reach[n] if reach[n] else set()
                if extra:
                    reach[n] |= extra
                    changed = True
        return frozenset(
            p.terminal for p in self.productions if p.terminal and p.rhs and p.lhs in reach[p.rhs]
        )

    def preceding_terminals(self) -> dict[str, set[str]]:
        """For each nonterminal, terminals that may be emitted before reaching it."""
        pre: dict[str, set[str]] = {n: set() for n in self.nonterminals}
        changed = True
        while changed:
            changed = False
            for p in self.productions:
                if p.rhs is None:
                    continue
                add = pre[p.lhs] | ({p.terminal} if p.terminal else set())
                if not add <= pre[p.rhs]:
                    pre[p.rhs] |= add
                    changed = True
        return pre


class KnowledgeBase:
    """Observables, relations and grammars, plus the derived abstraction relation."""

    def __init__(
        self,
        observables: dict[str, Observable],
        relations: RelationTable,
        grammars: dict[str, AbstractionGrammar],
        registry: Registry,
    ):
        self.observables = observables
        self.relations = relations
        self.grammars = grammars
        self.registry = registry
        self.abstraction: set[tuple[str, str]] = {
            (t, g.hypothesis) for g in grammars.values() for t in g.abstracted_terminals
        }

    def is_a(self, specific: str, general: str) -> bool:
        return self.relations.is_a_rel(specific, general)

    def abstractable(self, q: str) -> bool:
        """q belongs to domain of the abstraction relation (through is_a)."""
        return any(self.is_a(q, t) for t, _ in self.abstraction)

    def abstracted_into(self, q: str) -> set[str]:
        return {h for t, h in self.abstraction if self.is_a(q, t)}

    def instantaneous(self, q: str) -> bool:
        return q in self.observables and self.observables[q].instantaneous

    def abstraction_closure(self) -> set[tuple[str, str]]:
        closure = set(self.abstraction)
        changed = True
        while changed:
            changed = False
            for a, b in list(closure):
                for c, d in list(closure):
                    if b == c and (a, d) not in closure:
                        closure.add((a, d))
                        changed = True
        return closure


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    fid: int
    observable: str
    abstracted: bool
    production: Production

    @property
    def role(self) -> str:
        return "abstracted" if self.abstracted else "environment"

    @property
    def var(self) -> str:
        return f"f{self.fid}"


@dataclass(frozen=True)
class GenerationState:
    grammar: AbstractionGrammar
    L: tuple[tuple[Production, int | None], ...] = ()
    B: str | None = None
    E: str | None = None  # None once a terminal-only or lambda production closed the pattern
    next_fid: int = 0
    findings_by_id: dict = field(default_factory=dict, compare=False, hash=False)

    # -- views ----------------------------------------------------------------

    @property
    def findings(self) -> list[Finding]:
        return [self.findings_by_id[fid] for _, fid in self.L if fid is not None]

    def finding(self, fid: int) -> Finding:
        return self.findings_by_id[fid]

    @property
    def closed(self) -> bool:
        return self.E is None

    @property
    def complete(self) -> bool:
        """Closed at the end and extended back to the start symbol."""
        return self.closed and self.B == self.grammar.start

    @property
    def theta(self) -> str | None:
        for p, _ in reversed(self.L):
            if p.theta:
                return p.theta
        return None

    def terminal_string(self) -> tuple[str, ...]:
        return tuple(f.observable for f in self.findings)

    def neighbours(self, fid: int) -> tuple[Finding | None, Finding | None]:
        """Previous and next finding of the same observable, in L order."""
        fs = self.findings
        idx = next(i for i, f in enumerate(fs) if f.fid == fid)
        q = fs[idx].observable
        prev = next((f for f in reversed(fs[:idx]) if f.observable == q), None)
        nxt = next((f for f in fs[idx + 1:] if f.observable == q), None)
        return prev, nxt

    def is_periodic(self, fid: int) -> bool:
        return self.findings_by_id[fid].observable in self.grammar.periodic

    # -- constraints -----------------------------------------------------

    def _resolve(self, ref: str, pos: int) -> str | None:
        """Map a reference at L position pos to "h", "f<id>" or None if absent."""
        if ref == "h":
            return "h"
        prod, fid = self.L[pos]
        if ref == "m":
            return f"f{fid}" if fid is not None else None
        if ref == "prev":
            for p, f in reversed(self.L[:pos]):
                if f is not None:
                    return f"f{f}"
            return None
        for p, f in reversed(self.L[: pos + 1]):
            if f is not None and self.findings_by_id[f].observable == ref:
                return f"f{f}"
        return None

    def constraints(self) -> frozenset:
        """Resolved constraint tuples over symbolic variables h.b, h.e, f<id>.b, f<id>.e.

        ("d", x, y, lo, hi, label) means lo <= x - y <= hi.
        ("p", name, args, label) is a predicate over resolved references.
        """
        g = self.grammar
        out = set()
        inst_h = g.hypothesis in g.instants
        out.add(("d", "h.e", "h.b", 0, 0 if inst_h else INF, "duration h"))
        seen: list[Finding] = []
        last_of: dict[str, Finding] = {}
        for pos, (prod, fid) in enumerate(self.L):
            for c in prod.constraints:
                label = f"{g.name}:{c.line}: {c.text}" if c.text else f"{g.name}:{prod}"
                if isinstance(c, DiffSpec):
                    x = self._resolve(c.x.ref, pos) if c.x else ORIGIN
                    y = self._resolve(c.y.ref, pos) if c.y else ORIGIN
                    if x is None or y is None:
                        continue
                    xs = f"{x}.{c.x.which}" if c.x else ORIGIN
                    ys = f"{y}.{c.y.which}" if c.y else ORIGIN
                    out.add(("d", xs, ys, c.lo, c.hi, label))
                else:
                    args = tuple(self._resolve(a, pos) for a in c.args)
                    if None in args:
                        continue
                    out.add(("p", c.name, args, label))
            if fid is None:
                continue
            f = self.findings_by_id[fid]
            v = f.var
            inst = f.observable in g.instants
            out.add(("d", f"{v}.e", f"{v}.b", 0, 0 if inst else INF, f"duration {f.observable}"))
            if f.abstracted:
                out.add(("d", f"{v}.b", "h.b", 0, INF, f"covering {f.observable} begin"))
                out.add(("d", "h.e", f"{v}.e", 0, INF, f"covering {f.observable} end"))
            if not prod.relates_prior:
                for o in seen:
                    out.add(("d", f"{v}.b", f"{o.var}.b", 0, INF, f"hereafter {o.observable}<{f.observable}"))
            prior = last_of.get(f.observable)
            if prior is not None:
                out.add(("d", f"{v}.b", f"{prior.var}.e", 1, INF, f"non-overlap {f.observable}"))
            seen.append(f)
            last_of[f.observable] = f
        return frozenset(out)

    def network(self) -> TemporalNetwork:
        """Standalone network for the pattern as generated so far."""
        net = TemporalNetwork(["h.b", "h.e"])
        for f in self.findings:
            net.add_variables([f"{f.var}.b", f"{f.var}.e"])
        for c in sorted(self.constraints(), key=repr):
            if c[0] == "d":
                net.add_constraint(DifferenceConstraint(c[1], c[2], c[3], c[4], c[5]))
            else:
                net.add_predicate(PredicateConstraint(c[1], tuple(c[2]), None, c[3]))
        return net

    # -- extension -----------------------------------------------------------

    def _with(self, prod: Production, at_begin: bool) -> "GenerationState":
        fby = dict(self.findings_by_id)
        fid = None
        nxt = self.next_fid
        if not prod.is_lambda:
            fid = nxt
            nxt += 1
            fby[fid] = Finding(fid, prod.terminal, prod.abstracted, prod)
        if at_begin:
            return replace(self, L=((prod, fid),) + self.L, B=prod.lhs, next_fid=nxt, findings_by_id=fby)
        return replace(self, L=self.L + ((prod, fid),), E=prod.rhs, next_fid=nxt, findings_by_id=fby)

    def new_finding_id(self, other: "GenerationState") -> int | None:
        """Id of the finding present here but not in an ancestor state."""
        diff = set(self.findings_by_id) - set(other.findings_by_id)
        return diff.pop() if diff else None


def init_pattern(
    grammar: AbstractionGrammar,
    production: Production | None = None,
    direction: Literal["from_abduce", "from_predict"] = "from_predict",
) -> GenerationState:
    if direction == "from_predict":
        return GenerationState(grammar, (), grammar.start, grammar.start, 0, {})
    if production is None or production.is_lambda:
        raise GenerationError("abduction needs a production with a terminal")
    if not production.abstracted:
        raise GenerationError(f"{production}: terminal is environmental, cannot seed a hypothesis")
    base = GenerationState(grammar, (), production.lhs, production.lhs, 0, {})
    st = base._with(production, at_begin=False)
    return replace(st, B=production.lhs)


def extend_back(state: GenerationState) -> list[GenerationState]:
    if state.B == state.grammar.start:
        raise GenerationError("pattern already starts at the start symbol")
    return [state._with(p, at_begin=True) for p in state.grammar.by_rhs(state.B)]


def extend_forward(state: GenerationState) -> list[GenerationState]:
    if state.closed:
        return []
    return [state._with(p, at_begin=False) for p in state.grammar.by_lhs(state.E)]


@dataclass(frozen=True)
class PatternFinding:
    fid: int
    observable: str
    role: str
    temporal: tuple[str, str]


@dataclass(frozen=True)
class AbstractionPattern:
    hypothesis: str
    findings: tuple[PatternFinding, ...]
    constraints: TemporalNetwork = field(compare=False, hash=False)
    theta: str | None = None
    state: GenerationState | None = field(default=None, compare=False, hash=False)

    def terminal_string(self) -> tuple[str, ...]:
        return tuple(f.observable for f in self.findings)

    def to_json(self) -> dict:
        net = self.constraints
        return {
            "hypothesis": self.hypothesis,
            "theta": self.theta,
            "findings": [
                {"id": f"f{f.fid}", "observable": f.observable, "role": f.role} for f in self.findings
            ],
            "constraints": [
                _fmt_constraint(c) for c in net.constraints
            ] + [f"pred {p.name}({', '.join(p.variables)})" for p in net.predicates],
        }


def _fmt_constraint(c: DifferenceConstraint) -> str:
    lo = "" if c.lo == -INF else f"{_num(c.lo)} <= "
    hi = "" if c.hi == INF else f" <= {_num(c.hi)}"
    y = "" if c.y == ORIGIN else f" - {c.y}"
    return f"{lo}{c.x}{y}{hi}"


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else str(x)


def to_pattern(state: GenerationState) -> AbstractionPattern:
    fs = tuple(
        PatternFinding(f.fid, f.observable, f.role, (f"{f.var}.b", f"{f.var}.e")) for f in state.findings
    )
    return AbstractionPattern(state.grammar.hypothesis, fs, state.network(), state.theta, state)


def enumerate_patterns(grammar: AbstractionGrammar, max_findings: int) -> list[AbstractionPattern]:
    """All complete patterns with at most max_findings findings, shortest first."""
    if max_findings < 1:
        return []
    out = []
    queue = deque([init_pattern(grammar)])
    while queue:
        st = queue.popleft()
        if st.complete:
            if st.findings:
                out.append(to_pattern(st))
            continue
        for nxt in extend_forward(st):
            if len(nxt.findings) <= max_findings:
                queue.append(nxt)
    return out
