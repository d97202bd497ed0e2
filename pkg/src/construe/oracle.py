"""
Ground truth for tiny instances.

brute_force_solution enumerates every single-level hypothesis (a complete
pattern plus an injective matching onto initial observations) and returns
all exclusive covers of minimum cardinality. phi_reduction builds the
interpretation problem that encodes a set-cover instance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import Observation, mutually_exclusive
from .grammar import GenerationState, KnowledgeBase, enumerate_patterns
from .interpretation import (
    Hypothesis,
    Interpretation,
    InterpretationProblem,
    MatchError,
    match_into,
    sync_constraints,
)
from .procedures import InsufficientEvidence, Item, View
from .temporal import ORIGIN, DifferenceConstraint, propagate

MAX_OBSERVATIONS = 10


class OracleRefusal(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True)
class Candidate:
    grammar: str
    state: GenerationState
    matching: tuple[tuple[int, str], ...]  # (fid, observation id)
    abstracted: frozenset

    @property
    def observable(self) -> str:
        return self.state.grammar.hypothesis


def _between(problem: InterpretationProblem, a: Observation, b: Observation, q: str) -> bool:
    lo, hi = sorted((a, b))
    kb = problem.kb
    return any(kb.is_a(o.observable, q) and lo < o < hi for o in problem.observations)


def _final_checks(problem: InterpretationProblem, state: GenerationState, assign: dict, net) -> bool:
    """Periodicity, observation procedure and predicates on a fully matched pattern."""
    kb = problem.kb
    fs = state.findings
    last: dict[str, int] = {}
    for f in fs:
        if f.observable in state.grammar.periodic and f.observable in last:
            if _between(problem, assign[last[f.observable]], assign[f.fid], f.observable):
                return False
        last[f.observable] = f.fid
    items = {
        f"f{fid}": Item(o.observable, o.t_begin, o.t_end, dict(o.values), state.finding(fid).abstracted)
        for fid, o in assign.items()
    }
    h_values: dict = {}
    if state.theta:
        ordered = tuple(items[f.var] for f in fs)
        try:
            out = dict(kb.registry.thetas[state.theta](View(state.grammar.hypothesis, ordered, problem.signal)))
        except InsufficientEvidence:
            return False
        net = net.copy()
        for k in ("b", "e"):
            if k in out:
                v = out.pop(k)
                if not net.add_constraint(DifferenceConstraint(f"h.{k}", ORIGIN, v, v)):
                    return False
        h_values = out
    items["h"] = Item(state.grammar.hypothesis, net.value("h.b"), net.value("h.e"), h_values, True)
    for c in state.constraints():
        if c[0] != "p":
            continue
        _, name, args, _ = c
        refs = [items[a] for a in args]
        if any(r.b is None or r.e is None for r in refs):
            continue
        if not kb.registry.predicates[name](View(state.grammar.hypothesis, tuple(refs), problem.signal), *refs):
            return False
    return True


def _matchings(problem: InterpretationProblem, state: GenerationState):
    """Injective, temporally consistent assignments of initial observations to findings."""
    kb = problem.kb
    fs = state.findings
    options = [[o for o in problem.observations if kb.is_a(o.observable, f.observable)] for f in fs]
    base = state.network()
    if not propagate(base):
        return

    def rec(i, net, assign, used):
        if i == len(fs):
            if _final_checks(problem, state, assign, net):
                yield dict(assign)
            return
        f = fs[i]
        for o in options[i]:
            if o.id in used:
                continue
            n2 = net.copy()
            n2.add_constraint(DifferenceConstraint(f"{f.var}.b", ORIGIN, o.t_begin, o.t_begin))
            n2.add_constraint(DifferenceConstraint(f"{f.var}.e", ORIGIN, o.t_end, o.t_end))
            if not n2.consistent:
                continue
            assign[f.fid] = o
            yield from rec(i + 1, n2, assign, used | {o.id})
            del assign[f.fid]

    yield from rec(0, base, {}, frozenset())


def enumerate_candidates(problem: InterpretationProblem, max_findings: int) -> list[Candidate]:
    out = []
    for g in problem.kb.grammars.values():
        for pat in enumerate_patterns(g, max_findings):
            st = pat.state
            for assign in _matchings(problem, st):
                matching = tuple((f.fid, assign[f.fid].id) for f in st.findings)
                abstracted = frozenset(assign[f.fid].id for f in st.findings if f.abstracted)
                out.append(Candidate(g.name, st, matching, abstracted))
    return out


def _exclusive(cands: Sequence[Candidate], kb: KnowledgeBase) -> bool:
    for a, b in itertools.combinations(cands, 2):
        rivals = a.observable == b.observable or mutually_exclusive(a.observable, b.observable, kb.relations)
        if rivals and a.abstracted & b.abstracted:
            return False
    return True


def minimal_covers(problem: InterpretationProblem, max_findings: int = 6, max_hypotheses: int = 4) -> list[list[Candidate]]:
    if len(problem.observations) > MAX_OBSERVATIONS:
        raise OracleRefusal(
            f"instance has {len(problem.observations)} observations; the oracle handles at most {MAX_OBSERVATIONS}"
        )
    domain = set(problem.domain) - set(problem.pre_explained)
    if not domain:
        return [[]]
    cands = [c for c in enumerate_candidates(problem, max_findings) if c.abstracted & domain]
    kb = problem.kb
    for size in range(1, max_hypotheses + 1):
        found, keys = [], set()
        for combo in itertools.combinations(cands, size):
            covered = frozenset().union(*(c.abstracted for c in combo))
            if not domain <= covered or not _exclusive(combo, kb):
                continue
            key = frozenset((c.observable, c.abstracted) for c in combo)
            if key in keys:
                continue
            keys.add(key)
            found.append(list(combo))
        if found:
            return found
    return []


def build_interpretation(problem: InterpretationProblem, cover: Iterable[Candidate]) -> Interpretation:
    """Materialize a cover as an Interpretation through the ordinary matching path."""
    I = Interpretation(problem)._child("ORACLE", {})
    I.focus = ()
    for cand in cover:
        I.h_count += 1
        hid = f"h{I.h_count}"
        I.hypotheses[hid] = Hypothesis(hid, cand.state.grammar, cand.state)
        sync_constraints(I, hid)
        for fid, oid in cand.matching:
            match_into(I, hid, fid, oid)
    return I


def brute_force_solution(problem: InterpretationProblem, max_findings: int = 6, max_hypotheses: int = 4) -> list[Interpretation]:
    """All minimal exclusive covers, each as an Interpretation. Empty when none exists."""
    out = []
    for cover in minimal_covers(problem, max_findings, max_hypotheses):
        try:
            out.append(build_interpretation(problem, cover))
        except MatchError:  # pragma: no cover - candidates were checked already
            continue
    return out


# --------------------------------------------------------------------------
# Set cover
# --------------------------------------------------------------------------


def set_cover_min(universe: Iterable, family: Sequence[Iterable]) -> int | None:
    """Smallest number of sets from family whose union is universe, or None."""
    U = frozenset(universe)
    S = [frozenset(s) & U for s in family]
    if not U:
        return 0
    for k in range(1, len(S) + 1):
        for combo in itertools.combinations(S, k):
            if frozenset().union(*combo) == U:
                return k
    return None


def phi_kb_text(universe: Sequence, family: Sequence[Iterable]) -> str:
    pos = {u: i + 1 for i, u in enumerate(sorted(universe))}
    lines = [
        "observable q { process element; attr present : bool; instant; }",
    ]
    for j, s in enumerate(family):
        members = sorted(pos[u] for u in s if u in pos)
        lines.append(f"observable s{j} {{ process cover; attr present : bool; }}")
        if not members:
            continue
        nts = ["H"] + [f"D{k}" for k in range(1, len(members))] + ["Z"]
        prods = []
        for k, t in enumerate(members):
            first = k == 0
            cons = [f"m.t = {t}"]
            if first:
                cons.append("h.b = m.t")
            prods.append(f"    {nts[k]} -> q {nts[k + 1]} {{ abstracted; {'; '.join(cons)} }}")
        prods.append(f"    Z -> lambda {{ abstracted; theta all_present; h.e = prev.t }}")
        lines.append(f"grammar G{j} hypothesizes s{j} {{")
        lines.extend(prods)
        lines.append("}")
    return "\n".join(lines) + "\n"


def phi_reduction(universe: Sequence, family: Sequence[Iterable]) -> InterpretationProblem:
    """Interpretation problem whose minimal covers mirror the minimal set covers of (U, S)."""
    from .dsl import parse_kb

    universe = sorted(set(universe))
    kb = parse_kb(phi_kb_text(universe, family))
    obs = [Observation("q", i + 1, i + 1, {"present": True}) for i in range(len(universe))]
    return InterpretationProblem(kb, obs, abstractable={"q"})
