"""
Interpretations as immutable search nodes.

An Interpretation owns one temporal network holding the variables of every
hypothesis it contains (h<k>.b, h<k>.e, h<k>/f<i>.b, ...). Children copy the
network before touching it, so a parent is never modified by expansion.
"""

from __future__ import annotations

import hashlib
import logging
import pickle
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

from .core import Observation, mutually_exclusive
from .grammar import AbstractionGrammar, GenerationState, KnowledgeBase
from .procedures import InsufficientEvidence, Item, Signal, View
from .temporal import ORIGIN, DifferenceConstraint, PredicateConstraint, TemporalNetwork, check_predicates

log = logging.getLogger(__name__)


class MatchError(Exception):
    """A tentative step is inconsistent; cause is one of CAUSES."""

    CAUSES = (
        "type", "cycle", "injectivity", "periodicity", "covering",
        "constraint", "predicate", "exclusivity", "theta",
    )

    def __init__(self, cause: str, detail: str = ""):
        assert cause in self.CAUSES, cause
        self.cause, self.detail = cause, detail
        super().__init__(f"{cause}: {detail}")


# --------------------------------------------------------------------------
# Problem
# --------------------------------------------------------------------------


class InterpretationProblem:
    """Initial observations plus an abstraction model."""

    def __init__(
        self,
        kb: KnowledgeBase,
        observations: Iterable[Observation],
        signal: Signal | None = None,
        salient_times: Sequence[int] = (),
        abstractable: Iterable[str] | None = None,
    ):
        from .core import ObservationSequence

        seq = ObservationSequence(observations)  # sorts and rejects same-observable overlap
        obs, used = [], set()
        for i, o in enumerate(seq, 1):
            oid = o.id or f"o{i}"
            if oid in used:
                raise ValueError(f"duplicate observation id {oid}")
            used.add(oid)
            obs.append(replace(o, id=oid))
        self.kb = kb
        self.observations: tuple[Observation, ...] = tuple(obs)
        self.by_id = {o.id: o for o in obs}
        self.signal = signal
        self.salient_times = tuple(salient_times)
        for o in obs:
            if o.observable not in kb.observables:
                raise ValueError(f"observation {o.id}: unknown observable {o.observable!r}")
        self.pre_explained = frozenset(x for o in obs for x in o.abstracts if x in self.by_id)
        # observables that call for an explanation; by default those some grammar abstracts
        need = kb.abstractable if abstractable is None else set(abstractable).__contains__
        self.domain = tuple(o.id for o in obs if need(o.observable))
        self.focus_order = self._focus_order(salient=False)

    def _focus_order(self, salient: bool) -> tuple[str, ...]:
        ids = [o.id for o in self.observations]
        if not salient:
            return tuple(ids)
        sal_q = {s for g in self.kb.grammars.values() for s in g.salient}

        def rank(oid):
            o = self.by_id[oid]
            near = any(o.t_begin - 50 <= t <= o.t_end + 50 for t in self.salient_times)
            return 0 if (o.observable in sal_q or near) else 1

        return tuple(sorted(ids, key=lambda i: (rank(i), ids.index(i))))

    def with_saliency(self) -> "InterpretationProblem":
        p = InterpretationProblem.__new__(InterpretationProblem)
        p.__dict__.update(self.__dict__)
        p.focus_order = self._focus_order(salient=True)
        return p


# --------------------------------------------------------------------------
# Hypotheses and interpretations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Hypothesis:
    id: str
    grammar: AbstractionGrammar
    state: GenerationState
    matches: dict = field(default_factory=dict, hash=False)  # fid -> observation id
    values: dict = field(default_factory=dict, hash=False)
    detected: bool = False
    theta_done: bool = False
    applied: frozenset = frozenset()  # resolved constraints already in the network

    @property
    def observable(self) -> str:
        return self.grammar.hypothesis

    @property
    def complete(self) -> bool:
        if self.detected:
            return True
        st = self.state
        return st.complete and all(f.fid in self.matches for f in st.findings)

    def match_of(self, fid: int) -> str | None:
        return self.matches.get(fid)


def fvar(hid: str, fid: int, which: str) -> str:
    return f"{hid}/f{fid}.{which}"


def _global_var(hid: str, sym: str) -> str:
    if sym == ORIGIN:
        return ORIGIN
    if sym.startswith("h."):
        return f"{hid}{sym[1:]}"
    return f"{hid}/{sym}"


class Interpretation:
    """Immutable snapshot. Build children with _child(); never mutate in place."""

    __slots__ = (
        "problem", "hypotheses", "focus", "unintelligible", "net", "assignment",
        "h_count", "op", "delta", "_eps",
    )

    def __init__(self, problem: InterpretationProblem):
        self.problem = problem
        self.hypotheses: dict[str, Hypothesis] = {}
        self.focus: tuple = ()
        self.unintelligible: frozenset = frozenset()
        self.net = TemporalNetwork()
        self.assignment: dict[str, Any] = {}
        self.h_count = 0
        self.op = "INIT"
        self.delta: dict = {}
        self._eps = None
        nxt = next_unexplained(self)
        if nxt is not None:
            self.focus = (("o", nxt),)

    def _child(self, op: str, delta: dict, copy_net: bool = True) -> "Interpretation":
        c = Interpretation.__new__(Interpretation)
        c.problem = self.problem
        c.hypotheses = dict(self.hypotheses)
        c.focus = self.focus
        c.unintelligible = self.unintelligible
        c.net = self.net.copy() if copy_net else self.net
        c.assignment = dict(self.assignment)
        c.h_count = self.h_count
        c.op = op
        c.delta = delta
        c._eps = None
        return c

    # -- observations --------------------------------------------------------

    def is_hypothesis(self, oid: str) -> bool:
        return oid in self.hypotheses

    def observable_of(self, oid: str) -> str:
        if oid in self.hypotheses:
            return self.hypotheses[oid].observable
        return self.problem.by_id[oid].observable

    def times(self, oid: str) -> tuple[tuple[float, float], tuple[float, float]]:
        if oid in self.hypotheses:
            return self.net.domain(f"{oid}.b"), self.net.domain(f"{oid}.e")
        o = self.problem.by_id[oid]
        return (o.t_begin, o.t_begin), (o.t_end, o.t_end)

    def sort_key(self, oid: str) -> tuple:
        (b, _), (e, _) = self.times(oid)
        return (b, e, self.observable_of(oid), oid)

    def observation_ids(self) -> list[str]:
        return [o.id for o in self.problem.observations] + list(self.hypotheses)

    # -- heuristic -----------------------------------------------------------

    @property
    def heuristic(self) -> tuple[float, int]:
        if self._eps is None:
            self._eps = (1.0 - covering_ratio(self), len(self.hypotheses))
        return self._eps

    @property
    def complete(self) -> bool:
        return all(h.complete for h in self.hypotheses.values())

    def fingerprint(self) -> str:
        """Digest of the full content; used to check snapshot isolation."""
        payload = (
            sorted((k, repr(h.state.L), sorted(h.matches.items()), sorted(h.values.items(), key=repr),
                    h.detected, h.theta_done, sorted(h.applied, key=repr)) for k, h in self.hypotheses.items()),
            self.focus, sorted(self.unintelligible), self.net.names, self.net.dist.tobytes(),
            [repr(c) for c in self.net.constraints], [p.label for p in self.net.predicates],
            sorted((k, repr(v)) for k, v in self.assignment.items()), self.h_count, self.op, repr(self.delta),
        )
        return hashlib.sha256(pickle.dumps(payload)).hexdigest()

    # -- focus ---------------------------------------------------------------

    def focus_top(self):
        return focus_top(self)


# focus stack helpers; entries are ("o", oid) or ("f", hid, fid)


def focus_top(I: Interpretation):
    return I.focus[-1] if I.focus else None


def focus_push(focus: tuple, entry) -> tuple:
    return focus + (entry,)


def focus_pop(focus: tuple) -> tuple:
    return focus[:-1]


# --------------------------------------------------------------------------
# Evidence, coverage, alternatives
# --------------------------------------------------------------------------


def evidence_sets(hyps: Hypothesis | Iterable[Hypothesis]) -> dict[str, set[str]]:
    if isinstance(hyps, Hypothesis):
        hyps = [hyps]
    ab, env = set(), set()
    for h in hyps:
        for fid, oid in h.matches.items():
            (ab if h.state.finding(fid).abstracted else env).add(oid)
    return {"abstracted_by": ab, "environment_of": env, "evidence_of": ab | env}


def explained(I: Interpretation) -> set[str]:
    return evidence_sets(I.hypotheses.values())["abstracted_by"] | set(I.problem.pre_explained)


def covering_ratio(I: Interpretation, problem: InterpretationProblem | None = None) -> float:
    problem = problem or I.problem
    dom = problem.domain
    if not dom:
        log.debug("no abstractable observations: covering ratio is 1.0")
        return 1.0
    ex = explained(I)
    return sum(1 for o in dom if o in ex) / len(dom)


def check_alternative(h1: Hypothesis, h2: Hypothesis, rel) -> bool:
    """Hypotheses competing for the same evidence. Two hypotheses of one
    observable count as alternatives too, as a q-sequence cannot overlap itself."""
    if h1.id == h2.id:
        return False
    if h1.observable != h2.observable and not mutually_exclusive(h1.observable, h2.observable, rel):
        return False
    return bool(evidence_sets(h1)["abstracted_by"] & evidence_sets(h2)["abstracted_by"])


def next_unexplained(I: Interpretation) -> str | None:
    ex = explained(I)
    for oid in I.problem.focus_order:
        if oid not in ex and oid not in I.unintelligible:
            return oid
    return None


# --------------------------------------------------------------------------
# Network bookkeeping
# --------------------------------------------------------------------------


def _predicate(I: Interpretation, hid: str, c: tuple) -> PredicateConstraint:
    _, name, args, label = c
    fn = I.problem.kb.registry.predicates[name]
    bases = [hid if a == "h" else f"{hid}/{a}" for a in args]
    variables = tuple(v for b in bases for v in (f"{b}.b", f"{b}.e", f"{b}:values"))
    signal = I.problem.signal
    hyp_obs = I.hypotheses[hid].observable

    def evaluate(values):
        items = []
        for b in bases:
            obs, vals, ab = values[f"{b}:values"]
            items.append(Item(obs, values[f"{b}.b"], values[f"{b}.e"], dict(vals), ab))
        return bool(fn(View(hyp_obs, tuple(items), signal), *items))

    return PredicateConstraint(name, variables, evaluate, f"{hid} {label}")


def sync_constraints(I: Interpretation, hid: str) -> None:
    """Push constraints of the hypothesis' current state not yet in I.net (I is a fresh child)."""
    h = I.hypotheses[hid]
    I.net.add_variables([f"{hid}.b", f"{hid}.e"])
    for f in h.state.findings:
        I.net.add_variables([fvar(hid, f.fid, "b"), fvar(hid, f.fid, "e")])
    cons = h.state.constraints()
    new = cons - h.applied
    for c in sorted(new, key=repr):
        if c[0] == "d":
            I.net.add_constraint(
                DifferenceConstraint(_global_var(hid, c[1]), _global_var(hid, c[2]), c[3], c[4], f"{hid} {c[5]}")
            )
        else:
            I.net.add_predicate(_predicate(I, hid, c))
    I.hypotheses[hid] = replace(h, applied=cons)


def _depends_on(I: Interpretation, oid: str, hid: str, seen=None) -> bool:
    """True if observation oid is hid or is (transitively) supported by hid."""
    if oid == hid:
        return True
    h = I.hypotheses.get(oid)
    if h is None:
        return False
    seen = seen or set()
    if oid in seen:
        return False
    seen.add(oid)
    return any(_depends_on(I, x, hid, seen) for x in h.matches.values())


def _between(I: Interpretation, a: str, b: str, q: str) -> list[str]:
    """Observations of (a specialization of) q strictly between a and b."""
    ka, kb_ = I.sort_key(a), I.sort_key(b)
    lo, hi = min(ka, kb_), max(ka, kb_)
    kb = I.problem.kb
    return [
        x for x in I.observation_ids()
        if x not in (a, b) and kb.is_a(I.observable_of(x), q) and lo < I.sort_key(x) < hi
    ]


def periodicity_breach(I: Interpretation, hyp: Hypothesis, fid: int, oid: str) -> str | None:
    if not hyp.state.is_periodic(fid):
        return None
    q = hyp.state.finding(fid).observable
    for nb in hyp.state.neighbours(fid):
        if nb is None or nb.fid not in hyp.matches:
            continue
        other = hyp.matches[nb.fid]
        skipped = _between(I, other, oid, q)
        if skipped:
            return f"{oid} and {other} are not consecutive ({', '.join(skipped)} in between)"
    return None


def _item_for(I: Interpretation, oid: str, abstracted: bool):
    if oid in I.hypotheses:
        h = I.hypotheses[oid]
        if not h.theta_done:
            return None
        return (h.observable, dict(h.values), abstracted)
    o = I.problem.by_id[oid]
    return (o.observable, dict(o.values), abstracted)


def _refresh_values(I: Interpretation) -> None:
    for hid, h in I.hypotheses.items():
        for fid, oid in h.matches.items():
            key = f"{hid}/f{fid}:values"
            if key not in I.assignment:
                item = _item_for(I, oid, h.state.finding(fid).abstracted)
                if item is not None:
                    I.assignment[key] = item


def settle(I: Interpretation) -> None:
    """Run observation procedures of hypotheses whose evidence is complete. I is a fresh child."""
    changed = True
    while changed:
        changed = False
        for hid in list(I.hypotheses):
            h = I.hypotheses[hid]
            if h.theta_done or not h.complete:
                continue
            if any(x in I.hypotheses and not I.hypotheses[x].theta_done for x in h.matches.values()):
                continue
            values = dict(h.values)
            name = h.state.theta
            if name:
                items = []
                for f in h.state.findings:
                    oid = h.matches[f.fid]
                    obs, vals, ab = _item_for(I, oid, f.abstracted)
                    b = I.net.value(fvar(hid, f.fid, "b"))
                    e = I.net.value(fvar(hid, f.fid, "e"))
                    items.append(Item(obs, b, e, vals, ab))
                fn = I.problem.kb.registry.thetas[name]
                try:
                    out = dict(fn(View(h.observable, tuple(items), I.problem.signal)))
                except InsufficientEvidence as e:
                    raise MatchError("theta", f"{name}: {e}") from None
                for k, var in (("b", f"{hid}.b"), ("e", f"{hid}.e")):
                    if k in out:
                        t = out.pop(k)
                        lo, hi = I.net.domain(var)
                        if not (lo <= t <= hi) or not I.net.add_constraint(
                            DifferenceConstraint(var, ORIGIN, t, t, f"{hid} theta {name}")
                        ):
                            raise MatchError("theta", f"{name} places {var}={t} outside [{lo}, {hi}]")
                values.update(out)
            I.hypotheses[hid] = replace(h, values=values, theta_done=True)
            I.assignment[f"{hid}:values"] = (h.observable, values, True)
            changed = True
        _refresh_values(I)


def check_consistency(I: Interpretation) -> None:
    if not I.net.consistent:
        raise MatchError("constraint", "temporal network inconsistent")
    bad = check_predicates(I.net, I.assignment)
    if bad:
        raise MatchError("predicate", "; ".join(bad))


def check_exclusive(I: Interpretation, hid: str) -> None:
    h = I.hypotheses[hid]
    rel = I.problem.kb.relations
    for other in I.hypotheses.values():
        if check_alternative(h, other, rel):
            raise MatchError("exclusivity", f"{hid} ({h.observable}) and {other.id} ({other.observable})")


# --------------------------------------------------------------------------
# Matching
# --------------------------------------------------------------------------


def match_into(I: Interpretation, hid: str, fid: int, oid: str) -> None:
    """Extend the matching of a fresh child in place, or raise MatchError."""
    h = I.hypotheses[hid]
    f = h.state.finding(fid)
    kb = I.problem.kb
    if fid in h.matches:
        raise MatchError("injectivity", f"finding f{fid} already matched")
    q = I.observable_of(oid)
    if not kb.is_a(q, f.observable):
        raise MatchError("type", f"{q} is not a {f.observable}")
    if _depends_on(I, oid, hid):
        raise MatchError("cycle", f"{oid} is supported by {hid}")
    if oid in h.matches.values():
        raise MatchError("injectivity", f"{oid} already matched in {hid}")
    why = periodicity_breach(I, h, fid, oid)
    if why:
        raise MatchError("periodicity", why)
    (ob_lo, ob_hi), (oe_lo, oe_hi) = I.times(oid)
    if f.abstracted:
        hb_lo, _ = I.net.domain(f"{hid}.b")
        _, he_hi = I.net.domain(f"{hid}.e")
        if hb_lo > ob_hi or oe_lo > he_hi:
            raise MatchError("covering", f"{oid} falls outside the span of {hid}")
    fb, fe = fvar(hid, fid, "b"), fvar(hid, fid, "e")
    windows = (I.net.domain(fb), I.net.domain(fe))
    if oid in I.hypotheses:
        I.net.add_constraint(DifferenceConstraint(fb, f"{oid}.b", 0, 0, f"match {fb}"))
        I.net.add_constraint(DifferenceConstraint(fe, f"{oid}.e", 0, 0, f"match {fe}"))
    else:
        I.net.add_constraint(DifferenceConstraint(fb, ORIGIN, ob_lo, ob_lo, f"match {fb}"))
        I.net.add_constraint(DifferenceConstraint(fe, ORIGIN, oe_lo, oe_lo, f"match {fe}"))
    if not I.net.consistent:
        raise MatchError(
            "constraint",
            f"{oid} ({ob_lo},{oe_lo}) outside window b{_fmt(windows[0])} e{_fmt(windows[1])} of {hid}/f{fid}",
        )
    I.hypotheses[hid] = replace(h, matches={**h.matches, fid: oid})
    if f.abstracted:
        check_exclusive(I, hid)
    _refresh_values(I)
    settle(I)
    check_consistency(I)


def _fmt(iv):
    lo, hi = iv
    f = lambda x: str(int(x)) if x not in (float("inf"), float("-inf")) else ("inf" if x > 0 else "-inf")
    return f"[{f(lo)},{f(hi)}]"


def match(I: Interpretation, hid: str, fid: int, oid: str) -> Interpretation:
    """New snapshot with m ↢ o added; raises MatchError when inconsistent."""
    child = I._child("MATCH", {"match": [f"{hid}/f{fid}", oid]})
    match_into(child, hid, fid, oid)
    return child


# --------------------------------------------------------------------------
# Validation and export
# --------------------------------------------------------------------------


def validate(I: Interpretation) -> list[str]:
    """Independent sweep over an interpretation; returns violations."""
    out = []
    kb = I.problem.kb
    if not I.net.consistent:
        out.append("temporal network inconsistent")
    for hid, h in I.hypotheses.items():
        targets = list(h.matches.values())
        if len(targets) != len(set(targets)):
            out.append(f"{hid}: matching not injective")
        ev = evidence_sets(h)
        if ev["abstracted_by"] & ev["environment_of"]:
            out.append(f"{hid}: abstracted and environment evidence overlap")
        for fid, oid in h.matches.items():
            f = h.state.finding(fid)
            if not kb.is_a(I.observable_of(oid), f.observable):
                out.append(f"{hid}/f{fid}: {oid} has wrong observable")
            (ob, _), (oe, _) = I.times(oid)
            if f.abstracted:
                hb, _ = I.net.domain(f"{hid}.b")
                _, he = I.net.domain(f"{hid}.e")
                if hb > ob or oe > he:
                    out.append(f"{hid}/f{fid}: temporal covering violated by {oid}")
        for a, b in _periodic_pairs(h):
            if a in h.matches and b in h.matches:
                skipped = _between(I, h.matches[a], h.matches[b], h.state.finding(a).observable)
                if skipped:
                    out.append(f"periodicity: {hid} binds {h.matches[a]} then {h.matches[b]} skipping {skipped}")
    hs = list(I.hypotheses.values())
    for i, a in enumerate(hs):
        for b in hs[i + 1:]:
            if check_alternative(a, b, kb.relations):
                out.append(f"alternative hypotheses {a.id} and {b.id}")
    try:
        bad = check_predicates(I.net, I.assignment)
    except Exception as e:  # pragma: no cover - configuration problems surface here
        bad = [str(e)]
    out.extend(f"predicate violated: {b}" for b in bad)
    return out


def _periodic_pairs(h: Hypothesis):
    fs = h.state.findings
    last: dict[str, int] = {}
    for f in fs:
        if f.observable in last and f.observable in h.grammar.periodic:
            yield last[f.observable], f.fid
        last[f.observable] = f.fid


def _num(x: float):
    if x in (float("inf"), float("-inf")):
        return None
    return int(x) if float(x).is_integer() else x


def to_json(I: Interpretation) -> dict:
    hyps = []
    for hid, h in I.hypotheses.items():
        b, e = I.net.domain(f"{hid}.b"), I.net.domain(f"{hid}.e")
        ev = evidence_sets(h)
        hyps.append({
            "id": hid,
            "observable": h.observable,
            "grammar": h.grammar.name,
            "t_begin": [_num(b[0]), _num(b[1])],
            "t_end": [_num(e[0]), _num(e[1])],
            "values": {k: (float(v) if hasattr(v, "item") else v) for k, v in h.values.items()},
            "complete": h.complete,
            "detected": h.detected,
            "derivation": [[h.grammar.productions.index(p), fid] for p, fid in h.state.L],
            "bounds": [h.state.B, h.state.E],
            "findings": [
                {
                    "id": f"{hid}/f{f.fid}",
                    "observable": f.observable,
                    "role": f.role,
                    "match": h.matches.get(f.fid),
                    "t_begin": [_num(x) for x in I.net.domain(fvar(hid, f.fid, "b"))],
                    "t_end": [_num(x) for x in I.net.domain(fvar(hid, f.fid, "e"))],
                }
                for f in h.state.findings
            ],
            "abstracted_by": sorted(ev["abstracted_by"]),
            "environment_of": sorted(ev["environment_of"]),
        })
    ratio = covering_ratio(I)
    return {
        "covering_ratio": ratio,
        "complexity": len(I.hypotheses),
        "hypotheses": hyps,
        "matching": sorted(
            [f"{hid}/f{fid}", oid] for hid, h in I.hypotheses.items() for fid, oid in h.matches.items()
        ),
        "unintelligible": sorted(I.unintelligible - explained(I)),
    }


def from_json(problem: InterpretationProblem, data: dict) -> Interpretation:
    """Rebuild an interpretation printed by to_json, re-running every check on the way."""
    from .grammar import Finding

    I = Interpretation(problem)._child("LOAD", {})
    I.focus = ()
    kb = problem.kb
    hyps = data["hypotheses"]
    for hd in hyps:
        g = kb.grammars[hd["grammar"]]
        hid = hd["id"]
        L, fby = [], {}
        for idx, fid in hd.get("derivation", []):
            prod = g.productions[idx]
            L.append((prod, fid))
            if fid is not None:
                fby[fid] = Finding(fid, prod.terminal, prod.abstracted, prod)
        B, E = hd.get("bounds", [g.start, g.start])
        nxt = max(fby, default=-1) + 1
        st = GenerationState(g, tuple(L), B, E, nxt, fby)
        if hd.get("detected"):
            b, e = hd["t_begin"][0], hd["t_end"][0]
            I.hypotheses[hid] = Hypothesis(hid, g, st, values=dict(hd["values"]), detected=True, theta_done=True)
            I.net.add_variables([f"{hid}.b", f"{hid}.e"])
            I.net.add_constraint(DifferenceConstraint(f"{hid}.b", ORIGIN, b, b, f"{hid} detected"))
            I.net.add_constraint(DifferenceConstraint(f"{hid}.e", ORIGIN, e, e, f"{hid} detected"))
            I.assignment[f"{hid}:values"] = (g.hypothesis, dict(hd["values"]), True)
        else:
            I.hypotheses[hid] = Hypothesis(hid, g, st)
            sync_constraints(I, hid)
        n = int(hid[1:]) if hid[1:].isdigit() else 0
        I.h_count = max(I.h_count, n)
    for fkey, oid in data["matching"]:
        hid, f = fkey.split("/")
        match_into(I, hid, int(f[1:]), oid)
    return I
