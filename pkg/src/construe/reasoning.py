"""
Reasoning modes. Each generator yields child interpretations, or Rejection
records for tentative steps that failed a consistency check, so the search
can keep a trace of why branches were dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

from .grammar import extend_back, extend_forward, init_pattern
from .interpretation import (
    Hypothesis,
    Interpretation,
    MatchError,
    check_consistency,
    explained,
    focus_pop,
    focus_push,
    focus_top,
    fvar,
    match_into,
    next_unexplained,
    settle,
    sync_constraints,
)
from .temporal import ORIGIN, DifferenceConstraint


@dataclass(frozen=True)
class Rejection:
    op: str
    cause: str
    detail: str
    delta: dict


Step = Interpretation | Rejection


def get_descendants(I: Interpretation) -> Iterator[Step]:
    """Lazily yield descendants of I according to its focus of attention."""
    top = focus_top(I)
    if top is None:
        return
    if top[0] == "o":
        oid = top[1]
        if oid in I.hypotheses:
            yield from iter_deduce(I, oid)
        yield from iter_abduce(I, oid)
        yield advance(I, oid)
    else:
        yield from iter_subsume(I, top)
        yield from iter_predict(I, top)


def _ok(steps) -> list[Interpretation]:
    return [s for s in steps if isinstance(s, Interpretation)]


def abduce(I, o):
    return _ok(iter_abduce(I, o))


def deduce(I, hid):
    return _ok(iter_deduce(I, hid))


def subsume(I, m):
    return _ok(iter_subsume(I, m))


def predict(I, m):
    return _ok(iter_predict(I, m))


# --------------------------------------------------------------------------


def iter_abduce(I: Interpretation, oid: str) -> Iterator[Step]:
    if oid in I.hypotheses and not I.hypotheses[oid].complete:
        return
    kb = I.problem.kb
    q = I.observable_of(oid)
    for g in kb.grammars.values():
        for p in g.productions:
            if not (p.terminal and p.abstracted and kb.is_a(q, p.terminal)):
                continue
            hid = f"h{I.h_count + 1}"
            delta = {
                "hypothesis": hid, "observable": g.hypothesis, "grammar": g.name,
                "production": str(p), "match": [f"{hid}/f0", oid],
            }
            child = I._child("ABDUCE", delta)
            child.h_count += 1
            child.hypotheses[hid] = Hypothesis(hid, g, init_pattern(g, p, "from_abduce"))
            try:
                sync_constraints(child, hid)
                check_consistency(child)
                match_into(child, hid, 0, oid)
            except MatchError as e:
                yield Rejection("ABDUCE", e.cause, e.detail, delta)
                continue
            child.focus = focus_push(focus_pop(child.focus), ("o", hid))
            yield child


def iter_deduce(I: Interpretation, hid: str) -> Iterator[Step]:
    h = I.hypotheses[hid]
    if h.detected:
        return
    st = h.state
    backward = st.B != st.grammar.start
    nexts = extend_back(st) if backward else extend_forward(st)
    for ns in nexts:
        fid = ns.new_finding_id(st)
        prod = ns.L[0][0] if backward else ns.L[-1][0]
        delta = {
            "hypothesis": hid, "production": str(prod), "direction": "back" if backward else "forward",
            "finding": f"{hid}/f{fid}" if fid is not None else None,
            "observable": prod.terminal,
        }
        child = I._child("DEDUCE", delta)
        child.hypotheses[hid] = replace(h, state=ns)
        try:
            sync_constraints(child, hid)
            check_consistency(child)
            settle(child)
            check_consistency(child)
        except MatchError as e:
            yield Rejection("DEDUCE", e.cause, e.detail, delta)
            continue
        if fid is not None:
            child.focus = focus_push(child.focus, ("f", hid, fid))
        yield child


def _overlaps(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def iter_subsume(I: Interpretation, entry) -> Iterator[Step]:
    _, hid, fid = entry
    h = I.hypotheses[hid]
    f = h.state.finding(fid)
    kb = I.problem.kb
    wb, we = I.net.domain(fvar(hid, fid, "b")), I.net.domain(fvar(hid, fid, "e"))
    cands = []
    for x in I.observation_ids():
        if x == hid or not kb.is_a(I.observable_of(x), f.observable):
            continue
        xb, xe = I.times(x)
        if _overlaps(xb, wb) and _overlaps(xe, we):
            cands.append(x)
    for x in sorted(cands, key=I.sort_key):
        delta = {"match": [f"{hid}/f{fid}", x]}
        child = I._child("SUBSUME", delta)
        try:
            match_into(child, hid, fid, x)
        except MatchError as e:
            yield Rejection("SUBSUME", e.cause, e.detail, delta)
            continue
        child.focus = focus_pop(child.focus)
        yield child


def iter_predict(I: Interpretation, entry) -> Iterator[Step]:
    _, hid, fid = entry
    f = I.hypotheses[hid].state.finding(fid)
    kb = I.problem.kb
    for g in kb.grammars.values():
        if not kb.is_a(g.hypothesis, f.observable):
            continue
        if g.detector:
            yield from _predict_detected(I, hid, fid, g)
            continue
        nid = f"h{I.h_count + 1}"
        delta = {"hypothesis": nid, "observable": g.hypothesis, "grammar": g.name,
                 "match": [f"{hid}/f{fid}", nid], "detected": False}
        child = I._child("PREDICT", delta)
        child.h_count += 1
        child.hypotheses[nid] = Hypothesis(nid, g, init_pattern(g))
        try:
            sync_constraints(child, nid)
            match_into(child, hid, fid, nid)
        except MatchError as e:
            yield Rejection("PREDICT", e.cause, e.detail, delta)
            continue
        child.focus = focus_push(focus_pop(child.focus), ("o", nid))
        yield child


def _predict_detected(I: Interpretation, hid: str, fid: int, g) -> Iterator[Step]:
    signal = I.problem.signal
    if signal is None or len(signal) == 0:
        return
    lo = max(I.net.domain(fvar(hid, fid, "b"))[0], float(signal.t[0]))
    hi = min(I.net.domain(fvar(hid, fid, "e"))[1], float(signal.t[-1]))
    if lo > hi:
        return
    detector = I.problem.kb.registry.detectors[g.detector]
    for cand in detector(signal, (lo, hi), g.hypothesis):
        cand = dict(cand)
        b, e = int(cand.pop("b")), int(cand.pop("e"))
        nid = f"h{I.h_count + 1}"
        delta = {"hypothesis": nid, "observable": g.hypothesis, "grammar": g.name,
                 "match": [f"{hid}/f{fid}", nid], "detected": True, "t_begin": b, "t_end": e}
        child = I._child("PREDICT", delta)
        child.h_count += 1
        child.hypotheses[nid] = Hypothesis(nid, g, init_pattern(g), values=cand, detected=True, theta_done=True)
        child.net.add_variables([f"{nid}.b", f"{nid}.e"])
        child.net.add_constraint(DifferenceConstraint(f"{nid}.b", ORIGIN, b, b, f"{nid} detected"))
        child.net.add_constraint(DifferenceConstraint(f"{nid}.e", ORIGIN, e, e, f"{nid} detected"))
        child.assignment[f"{nid}:values"] = (g.hypothesis, cand, True)
        try:
            match_into(child, hid, fid, nid)
        except MatchError as e_:
            yield Rejection("PREDICT", e_.cause, e_.detail, delta)
            continue
        child.focus = focus_push(focus_pop(child.focus), ("o", nid))
        yield child


def advance(I: Interpretation, oid: str) -> Step:
    h = I.hypotheses.get(oid)
    if h is not None and not h.complete:
        return Rejection("ADVANCE", "incomplete", f"{oid} cannot be completed once out of focus", {"popped": oid})
    child = I._child("ADVANCE", {}, copy_net=False)
    child.focus = focus_pop(I.focus)
    unintelligible = h is None and oid not in explained(I)
    if unintelligible:
        child.unintelligible = I.unintelligible | {oid}
    pushed = None
    if not child.focus:
        pushed = next_unexplained(child)
        if pushed is not None:
            child.focus = (("o", pushed),)
    child.delta = {"popped": oid, "unintelligible": unintelligible, "pushed": pushed}
    return child
