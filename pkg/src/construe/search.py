"""
K-best-first search with partial expansion.

Each iteration takes the K best open nodes and asks each for one more
descendant. A node whose descendant stream is exhausted moves to closed.
Ties on the heuristic are broken by creation order.
"""

from __future__ import annotations

import bisect
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Iterator

from .grammar import KnowledgeBase
from .interpretation import Interpretation, InterpretationProblem, covering_ratio, focus_top
from .reasoning import Rejection, get_descendants

log = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    k: int | None = None  # None: derive from the model
    max_nodes: int = 20000
    max_seconds: float = 60.0
    salient: bool = False
    keep_nodes: bool = False


@dataclass
class SearchResult:
    best: Interpretation
    best_id: int
    trace: list[dict]
    stats: dict
    truncated: bool = False
    nodes: dict[int, Interpretation] = field(default_factory=dict)

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec) + "\n")


def default_k(kb: KnowledgeBase) -> int:
    """Largest number of observables any single observable can be abstracted into."""
    if not kb.grammars:
        return 0
    return max((len(kb.abstracted_into(q)) for q in kb.observables), default=0)


def is_goal(I: Interpretation) -> bool:
    return covering_ratio(I) == 1.0 and I.complete


def focus_repr(I: Interpretation) -> list[str]:
    out = []
    for entry in I.focus:
        if entry[0] == "o":
            out.append(f"{entry[1]}:{I.observable_of(entry[1])}")
        else:
            _, hid, fid = entry
            out.append(f"{hid}/f{fid}:{I.hypotheses[hid].state.finding(fid).observable}")
    return out


def node_record(nid: int, parent: int | None, I: Interpretation) -> dict:
    eps = I.heuristic
    return {
        "id": nid,
        "parent": parent,
        "op": I.op,
        "focus": focus_repr(I),
        "heuristic": [round(eps[0], 9), eps[1]],
        "delta": I.delta,
    }


@dataclass(order=True)
class _Entry:
    eps: tuple
    serial: int
    node: Interpretation = field(compare=False)
    cursor: Iterator = field(compare=False, default=None)


def construe(problem: InterpretationProblem, cfg: SearchConfig | None = None) -> SearchResult:
    cfg = cfg or SearchConfig()
    if cfg.salient:
        problem = problem.with_saliency()
    kb = problem.kb
    k = cfg.k if cfg.k is not None else default_k(kb)
    t0 = time.monotonic()
    root = Interpretation(problem)
    trace = [node_record(0, None, root)]
    nodes = {0: root} if cfg.keep_nodes else {}
    stats = {"k": k, "nodes": 1, "expansions": 0, "rejected": 0, "max_open": 1}

    def finish(entry: _Entry, truncated=False) -> SearchResult:
        stats["seconds"] = round(time.monotonic() - t0, 4)
        stats["unintelligible"] = sorted(entry.node.unintelligible)
        trace.append({"result": entry.serial, "truncated": truncated, "stats": stats})
        return SearchResult(entry.node, entry.serial, trace, stats, truncated, nodes)

    root_entry = _Entry(root.heuristic, 0, root, get_descendants(root))
    if k <= 0 or is_goal(root):
        return finish(root_entry)

    open_: list[_Entry] = [root_entry]
    closed: list[_Entry] = []
    serial = 0
    truncated = False
    while open_:
        if serial >= cfg.max_nodes or time.monotonic() - t0 > cfg.max_seconds:
            truncated = True
            log.warning("search budget exhausted after %d nodes", serial)
            break
        batch, open_ = open_[:k], open_[k:]
        fresh = []
        for entry in batch:
            stats["expansions"] += 1
            child = None
            for step in entry.cursor:
                if isinstance(step, Rejection):
                    stats["rejected"] += 1
                    trace.append({
                        "id": None, "parent": entry.serial, "op": step.op,
                        "rejected": step.cause, "detail": step.detail, "delta": step.delta,
                    })
                    continue
                child = step
                break
            if child is None:
                closed.append(entry)
                continue
            serial += 1
            stats["nodes"] += 1
            trace.append(node_record(serial, entry.serial, child))
            if cfg.keep_nodes:
                nodes[serial] = child
            centry = _Entry(child.heuristic, serial, child, get_descendants(child))
            if is_goal(child):
                return finish(centry)
            fresh.append(entry)
            fresh.append(centry)
        for e in fresh:
            bisect.insort(open_, e)
        stats["max_open"] = max(stats["max_open"], len(open_))
        if serial and serial % 1000 == 0:
            log.info("nodes=%d open=%d best=%s", serial, len(open_), open_[0].eps if open_ else None)

    pool = closed + (open_ if truncated else [])
    if not pool:
        pool = [root_entry]
    best = min(pool, key=lambda e: (not e.node.complete, e.eps, focus_top(e.node) is not None, e.serial))
    return finish(best, truncated)


# --------------------------------------------------------------------------
# Trace utilities
# --------------------------------------------------------------------------


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def ancestor_chain(trace: list[dict], node_id: int) -> list[dict]:
    """Records from the root's first child down to node_id."""
    by_id = {r["id"]: r for r in trace if r.get("id") is not None}
    if node_id not in by_id:
        raise KeyError(node_id)
    chain = []
    cur = by_id[node_id]
    while cur["parent"] is not None:
        chain.append(cur)
        cur = by_id[cur["parent"]]
    return chain[::-1]


def path_ops(trace: list[dict], node_id: int) -> list[str]:
    return [r["op"] for r in ancestor_chain(trace, node_id)]


def why_not(trace: list[dict], node_id: int) -> list[dict]:
    """Siblings of each step on the path that were rejected or not followed."""
    chain = ancestor_chain(trace, node_id)
    on_path = {r["id"] for r in chain}
    out = []
    for r in chain:
        parent = r["parent"]
        for s in trace:
            if s.get("parent") != parent or s.get("id") == r["id"] or "result" in s:
                continue
            if s.get("rejected"):
                out.append({"at": parent, "op": s["op"], "cause": s["rejected"], "detail": s["detail"],
                            "delta": s["delta"]})
            elif s.get("id") not in on_path:
                out.append({"at": parent, "op": s["op"], "cause": "not preferred",
                            "detail": f"heuristic {s['heuristic']} vs {r['heuristic']}", "delta": s["delta"]})
    return out


def replay(problem: InterpretationProblem, trace: list[dict], node_id: int, salient: bool = False) -> Interpretation:
    """Re-execute the operations leading to node_id from a fresh root."""
    if salient:
        problem = problem.with_saliency()
    cur = Interpretation(problem)
    for rec in ancestor_chain(trace, node_id):
        for step in get_descendants(cur):
            if isinstance(step, Interpretation) and step.op == rec["op"] and \
                    json.loads(json.dumps(step.delta)) == rec["delta"]:
                cur = step
                break
        else:
            raise ValueError(f"cannot replay step {rec['id']} ({rec['op']})")
    return cur
