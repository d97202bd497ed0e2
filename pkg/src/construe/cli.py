"""
construe command line.

Exit codes: 0 ok, 1 unreadable input or unknown node, 2 invalid KB,
3 search budget exhausted (the best interpretation is still printed).
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from .core import ObservationError, Observation, read_observations, read_series_csv
from .dsl import KBError, parse_kb
from .grammar import enumerate_patterns
from .interpretation import InterpretationProblem, MatchError, from_json, to_json, validate
from .procedures import Signal
from .search import SearchConfig, ancestor_chain, construe, read_trace, why_not

KB_DIR = Path(__file__).parent / "kb"


def kb_dir() -> Path:
    return Path(os.environ.get("CONSTRUE_KB_PATH", KB_DIR))


def resolve_kb(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    for cand in (kb_dir() / name, kb_dir() / f"{name}.kb"):
        if cand.exists():
            return cand
    raise click.ClickException(f"KB file not found: {name}")


def load_kb(names):
    if not names:
        raise _Exit(2, "no KB given (use --kb, names resolve against CONSTRUE_KB_PATH)")
    try:
        sources = [(str(p), p.read_text()) for p in map(resolve_kb, names)]
        return parse_kb(sources)
    except KBError as e:
        raise _Exit(2, f"KB error: {e}")
    except click.ClickException as e:
        raise _Exit(2, e.message)


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        self.code, self.message = code, message


def emit(data, pretty: bool, render=None):
    if pretty and render is not None:
        click.echo(render(data))
    else:
        click.echo(json.dumps(data, indent=2 if pretty else None, default=str))


def _load_problem(kb, observations, series, base, base_attr, salient):
    signal, obs = None, []
    try:
        if series:
            pairs = read_series_csv(Path(series).read_text())
            signal = Signal.from_pairs(pairs)
        if observations:
            obs = read_observations(Path(observations).read_text())
        elif series:
            obs = [Observation(base, t, t, {base_attr: v}) for t, v in pairs]
        salient_times = ()
        if salient and signal is not None:
            from .ecg import detect_salient

            salient_times = tuple(detect_salient(signal))
        return InterpretationProblem(kb, obs, signal, salient_times)
    except (ObservationError, ValueError, OSError) as e:
        raise _Exit(1, f"input error: {e}")


def _render_interpretation(d: dict) -> str:
    lines = [f"coverage {d['covering_ratio']:.3f}  complexity {d['complexity']}"
             + ("  [truncated]" if d.get("truncated") else "")]
    for h in d["hypotheses"]:
        vals = " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in h["values"].items())
        lines.append(f"  {h['id']} {h['observable']} b={h['t_begin']} e={h['t_end']} {vals}".rstrip())
        for f in h["findings"]:
            lines.append(f"      {f['id']} {f['observable']:<8} {f['role']:<11} <- {f['match']}")
    if d["unintelligible"]:
        lines.append("  unintelligible: " + ", ".join(d["unintelligible"]))
    return "\n".join(lines)


def _run(fn):
    try:
        code = fn()
    except _Exit as e:
        click.echo(e.message, err=True)
        sys.exit(e.code)
    sys.exit(code or 0)


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress to stderr.")
def main(verbose):
    """Abductive interpretation of time series with abstraction grammars."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--kb", "kbs", multiple=True, help="KB file or name in CONSTRUE_KB_PATH (repeatable).")
@click.option("--observations", "-o", type=click.Path(), help="Observations, CSV or JSON.")
@click.option("--series", "-s", type=click.Path(), help="Base signal as t,value CSV.")
@click.option("--base", default="sample", show_default=True, help="Observable for samples when only a series is given.")
@click.option("--base-attr", default="v", show_default=True)
@click.option("--k", type=int, default=None, help="Nodes expanded per iteration (default: derived from the KB).")
@click.option("--max-nodes", type=int, default=20000, show_default=True)
@click.option("--max-seconds", type=float, default=60.0, show_default=True)
@click.option("--salient", is_flag=True, help="Seed attention with steep-slope points first.")
@click.option("--trace", type=click.Path(), help="Write the search trace as JSON lines.")
@click.option("--pretty", is_flag=True)
def interpret(kbs, observations, series, base, base_attr, k, max_nodes, max_seconds, salient, trace, pretty):
    """Interpret observations and print the best interpretation."""

    def go():
        if not observations and not series:
            raise _Exit(1, "give --observations and/or --series")
        kb = load_kb(kbs)
        problem = _load_problem(kb, observations, series, base, base_attr, salient)
        res = construe(problem, SearchConfig(k=k, max_nodes=max_nodes, max_seconds=max_seconds, salient=salient))
        if trace:
            res.write_trace(trace)
        out = to_json(res.best)
        out.update(node=res.best_id, truncated=res.truncated, stats=res.stats)
        emit(out, pretty, _render_interpretation)
        return 3 if res.truncated else 0

    _run(go)


@main.command()
@click.option("--kb", "kbs", multiple=True)
@click.argument("grammar")
@click.option("--max-findings", type=int, default=6, show_default=True)
@click.option("--pretty", is_flag=True)
def patterns(kbs, grammar, max_findings, pretty):
    """Enumerate the complete patterns of a grammar."""

    def go():
        kb = load_kb(kbs)
        if grammar not in kb.grammars:
            raise _Exit(1, f"unknown grammar {grammar!r}; known: {', '.join(kb.grammars)}")
        pats = [p.to_json() for p in enumerate_patterns(kb.grammars[grammar], max_findings)]

        def render(ps):
            return "\n".join(
                f"{i + 1}. {' '.join(f['observable'] + ('' if f['role'] == 'abstracted' else '*') for f in p['findings'])}"
                + "".join(f"\n     {c}" for c in p["constraints"])
                for i, p in enumerate(ps)
            ) or "(no patterns)"

        emit(pats, pretty, render)

    _run(go)


@main.command()
@click.option("--kb", "kbs", multiple=True)
@click.option("--observations", "-o", type=click.Path(), required=True)
@click.option("--max-findings", type=int, default=6, show_default=True)
@click.option("--max-hypotheses", type=int, default=4, show_default=True)
@click.option("--pretty", is_flag=True)
def oracle(kbs, observations, max_findings, max_hypotheses, pretty):
    """Exhaustively enumerate minimal exclusive covers of a tiny instance."""
    from .oracle import OracleRefusal, brute_force_solution

    def go():
        kb = load_kb(kbs)
        problem = _load_problem(kb, observations, None, "sample", "v", False)
        try:
            sols = brute_force_solution(problem, max_findings, max_hypotheses)
        except OracleRefusal as e:
            raise _Exit(1, str(e))
        emit({"covers": [to_json(s) for s in sols],
              "min_size": len(sols[0].hypotheses) if sols else None}, pretty)

    _run(go)


def _parse_sets(text: str) -> list[list[int]]:
    return [[int(x) for x in part.split(",") if x.strip()] for part in text.split(";")] if text.strip() else []


@main.command()
@click.option("--universe", "-u", required=True, help="Comma separated elements, e.g. 1,2,3")
@click.option("--sets", "-S", "sets_", default="", help="Semicolon separated sets, e.g. '1,2;2,3;3'")
@click.option("--k", type=int, default=None)
@click.option("--emit-ip", is_flag=True, help="Print the reduced KB and observations instead.")
def setcover(universe, sets_, k, emit_ip):
    """Reduce a set-cover instance and compare construe, the oracle and direct brute force."""
    from .core import observations_to_json
    from .oracle import brute_force_solution, phi_kb_text, phi_reduction, set_cover_min

    def go():
        try:
            U = [int(x) for x in universe.split(",") if x.strip()]
            S = _parse_sets(sets_)
        except ValueError as e:
            raise _Exit(1, f"input error: {e}")
        problem = phi_reduction(U, S)
        if emit_ip:
            emit({"kb": phi_kb_text(sorted(set(U)), S), "observations": observations_to_json(problem.observations)}, False)
            return 0
        direct = set_cover_min(U, S)
        sols = brute_force_solution(problem, max_findings=max(len(U), 1), max_hypotheses=max(len(S), 1))
        res = construe(problem, SearchConfig(k=k))
        best = res.best
        from .interpretation import covering_ratio

        emit({
            "set_cover": direct,
            "oracle": len(sols[0].hypotheses) if sols else None,
            "construe": len(best.hypotheses) if covering_ratio(best) == 1.0 else None,
            "construe_coverage": covering_ratio(best),
        }, False)
        return 3 if res.truncated else 0

    _run(go)


@main.command()
@click.argument("trace_path", type=click.Path())
@click.argument("node_id", type=int)
@click.option("--why-not", "show_rejected", is_flag=True, help="Also list rejected or unexplored sibling branches.")
@click.option("--pretty", is_flag=True)
def explain(trace_path, node_id, show_rejected, pretty):
    """Print the chain of reasoning steps leading to a node of a trace."""

    def go():
        try:
            trace = read_trace(trace_path)
            chain = ancestor_chain(trace, node_id)
        except (OSError, ValueError) as e:
            raise _Exit(1, f"cannot read trace: {e}")
        except KeyError:
            raise _Exit(1, f"unknown node id {node_id}")
        out = {"node": node_id, "chain": [
            {"id": r["id"], "op": r["op"], "heuristic": r["heuristic"], "focus": r["focus"], "delta": r["delta"]}
            for r in chain
        ]}
        if show_rejected:
            out["rejected"] = why_not(trace, node_id)

        def render(d):
            lines = [f"{i + 1:>2}. [{r['id']}] {r['op']:<8} eps={r['heuristic']} {_delta_text(r['delta'])}"
                     for i, r in enumerate(d["chain"])] or ["(root)"]
            for w in d.get("rejected", []):
                lines.append(f"    x at {w['at']}: {w['op']} {w['cause']}: {w['detail']}")
            return "\n".join(lines)

        emit(out, pretty, render)

    _run(go)


def _delta_text(delta: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in delta.items() if v is not None)


@main.command(name="validate")
@click.option("--kb", "kbs", multiple=True)
@click.option("--observations", "-o", type=click.Path())
@click.option("--series", "-s", type=click.Path())
@click.option("--base", default="sample", show_default=True)
@click.option("--base-attr", default="v", show_default=True)
@click.argument("interpretation_path", type=click.Path())
def validate_cmd(kbs, observations, series, base, base_attr, interpretation_path):
    """Rebuild an interpretation printed by `interpret` and re-check it."""

    def go():
        kb = load_kb(kbs)
        problem = _load_problem(kb, observations, series, base, base_attr, False)
        try:
            data = json.loads(Path(interpretation_path).read_text())
        except (OSError, ValueError) as e:
            raise _Exit(1, f"cannot read interpretation: {e}")
        try:
            I = from_json(problem, data)
            violations = validate(I)
        except MatchError as e:
            violations = [str(e)]
        except (KeyError, ValueError) as e:
            violations = [f"malformed interpretation: {e}"]
        emit({"violations": violations}, False)
        return 1 if violations else 0

    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
