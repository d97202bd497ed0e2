"""
Parser for the knowledge-base language.

    observable QRS { process heart; attr amplitude : [0, 5000] uV; }
    observable N { process heart; instant; }
    isa N beat;
    excludes VB VT;
    grammar normal hypothesizes N salient QRS {
        H -> Pw D  { abstracted; h.b = Pw.b; 50 <= Pw.e - Pw.b <= 120 }
        D -> QRS E { abstracted; 100 <= QRS.b - Pw.b <= 210 }
        E -> Tw    { abstracted; theta my_proc; pred my_check(Tw, QRS) }
    }

Times are in ms; a number may carry an "ms" or "s" suffix.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable

from .core import BOOL, Interval, Labels, Observable, RelationTable, Unconstrained
from .grammar import AbstractionGrammar, DiffSpec, KnowledgeBase, PredSpec, Production, TimeRef
from .procedures import DEFAULT, Registry


class KBError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0, source: str = "<kb>"):
        self.message, self.line, self.col, self.source = message, line, col, source
        super().__init__(f"{source}:{line}:{col}: {message}")


class KBSyntaxError(KBError):
    pass


class KBSemanticError(KBError):
    pass


KEYWORDS = {
    "observable", "process", "attr", "instant", "isa", "excludes", "grammar", "hypothesizes",
    "salient", "detect", "lambda", "abstracted", "environment", "theta", "pred", "any", "bool",
}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<num>\d+(\.\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>->|<=|>=|==|[{}()\[\];:,.=<>+\-*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, source: str = "<kb>") -> list[Tok]:
    toks, line, start, pos = [], 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise KBSyntaxError(f"unexpected character {text[pos]!r}", line, pos - start + 1, source)
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            t = m.group()
            if kind == "id" and t in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, t, line, m.start() - start + 1))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, source: str):
        self.toks = tokenize(text, source)
        self.i = 0
        self.source = source
        self.observables: list[tuple[Observable, Tok]] = []
        self.isa: list[tuple[str, str, Tok]] = []
        self.excludes: list[tuple[str, str, Tok]] = []
        self.grammars: list[tuple[dict, Tok]] = []

    # -- token helpers ----------------------------------------------------------

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Tok | None = None) -> KBSyntaxError:
        tok = tok or self.tok
        found = tok.text or "end of input"
        return KBSyntaxError(f"{msg}, found {found!r}", tok.line, tok.col, self.source)

    def accept(self, text: str) -> Tok | None:
        if self.tok.text == text and self.tok.kind in ("kw", "op"):
            self.i += 1
            return self.toks[self.i - 1]
        return None

    def expect(self, text: str) -> Tok:
        t = self.accept(text)
        if t is None:
            raise self.error(f"expected {text!r}")
        return t

    def ident(self, what: str = "identifier") -> Tok:
        if self.tok.kind != "id":
            raise self.error(f"expected {what}")
        self.i += 1
        return self.toks[self.i - 1]

    # -- grammar ----------------------------------------------------------------

    def parse(self):
        while self.tok.kind != "eof":
            if self.tok.text == "observable":
                self.observable()
            elif self.tok.text in ("isa", "excludes"):
                self.relation()
            elif self.tok.text == "grammar":
                self.grammar()
            else:
                raise self.error("expected 'observable', 'isa', 'excludes' or 'grammar'")
        return self

    def observable(self):
        start = self.expect("observable")
        name = self.ident("observable name")
        self.expect("{")
        self.expect("process")
        process = self.ident("process name").text
        self.expect(";")
        attrs, instant = [], False
        while self.accept("attr"):
            an = self.ident("attribute name").text
            self.expect(":")
            attrs.append((an, self.domain()))
            self.expect(";")
        if self.accept("instant"):
            instant = True
            self.expect(";")
        self.expect("}")
        try:
            obs = Observable(name.text, process, tuple(attrs), instant)
        except ValueError as e:
            raise KBSemanticError(str(e), start.line, start.col, self.source) from None
        self.observables.append((obs, name))

    def number(self) -> float:
        sign = -1.0 if self.accept("-") else 1.0
        if self.tok.kind == "id" and self.tok.text == "inf":
            self.i += 1
            return sign * math.inf
        if self.tok.kind != "num":
            raise self.error("expected number")
        v = float(self.tok.text)
        self.i += 1
        if self.tok.kind == "id" and self.tok.text in ("ms", "s"):
            v *= 1000.0 if self.tok.text == "s" else 1.0
            self.i += 1
        return sign * v

    def domain(self):
        if self.accept("["):
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            unit = None
            if self.tok.kind == "id":
                unit = self.ident().text
            if lo > hi:
                raise self.error("empty interval domain")
            return Interval(lo, hi, unit)
        if self.accept("{"):
            labels = [self.label()]
            while self.accept(","):
                labels.append(self.label())
            self.expect("}")
            return Labels(frozenset(labels))
        if self.accept("bool"):
            return BOOL
        if self.accept("any"):
            return Unconstrained()
        raise self.error("expected attribute domain")

    def label(self):
        t = self.tok
        if t.kind in ("id", "num") or t.text in ("+", "-"):
            self.i += 1
            if t.text in ("true", "false"):
                return t.text == "true"
            return t.text
        raise self.error("expected label")

    def relation(self):
        kw = self.tok
        self.i += 1
        a, b = self.ident("observable"), self.ident("observable")
        self.expect(";")
        (self.isa if kw.text == "isa" else self.excludes).append((a.text, b.text, a))

    def grammar(self):
        start = self.expect("grammar")
        name = self.ident("grammar name")
        self.expect("hypothesizes")
        hyp = self.ident("observable name")
        salient, detector = [], None
        if self.accept("salient"):
            salient.append(self.ident("observable name"))
            while self.tok.kind == "id":
                salient.append(self.ident())
        if self.accept("detect"):
            detector = self.ident("detector name")
        self.expect("{")
        prods = []
        while not self.accept("}"):
            prods.append(self.production())
        if not prods:
            raise self.error("grammar needs at least one production", start)
        self.grammars.append(
            (dict(name=name, hyp=hyp, salient=salient, detector=detector, prods=prods), start)
        )

    def production(self):
        lhs = self.ident("nonterminal")
        self.expect("->")
        if self.accept("lambda"):
            terminal, rhs = None, None
        else:
            terminal = self.ident("terminal observable")
            rhs = self.ident() if self.tok.kind == "id" else None
        self.expect("{")
        if self.accept("abstracted"):
            abstracted = True
        elif self.accept("environment"):
            abstracted = False
        else:
            raise self.error("expected 'abstracted' or 'environment'")
        theta, constraints = None, []
        while self.accept(";"):
            if self.tok.text == "}":
                break
            if self.accept("theta"):
                if theta is not None:
                    raise self.error("theta given twice")
                theta = self.ident("procedure name")
            else:
                constraints.extend(self.constraint())
        self.expect("}")
        return dict(lhs=lhs, terminal=terminal, rhs=rhs, abstracted=abstracted, theta=theta, constraints=constraints)

    def constraint(self):
        first = self.tok
        if self.accept("pred"):
            name = self.ident("predicate name")
            self.expect("(")
            args = [self.ident("reference")]
            while self.accept(","):
                args.append(self.ident("reference"))
            self.expect(")")
            text = f"pred {name.text}({', '.join(a.text for a in args)})"
            return [(PredSpec(name.text, tuple(a.text for a in args), text, first.line), name, args)]
        exprs, cmps = [self.expr()], []
        while self.tok.text in ("<=", "<", ">=", ">", "=", "=="):
            cmps.append(self.tok.text)
            self.i += 1
            exprs.append(self.expr())
        if not cmps:
            raise self.error("expected comparison operator")
        out = []
        for (a, b), cmp in zip(zip(exprs, exprs[1:]), cmps):
            out.append(self.linear(a, cmp, b, first))
        text = self.source_text(first)
        return [(_retext(spec, text), tok, refs) for spec, tok, refs in out]

    def source_text(self, first: Tok) -> str:
        j = self.toks.index(first)
        return " ".join(t.text for t in self.toks[j:self.i])

    def expr(self):
        """Linear expression: returns (coeffs {TimeRef: c}, const, ref tokens)."""
        coeffs: dict[TimeRef, float] = {}
        const = 0.0
        toks = []
        sign = -1.0 if self.accept("-") else 1.0
        while True:
            if self.tok.kind == "num" or (self.tok.kind == "id" and self.tok.text == "inf"):
                const += sign * self.number()
            elif self.tok.kind == "id":
                ref = self.ident()
                self.expect(".")
                which = self.ident("time field (b, e, t)")
                w = {"b": "b", "start": "b", "t": "b", "e": "e", "end": "e"}.get(which.text)
                if w is None:
                    raise self.error("time field must be b, e or t", which)
                key = TimeRef(ref.text, w)
                coeffs[key] = coeffs.get(key, 0.0) + sign
                toks.append(ref)
            else:
                raise self.error("expected number or time reference")
            if self.accept("+"):
                sign = 1.0
            elif self.accept("-"):
                sign = -1.0
            else:
                break
        return coeffs, const, toks

    def linear(self, a, cmp, b, first: Tok):
        ca, ka, ta = a
        cb, kb, tb = b
        coeffs = dict(ca)
        for k, v in cb.items():
            coeffs[k] = coeffs.get(k, 0.0) - v
        coeffs = {k: v for k, v in coeffs.items() if v != 0}
        const = ka - kb  # expression: sum(coeffs) + const  cmp  0
        pos = [k for k, v in coeffs.items() if v == 1]
        neg = [k for k, v in coeffs.items() if v == -1]
        if len(coeffs) > 2 or len(pos) + len(neg) != len(coeffs) or (len(coeffs) == 2 and len(pos) != 1):
            raise KBSyntaxError(
                "only difference constraints (x - y cmp c) are supported; use a predicate",
                first.line, first.col, self.source,
            )
        if cmp in (">=", ">"):
            # a >= b  <=>  -(expr) <= 0
            pos, neg, const = neg, pos, -const
            cmp = "<=" if cmp == ">=" else "<"
        x = pos[0] if pos else None
        y = neg[0] if neg else None
        if x is None and y is None:
            raise KBSyntaxError("constraint has no time reference", first.line, first.col, self.source)
        # x - y + const cmp 0
        bound = -const
        if cmp == "<":
            lo, hi = -math.inf, bound - 1
        elif cmp == "<=":
            lo, hi = -math.inf, bound
        else:
            lo, hi = bound, bound
        if x is None:
            # -y <= bound  <=>  y >= -bound ; expressed as origin - y
            return DiffSpec(None, y, lo, hi, "", first.line), first, ta + tb
        return DiffSpec(x, y, lo, hi, "", first.line), first, ta + tb


def _retext(spec, text):
    from dataclasses import replace

    return replace(spec, text=text)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def parse_kb(
    sources: str | Iterable[tuple[str, str]], registry: Registry | None = None
) -> KnowledgeBase:
    """Parse one text or several (source-name, text) pairs into a validated KB."""
    if registry is None:
        from . import ecg  # noqa: F401  (registers the shipped procedures)

        registry = DEFAULT
    if isinstance(sources, str):
        sources = [("<kb>", sources)]
    parsers = [_Parser(text, name).parse() for name, text in sources]
    return _build(parsers, registry)


def _build(parsers: list[_Parser], registry: Registry) -> KnowledgeBase:
    def sem(msg, tok, p):
        return KBSemanticError(msg, tok.line, tok.col, p.source)

    observables: dict[str, Observable] = {}
    for p in parsers:
        for obs, tok in p.observables:
            if obs.id in observables:
                raise sem(f"observable {obs.id} declared twice", tok, p)
            observables[obs.id] = obs

    def known(name: str, tok: Tok, p: _Parser):
        if name not in observables:
            raise sem(f"unknown observable {name!r}", tok, p)

    isa, excl = [], []
    for p in parsers:
        for a, b, tok in p.isa:
            known(a, tok, p)
            known(b, tok, p)
            isa.append((a, b))
        for a, b, tok in p.excludes:
            known(a, tok, p)
            known(b, tok, p)
            excl.append((a, b))
    relations = RelationTable(isa, excl)
    problems = relations.validate(observables)
    if problems:
        tok = next(t for p in parsers for *_, t in p.isa) if any(p.isa for p in parsers) else None
        raise KBSemanticError("; ".join(problems), tok.line if tok else 0, tok.col if tok else 0)

    grammars: dict[str, AbstractionGrammar] = {}
    instants = frozenset(o.id for o in observables.values() if o.instantaneous)
    for p in parsers:
        for g, gtok in p.grammars:
            gname = g["name"].text
            if gname in grammars:
                raise sem(f"grammar {gname} declared twice", g["name"], p)
            known(g["hyp"].text, g["hyp"], p)
            for s in g["salient"]:
                known(s.text, s, p)
            if g["detector"] is not None and not registry.knows("detect", g["detector"].text):
                raise sem(f"unknown detector {g['detector'].text!r}", g["detector"], p)
            prods = []
            for pr in g["prods"]:
                if pr["terminal"] is not None:
                    known(pr["terminal"].text, pr["terminal"], p)
                if pr["theta"] is not None and not registry.knows("theta", pr["theta"].text):
                    raise sem(f"unknown procedure {pr['theta'].text!r}", pr["theta"], p)
                specs = []
                for spec, tok, refs in pr["constraints"]:
                    if isinstance(spec, PredSpec) and not registry.knows("pred", spec.name):
                        raise sem(f"unknown predicate {spec.name!r}", tok, p)
                    specs.append((spec, refs))
                prods.append(
                    (
                        Production(
                            pr["lhs"].text,
                            pr["terminal"].text if pr["terminal"] else None,
                            pr["rhs"].text if pr["rhs"] else None,
                            pr["abstracted"],
                            pr["theta"].text if pr["theta"] else None,
                            tuple(s for s, _ in specs),
                            pr["lhs"].line,
                            pr["lhs"].col,
                        ),
                        pr,
                        specs,
                    )
                )
            grammar = AbstractionGrammar(
                gname,
                g["hyp"].text,
                tuple(x for x, _, _ in prods),
                tuple(s.text for s in g["salient"]),
                g["detector"].text if g["detector"] else None,
                instants,
                gtok.line,
            )
            _check_grammar(grammar, prods, p)
            grammars[gname] = grammar

    kb = KnowledgeBase(observables, relations, grammars, registry)
    _check_acyclic(kb, parsers)
    return kb


def _check_grammar(g: AbstractionGrammar, prods, p: _Parser):
    def sem(msg, tok):
        return KBSemanticError(f"grammar {g.name}: {msg}", tok.line, tok.col, p.source)

    start = g.start
    for prod, raw, _ in prods:
        if prod.rhs == start:
            raise sem(f"start symbol {start} appears on a right-hand side", raw["rhs"])
        if prod.lhs == start and (prod.is_lambda or prod.rhs is None):
            raise sem(f"productions of {start} must have the form {start} -> q D", raw["lhs"])
    lhs_set = {x.lhs for x, _, _ in prods}
    for prod, raw, _ in prods:
        if prod.rhs is not None and prod.rhs not in lhs_set:
            raise sem(f"nonterminal {prod.rhs} has no productions", raw["rhs"])
    reach, frontier = {start}, [start]
    while frontier:
        n = frontier.pop()
        for x in g.by_lhs(n):
            if x.rhs and x.rhs not in reach:
                reach.add(x.rhs)
                frontier.append(x.rhs)
    for prod, raw, _ in prods:
        if prod.lhs not in reach:
            raise sem(f"nonterminal {prod.lhs} is unreachable from {start}", raw["lhs"])
    pre = g.preceding_terminals()
    for prod, raw, specs in prods:
        own = {prod.terminal} if prod.terminal else set()
        for spec, refs in specs:
            names = spec.refs()
            for name in names:
                ok = (
                    name == "h"
                    or (name == "m" and prod.terminal is not None)
                    or (name == "prev" and bool(pre[prod.lhs]))
                    or name in own
                    or name in pre[prod.lhs]
                )
                if not ok:
                    tok = next((t for t in refs if t.text == name), raw["lhs"])
                    raise sem(f"variable {name!r} out of scope in {prod}", tok)


def _check_acyclic(kb: KnowledgeBase, parsers):
    closure = kb.abstraction_closure()
    for a, b in sorted(closure):
        if a == b:
            g = next(g for g in kb.grammars.values() if g.hypothesis == a or a in g.terminals)
            raise KBSemanticError(f"cyclic abstraction relation through {a}", g.line, 1)
