import itertools
import re

import pytest
from hypothesis import given, settings, strategies as st

from construe.dsl import parse_kb
from construe.grammar import GenerationError, enumerate_patterns, extend_back, extend_forward, init_pattern

from conftest import load_kb


def prod(g, text):
    return next(p for p in g.productions if str(p).startswith(text))


@pytest.fixture(scope="module")
def gn(waves_kb):
    return waves_kb.grammars["normal_cycle"]


@pytest.fixture(scope="module")
def gvb(rhythms_kb):
    return rhythms_kb.grammars["bigeminy"]


def test_abduce_at_qrs(gn):
    st_ = init_pattern(gn, prod(gn, "D -> QRS"), "from_abduce")
    assert [f.observable for f in st_.findings] == ["QRS"]
    assert (st_.B, st_.E) == ("D", "E")


def test_predict_init_is_empty(waves_kb):
    st_ = init_pattern(waves_kb.grammars["t_wave"])
    assert st_.findings == [] and st_.B == st_.E == "H"


def test_abduce_at_pw_carries_duration(gn):
    st_ = init_pattern(gn, prod(gn, "H -> Pw"), "from_abduce")
    net = st_.network()
    assert net.difference("f0.e", "f0.b") == (50, 120)
    assert net.difference("h.b", "f0.b") == (0, 0)


def test_extend_back_from_qrs(gn):
    st_ = init_pattern(gn, prod(gn, "D -> QRS"), "from_abduce")
    (back,) = extend_back(st_)
    assert back.terminal_string() == ("Pw", "QRS") and back.B == "H"
    with pytest.raises(GenerationError):
        extend_back(back)


def test_extend_forward(gn, gvb):
    st_ = init_pattern(gn, prod(gn, "H -> Pw"), "from_abduce")
    (fwd,) = extend_forward(st_)
    assert fwd.terminal_string() == ("Pw", "QRS")
    (closed,) = extend_forward(fwd)
    assert closed.closed and extend_forward(closed) == []
    at_e = init_pattern(gvb, prod(gvb, "D -> V E"), "from_abduce")
    assert {str(p.L[-1][0]) for p in extend_forward(at_e)} == {str(prod(gvb, "E -> N F"))}


def test_extend_back_interior(gvb):
    at_e = init_pattern(gvb, prod(gvb, "E -> N F"), "from_abduce")
    lhs = sorted(str(s.L[0][0]).split(" ->")[0] for s in extend_back(at_e))
    assert lhs == ["D", "F"]


def test_normal_cycle_single_pattern(gn):
    pats = enumerate_patterns(gn, 3)
    assert [p.terminal_string() for p in pats] == [("Pw", "QRS", "Tw")]
    assert enumerate_patterns(gn, 0) == []


def test_bigeminy_patterns(gvb):
    pats = enumerate_patterns(gvb, 6)
    assert [p.terminal_string() for p in pats] == [("N", "V", "N", "V"), ("N", "V", "N", "V", "N", "V")]


def test_same_observable_non_overlap(gvb):
    (pat, *_) = enumerate_patterns(gvb, 4)
    cons = pat.state.constraints()
    assert any(c[0] == "d" and c[1] == "f2.b" and c[2] == "f0.e" and c[3] == 1 for c in cons)


def test_periodic_observables(gvb, rhythms_kb, gn):
    assert gvb.periodic == {"N", "V"}
    assert rhythms_kb.grammars["regular_rhythm"].periodic == {"N"}
    assert gn.periodic == frozenset()


# --------------------------------------------------------------------------
# Language equivalence against re
# --------------------------------------------------------------------------


def language(grammar, n):
    return {p.terminal_string() for p in enumerate_patterns(grammar, n)}


def reference(regex, alphabet, n):
    pat = re.compile(regex)
    return {
        w for k in range(1, n + 1) for w in itertools.product(alphabet, repeat=k)
        if pat.fullmatch("".join(w))
    }


@pytest.mark.parametrize("kb,grammar,regex,alphabet", [
    ("ecg_rhythms", "bigeminy", "NV(NV)+", "NV"),
    ("ecg_rhythms", "regular_rhythm", "N{4,}", "N"),
    ("sinus", "sinusoid", "p+", "p"),
])
def test_shipped_grammar_languages(kb, grammar, regex, alphabet):
    g = load_kb(kb).grammars[grammar]
    tr = {"point": "p"}
    got = {tuple(tr.get(x, x) for x in w) for w in language(g, 7)}
    assert got == reference(regex, alphabet, 7)


def test_wave_pattern_language(waves_kb):
    got = {"".join("s" for _ in w) for w in language(waves_kb.grammars["wave_pattern"], 8)}
    assert got == {"s" * k for k in range(4, 9)}


units = st.lists(st.tuples(st.sampled_from("ab"), st.booleans()), min_size=0, max_size=3)


def chain_grammar(first, rest):
    """H -> first N1, then one nonterminal per unit; a repeated unit loops on itself."""
    lines = ["observable a { process p; }", "observable b { process p; }", "observable h { process q; }",
             "grammar g hypothesizes h {", f"    H -> {first} N1 {{ abstracted }}"]
    for i, (sym, plus) in enumerate(rest, 1):
        lines.append(f"    N{i} -> {sym} N{i + 1} {{ abstracted }}")
        if plus:
            lines.append(f"    N{i} -> {sym} N{i} {{ abstracted }}")
    lines.append(f"    N{len(rest) + 1} -> lambda {{ abstracted }}")
    lines.append("}")
    regex = first + "".join(f"{s}+" if p else s for s, p in rest)
    return parse_kb("\n".join(lines)).grammars["g"], regex


@settings(max_examples=60, deadline=None)
@given(st.sampled_from("ab"), units)
def test_random_grammars_match_regex(first, rest):
    g, regex = chain_grammar(first, rest)
    assert language(g, 6) == reference(regex, "ab", 6)
