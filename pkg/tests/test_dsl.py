import pytest

from construe.dsl import KBSemanticError, KBSyntaxError, parse_kb

G_N = """
observable Pw  { process atrial; }
observable QRS { process ventricular; }
observable Tw  { process repolarization; }
observable N   { process cycle; }
grammar normal hypothesizes N {
    H -> Pw D  { abstracted; h.b = Pw.b; 50 <= Pw.e - Pw.b <= 120 }
    D -> QRS E { abstracted; 100 <= QRS.b - Pw.b <= 210 }
    E -> Tw    { abstracted; h.e = Tw.e }
}
"""


def test_normal_cycle_terminals():
    g = parse_kb(G_N).grammars["normal"]
    assert g.terminals == {"Pw", "QRS", "Tw"}
    assert g.start == "H"
    assert g.hypothesis == "N"


def test_start_symbol_on_rhs_rejected():
    text = G_N.replace("E -> Tw    {", "E -> Tw H {")
    with pytest.raises(KBSemanticError):
        parse_kb(text)


def test_cyclic_abstraction_rejected():
    text = """
    observable a { process p; }
    observable b { process p; }
    grammar ga hypothesizes b { H -> a { abstracted } }
    grammar gb hypothesizes a { H -> b { abstracted } }
    """
    with pytest.raises(KBSemanticError):
        parse_kb(text)


def test_syntax_error_has_location():
    with pytest.raises(KBSyntaxError) as e:
        parse_kb("observable a { process p; }\ngrammar g hypothesizes a {\n  H -> -> }\n")
    assert e.value.line == 3
    assert "3:" in str(e.value)


def test_unknown_observable_and_procedure():
    with pytest.raises(KBSemanticError, match="unknown observable"):
        parse_kb("observable a { process p; }\ngrammar g hypothesizes zz { H -> a { abstracted } }")
    with pytest.raises(KBSemanticError, match="unknown procedure"):
        parse_kb("observable a { process p; }\nobservable b { process p; }\n"
                 "grammar g hypothesizes b { H -> a { abstracted; theta nope } }")


def test_seconds_suffix_and_chained_bounds():
    text = G_N.replace("50 <= Pw.e - Pw.b <= 120", "0.05s <= Pw.e - Pw.b <= 120ms")
    a = parse_kb(text).grammars["normal"]
    b = parse_kb(G_N).grammars["normal"]
    strip = lambda g: [(c.x, c.y, c.lo, c.hi) for c in g.productions[0].constraints]
    assert strip(a) == strip(b)


def test_isa_and_excludes():
    kb = parse_kb("""
    observable beat { process h; }
    observable N { process h; }
    observable VB { process r; }
    observable VT { process r; }
    isa N beat;
    excludes VB VT;
    """)
    assert kb.is_a("N", "beat")
    assert frozenset(("VB", "VT")) in kb.relations.excludes


def test_shipped_kbs_load():
    from conftest import load_kb

    for name in ("sinus", "ecg_waves", "ecg_rhythms"):
        assert load_kb(name).grammars
