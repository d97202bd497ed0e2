import pytest

from construe.core import Observation
from construe.interpretation import Interpretation, InterpretationProblem
from construe.reasoning import Rejection, abduce, advance, deduce, get_descendants, iter_abduce, predict, subsume
from construe.search import SearchConfig, construe

from conftest import load_problem


@pytest.fixture(scope="module")
def worked():
    return construe(load_problem("ecg_waves", "worked_example.csv", "worked_example_signal.csv"),
                    SearchConfig(keep_nodes=True))


def ops(steps):
    return [s.op for s in steps if isinstance(s, Interpretation)]


def test_root_branches(worked):
    I0 = worked.nodes[0]
    assert I0.focus == (("o", "pw"),)
    assert set(ops(get_descendants(I0))) == {"ABDUCE", "ADVANCE"}


def test_abduce_pw(worked):
    (I1,) = abduce(worked.nodes[0], "pw")
    h = I1.hypotheses["h1"]
    assert h.observable == "N" and h.matches == {0: "pw"}
    assert h.state.finding(0).observable == "Pw"


def test_abduce_non_abstractable(waves_kb):
    P = InterpretationProblem(waves_kb, [Observation("N", 0, 800)])
    assert abduce(Interpretation(P), "o1") == []


def test_abduce_v_under_bigeminy(rhythms_kb):
    P = InterpretationProblem(rhythms_kb, [Observation("V", 1400, 1400, {"label": "V"})])
    steps = list(iter_abduce(Interpretation(P), "o1"))
    assert sorted(s.delta["production"].split(" {")[0] for s in steps) == ["D -> V E", "F -> V", "F -> V E"]


def test_deduce_predicts_qrs_window(worked):
    (I2,) = deduce(worked.nodes[1], "h1")
    assert I2.focus[-1] == ("f", "h1", 1)
    assert I2.net.domain("h1/f1.b") == (400, 510)
    assert I2.net.domain("h1/f1.e") == (450, 660)


def test_deduce_tw_after_qrs(worked):
    (I4,) = deduce(worked.nodes[3], "h1")
    assert I4.delta["production"].startswith("E -> Tw")


def test_deduce_closed_is_empty(worked):
    assert deduce(worked.best, "h1") == []


def test_subsume_one_branch_and_no_predict(worked):
    I2 = worked.nodes[2]
    steps = list(get_descendants(I2))
    assert ops(steps) == ["SUBSUME"]
    assert steps[0].delta["match"] == ["h1/f1", "qrs"]
    assert predict(I2, I2.focus[-1]) == []


def test_subsume_two_candidates(waves_kb):
    P = InterpretationProblem(waves_kb, [
        Observation("Pw", 300, 403), Observation("QRS", 410, 470), Observation("QRS", 480, 540),
    ])
    (I1,) = abduce(Interpretation(P), "o1")
    (I2,) = deduce(I1, "h1")
    assert [c.delta["match"][1] for c in subsume(I2, I2.focus[-1])] == ["o2", "o3"]


def test_subsume_nothing_in_window(waves_kb):
    P = InterpretationProblem(waves_kb, [Observation("Pw", 300, 403), Observation("QRS", 900, 950)])
    (I1,) = abduce(Interpretation(P), "o1")
    (I2,) = deduce(I1, "h1")
    assert subsume(I2, I2.focus[-1]) == []


def test_predict_tw(worked):
    I4 = worked.nodes[4]
    (I5,) = predict(I4, I4.focus[-1])
    h = I5.hypotheses["h2"]
    assert h.observable == "Tw" and h.state.L == () and h.state.B == h.state.E == "H"


def test_predict_detected_wave(worked):
    I8 = worked.nodes[8]
    (I9,) = predict(I8, I8.focus[-1])
    h = I9.hypotheses["h3"]
    assert h.detected and h.observable == "wave"
    assert I9.times("h3") == ((652, 652), (848, 848))


def test_advance_noise_is_unintelligible(rhythms_kb):
    P = InterpretationProblem(rhythms_kb, [
        Observation("V", 100, 100, {"label": "V"}), Observation("N", 1000, 1000, {"label": "N"}),
    ])
    I0 = Interpretation(P)
    I1 = advance(I0, "o1")
    assert I1.unintelligible == {"o1"}
    assert I1.focus == (("o", "o2"),)
    I2 = advance(I1, "o2")
    assert I2.focus == () and list(get_descendants(I2)) == []


def test_advance_incomplete_hypothesis_rejected(worked):
    step = advance(worked.nodes[1], "h1")
    assert isinstance(step, Rejection) and step.cause == "incomplete"
