import itertools
from pathlib import Path

import pytest

import construe
from construe.core import read_observations, read_series_csv
from construe.dsl import parse_kb
from construe.interpretation import InterpretationProblem
from construe.procedures import Signal

PKG = Path(construe.__file__).parent
KB_DIR = PKG / "kb"
FIXTURES = PKG / "fixtures"


def load_kb(*names):
    paths = [KB_DIR / f"{n}.kb" if (KB_DIR / f"{n}.kb").exists() else FIXTURES / n for n in names]
    return parse_kb([(str(p), p.read_text()) for p in paths])


def load_problem(kb_name, observations, signal=None, **kw):
    kb = load_kb(kb_name) if isinstance(kb_name, str) else kb_name
    obs = read_observations((FIXTURES / observations).read_text())
    sig = Signal.from_pairs(read_series_csv((FIXTURES / signal).read_text())) if signal else None
    return InterpretationProblem(kb, obs, sig, **kw)


def sinusoid_problem():
    from construe.core import Observation

    pairs = read_series_csv((FIXTURES / "sinusoid.csv").read_text())
    obs = [Observation("point", t, t, {"v": v}) for t, v in pairs]
    return InterpretationProblem(load_kb("sinus"), obs, Signal.from_pairs(pairs))


def grid_solutions(variables, constraints, lo, hi):
    """Reference STN solver: every integer assignment in [lo, hi] satisfying all constraints.

    constraints are (x, y, c_lo, c_hi) meaning c_lo <= x - y <= c_hi, with "@0" the origin.
    """
    sols = []
    for vals in itertools.product(range(lo, hi + 1), repeat=len(variables)):
        env = dict(zip(variables, vals), **{"@0": 0})
        if all(c_lo <= env[x] - env[y] <= c_hi for x, y, c_lo, c_hi in constraints):
            sols.append(env)
    return sols


@pytest.fixture(scope="session")
def waves_kb():
    return load_kb("ecg_waves")


@pytest.fixture(scope="session")
def rhythms_kb():
    return load_kb("ecg_rhythms")


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, with any recorded details."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" and outcome != "error":
                continue
            if "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            name = rep.nodeid.split("::")[-1]
            num = int(name.split("_")[2])
            rows.append((num, "PASS" if outcome == "passed" else "FAIL", name, dict(rep.user_properties)))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, name, props in sorted(rows):
        title = name.split("_", 3)[3].replace("_", " ")
        terminalreporter.write_line(f"{status}  {num}. {title}")
        for k, v in props.items():
            terminalreporter.write_line(f"        {k}: {v}")
