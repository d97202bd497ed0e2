"""
Observation procedures, predicates and detectors for the demo ECG and
sinusoid knowledge bases. All of them register into the default registry.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .procedures import DEFAULT, InsufficientEvidence, Item, Signal, View

WAVE_MIN_AMPLITUDE = 20.0  # uV
WAVE_MIN_DURATION = 6  # ms
BEAT_MIN_AMPLITUDE = 100.0  # uV
REFRACTORY_MS = 200
SLOPE_RATIO = 0.7


class MalformedWave(ValueError):
    pass


# --------------------------------------------------------------------------
# Sinusoid
# --------------------------------------------------------------------------


def find_peaks(t: Sequence[float], v: Sequence[float]) -> list[int]:
    """Indices where the slope changes sign; a flat run counts once, at its first sample."""
    d = np.sign(np.diff(np.asarray(v, dtype=float)))
    nz = [(i, s) for i, s in enumerate(d) if s != 0]
    return [i + 1 for (i, s), (_, s2) in zip(nz, nz[1:]) if s != s2]


def _max_residual(t, v, alpha, omega) -> float:
    return float(np.max(np.abs(alpha * np.sin(omega * t) - v)))


def sinus_fit(t: Sequence[float], v: Sequence[float]) -> tuple[float, float, float, float]:
    """(alpha, omega, t_b, t_e) for a sampled sinusoid.

    alpha is the largest absolute value and omega is pi over the mean spacing
    between peaks. If that omega leaves residuals above alpha/3, it is refined
    within +-10% to minimise the largest residual.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    peaks = find_peaks(t, v)
    if len(peaks) < 2:
        raise InsufficientEvidence(f"need at least two peaks, found {len(peaks)}")
    alpha = float(np.max(np.abs(v)))
    omega = math.pi / float(np.mean(np.diff(t[peaks])))
    if _max_residual(t, v, alpha, omega) > alpha / 3:
        lo, hi = 0.9 * omega, 1.1 * omega
        grid = np.linspace(lo, hi, 801)
        res = [_max_residual(t, v, alpha, w) for w in grid]
        k = int(np.argmin(res))
        step = grid[1] - grid[0]
        opt = minimize_scalar(
            lambda w: _max_residual(t, v, alpha, w),
            bounds=(max(lo, grid[k] - step), min(hi, grid[k] + step)),
            method="bounded",
        )
        omega = float(opt.x) if opt.fun <= res[k] else float(grid[k])
    return alpha, omega, float(t[0]), float(t[-1])


def _sorted_points(view: View) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted((f.b, float(f.values["v"])) for f in view.findings if f.b is not None and "v" in f.values)
    if not pts:
        raise InsufficientEvidence("no valued samples")
    t, v = zip(*pts)
    return np.asarray(t, dtype=float), np.asarray(v, dtype=float)


@DEFAULT.theta("sinus_fit")
def sinus_theta(view: View) -> dict:
    t, v = _sorted_points(view)
    alpha, omega, tb, te = sinus_fit(t, v)
    return {
        "alpha": alpha, "omega": omega, "b": int(tb), "e": int(te),
        "max_residual": _max_residual(t, v, alpha, omega),
    }


@DEFAULT.predicate("sinus_residual")
def sinus_residual(view: View, h: Item) -> bool:
    """Every sample lies within alpha/3 of the fitted sinusoid."""
    return h.values["max_residual"] <= h.values["alpha"] / 3


# --------------------------------------------------------------------------
# Waves
# --------------------------------------------------------------------------


def wave_observation(t: Sequence[float], v: Sequence[float]) -> tuple[str, float, float]:
    """(vp, a, t_tp) over samples m_0..m_n, where m_0 and m_n are the flanking samples."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(v) - 1
    if n < 3:
        raise MalformedWave(f"a wave needs at least 4 samples, got {n + 1}")
    inner = v[1:n]
    k = int(np.argmin(inner) if v[1] < v[0] else np.argmax(inner)) + 1
    diff = v[k] - v[1] if v[k] != v[1] else v[1] - v[0]
    vp = "+" if diff >= 0 else "-"
    a = float(max(abs(v[k] - v[1]), abs(v[k] - v[n - 1])))
    return vp, a, float(t[k])


def wave_shape_ok(v: Sequence[float], tp: int) -> bool:
    """Slope changes at both ends and at the turning point, and a discernible amplitude."""
    v = np.asarray(v, dtype=float)
    n = len(v) - 1
    if n < 3 or not (1 < tp < n - 1):
        return False
    sg = np.sign
    return (
        sg(v[1] - v[0]) != sg(v[2] - v[1])
        and sg(v[n] - v[n - 1]) != sg(v[n - 1] - v[n - 2])
        and sg(v[tp] - v[tp - 1]) == -sg(v[tp + 1] - v[tp])
        and min(abs(v[tp] - v[1]), abs(v[tp] - v[n - 1])) >= WAVE_MIN_AMPLITUDE
    )


@DEFAULT.theta("wave_observation")
def wave_theta(view: View) -> dict:
    t, v = _sorted_points(view)
    try:
        vp, a, ttp = wave_observation(t, v)
    except MalformedWave as e:
        raise InsufficientEvidence(str(e)) from None
    return {"vp": vp, "a": a, "tp": ttp, "b": int(t[1]), "e": int(t[-2])}


@DEFAULT.predicate("wave_shape")
def wave_shape(view: View, h: Item) -> bool:
    return h.values.get("a", 0.0) >= WAVE_MIN_AMPLITUDE


def _deviation_runs(t: np.ndarray, v: np.ndarray, base: float, thr: float) -> list[tuple[int, int]]:
    mask = np.abs(v - base) > thr
    runs, start = [], None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(v) - 1))
    return runs


@DEFAULT.detector("wave_detector")
def wave_detector(signal: Signal, window: tuple[float, float], observable: str) -> list[dict]:
    """Waves inside the window: runs of samples deviating from the baseline,
    taken as the median of the samples at both window edges.

    The onset is the first deviating sample and the end the last one. Runs
    shorter than the minimum duration or amplitude are ignored.
    """
    t, v = signal.window(*window)
    if len(v) < 4:
        return []
    base = float(np.median(np.concatenate([v[:3], v[-3:]])))
    dev = float(np.max(np.abs(v - base)))
    if dev < WAVE_MIN_AMPLITUDE:
        return []
    out = []
    for i, j in _deviation_runs(t, v, base, max(2.0, 0.05 * dev)):
        if t[j] - t[i] < WAVE_MIN_DURATION:
            continue
        seg = v[i:j + 1] - base
        k = int(np.argmax(np.abs(seg)))
        a = float(abs(seg[k]))
        if a < WAVE_MIN_AMPLITUDE:
            continue
        out.append({"b": int(t[i]), "e": int(t[j]), "a": a, "vp": "+" if seg[k] > 0 else "-", "tp": int(t[i + k])})
    return out


def tw_delin(t_b_qrs: float, t_e_qrs: float, t_b_wave: float, t_e_wave: float, samples=None) -> tuple[float, float]:
    """T-wave limits: the limits of the supporting wave."""
    if t_b_wave <= t_e_qrs:
        raise ValueError("wave must start after the QRS complex ends")
    return t_b_wave, t_e_wave


@DEFAULT.theta("Tw_delin")
def tw_delin_theta(view: View) -> dict:
    qrs = next(f for f in view.findings if not f.abstracted)
    wave = next(f for f in view.findings if f.abstracted)
    if None in (qrs.b, qrs.e, wave.b, wave.e):
        raise InsufficientEvidence("unbound QRS or wave limits")
    try:
        b, e = tw_delin(qrs.b, qrs.e, wave.b, wave.e)
    except ValueError as err:
        raise InsufficientEvidence(str(err)) from None
    return {"b": int(b), "e": int(e)}


def max_abs_slope(signal: Signal, b: float, e: float) -> float:
    _, v = signal.window(b, e)
    return float(np.max(np.abs(np.diff(v)))) if len(v) > 1 else 0.0


@DEFAULT.predicate("tw_slope")
def tw_slope(view: View, wave: Item, qrs: Item) -> bool:
    """The wave's steepest slope stays below 0.7 of the QRS's."""
    if view.signal is None or len(view.signal) == 0:
        return True
    return max_abs_slope(view.signal, wave.b, wave.e) <= SLOPE_RATIO * max_abs_slope(view.signal, qrs.b, qrs.e)


# --------------------------------------------------------------------------
# Beats and saliency
# --------------------------------------------------------------------------


@DEFAULT.detector("beat_detector")
def beat_detector(signal: Signal, window: tuple[float, float], observable: str) -> list[dict]:
    """One beat at the largest absolute deflection in the window, if large enough."""
    t, v = signal.window(*window)
    if len(v) == 0:
        return []
    k = int(np.argmax(np.abs(v)))
    if abs(v[k]) < BEAT_MIN_AMPLITUDE:
        return []
    return [{"b": int(t[k]), "e": int(t[k]), "label": observable, "amplitude": float(v[k])}]


def detect_salient(signal: Signal, threshold: float | None = None, refractory: int = REFRACTORY_MS) -> list[int]:
    """Times of steep slope: local maxima of |first difference| above threshold,
    keeping only the steepest one within each refractory window."""
    if len(signal) < 2:
        return []
    d = np.abs(np.diff(signal.v))
    if threshold is None:
        threshold = 3.0 * float(np.median(d))
    cand = [
        i for i in range(len(d))
        if d[i] > threshold and (i == 0 or d[i] >= d[i - 1]) and (i == len(d) - 1 or d[i] >= d[i + 1])
    ]
    picked: list[int] = []
    for i in sorted(cand, key=lambda i: (-d[i], i)):
        if all(abs(signal.t[i + 1] - signal.t[j + 1]) > refractory for j in picked):
            picked.append(i)
    return sorted(int(signal.t[i + 1]) for i in picked)
