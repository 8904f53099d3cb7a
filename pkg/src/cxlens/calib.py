"""Calibration metrics and post-hoc calibrators.

ECE uses equal-frequency binning on the predicted-class confidence.
Temperature scaling minimizes validation NLL by golden-section search, Platt
scaling runs Newton iterations on the convex logistic NLL, and isotonic
regression is pool-adjacent-violators.  The phase-aware rule rescales a base
temperature by the local branch multiplicity, T'(m) = T_base * m^(-gamma).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ccore import softmax_temp

DEFAULT_MISESTIMATION_GRID = (-0.50, -0.25, -0.10, -0.05, 0.0, 0.05, 0.10, 0.25, 0.50)
RELIABILITY_CSV_HEADER = ["bin_low", "bin_high", "mean_conf", "accuracy", "count"]


@dataclass
class CalibReport:
    method: str
    ece: float
    nll: float
    brier: float
    n_bins: int
    fitted_params: dict


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _equal_freq_bins(conf_sorted: np.ndarray, n_bins: int) -> list[tuple[int, int]]:
    """Index ranges of equal-frequency bins over pre-sorted confidences.

    Ties at a nominal boundary are pushed into the lower bin, so equal
    confidences never straddle two bins.
    """
    n = conf_sorted.size
    edges = [0]
    for b in range(1, n_bins):
        e = (n * b) // n_bins
        while 0 < e < n and conf_sorted[e] == conf_sorted[e - 1]:
            e += 1
        edges.append(max(e, edges[-1]))
    edges.append(n)
    return [(lo, hi) for lo, hi in zip(edges, edges[1:])]


def ece(confidences: np.ndarray, correct: np.ndarray, n_bins: int = 15) -> float:
    """Expected calibration error with equal-frequency bins."""
    confidences = np.asarray(confidences, dtype=float)
    correct = np.asarray(correct, dtype=float)
    if confidences.size == 0:
        raise ValueError("ece needs at least one sample")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    order = np.argsort(confidences, kind="stable")
    conf = confidences[order]
    corr = correct[order]
    n = conf.size
    total = 0.0
    for lo, hi in _equal_freq_bins(conf, n_bins):
        if hi <= lo:
            continue
        total += (hi - lo) / n * abs(corr[lo:hi].mean() - conf[lo:hi].mean())
    return float(total)


def reliability_curve(confidences: np.ndarray, correct: np.ndarray,
                      n_bins: int = 10) -> list[tuple[float, float, float, float, int]]:
    """(bin_low, bin_high, mean_conf, accuracy, count) per occupied bin."""
    confidences = np.asarray(confidences, dtype=float)
    correct = np.asarray(correct, dtype=float)
    order = np.argsort(confidences, kind="stable")
    conf = confidences[order]
    corr = correct[order]
    rows = []
    for lo, hi in _equal_freq_bins(conf, n_bins):
        if hi <= lo:
            continue
        rows.append((float(conf[lo]), float(conf[hi - 1]),
                     float(conf[lo:hi].mean()), float(corr[lo:hi].mean()), hi - lo))
    return rows


def proper_scores(probs: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(NLL, Brier).  NLL clamps probabilities at 1e-12; Brier is the mean
    squared distance between the probability vector and the one-hot label."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    n, k = probs.shape
    p_true = np.clip(probs[np.arange(n), labels], 1e-12, None)
    nll = float(-np.mean(np.log(p_true)))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    brier = float(np.mean(np.sum((probs - onehot) ** 2, axis=1)))
    return nll, brier


def evaluate_probs(probs: np.ndarray, labels: np.ndarray,
                   n_bins: int = 15) -> tuple[float, float, float]:
    """(ECE, NLL, Brier) of a probability matrix against integer labels."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == labels
    nll, brier = proper_scores(probs, labels)
    return ece(conf, correct, n_bins=n_bins), nll, brier


def rel_drop(ece_none: float, ece_method: float) -> float:
    """Relative ECE improvement against the uncalibrated softmax."""
    return (ece_none - ece_method) / ece_none


# ---------------------------------------------------------------------------
# Temperature scaling
# ---------------------------------------------------------------------------

def nll_at_temperature(logits: np.ndarray, labels: np.ndarray, T: float) -> float:
    probs = softmax_temp(np.atleast_2d(logits), T)
    nll, _ = proper_scores(probs, labels)
    return nll


def fit_temperature(logits: np.ndarray, labels: np.ndarray,
                    lo: float = 0.05, hi: float = 10.0,
                    tol: float = 1e-4) -> float:
    """Golden-section minimizer of validation NLL over T in [lo, hi]."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if logits.shape[0] < 2 or np.unique(labels).size < 2:
        warnings.warn("degenerate labels: returning T = 1", RuntimeWarning)
        return 1.0
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = nll_at_temperature(logits, labels, c)
    fd = nll_at_temperature(logits, labels, d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = nll_at_temperature(logits, labels, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = nll_at_temperature(logits, labels, d)
    return float((a + b) / 2)


def phase_aware_T(T_base: float, m: int, gamma: float = 0.5) -> float:
    """Multiplicity-guided temperature T' = T_base * m^(-gamma)."""
    if not (T_base > 0):
        raise ValueError("T_base must be positive")
    if m < 1:
        raise ValueError("multiplicity must be >= 1")
    if not (0 <= gamma <= 1):
        raise ValueError("gamma must lie in [0, 1]")
    return float(T_base * m ** (-gamma))


def misestimation_sweep(eps_list=None, gamma: float = 0.5) -> list[tuple[float, float]]:
    """Temperature multiplier (1 + eps)^(-gamma) per relative multiplicity error."""
    eps_list = DEFAULT_MISESTIMATION_GRID if eps_list is None else eps_list
    out = []
    for eps in eps_list:
        if eps <= -1:
            raise ValueError("relative error must exceed -1")
        out.append((float(eps), float((1.0 + eps) ** (-gamma))))
    return out


# ---------------------------------------------------------------------------
# Platt scaling
# ---------------------------------------------------------------------------

def fit_platt(scores: np.ndarray, labels: np.ndarray, l2: float = 1e-6,
              grad_tol: float = 1e-8, max_iter: int = 200) -> tuple[float, float]:
    """Logistic fit p(y=1|s) = sigmoid(a s + b) by Newton iterations.

    A small L2 penalty keeps (a, b) bounded under perfect separation; a
    warning flags runs that stop before reaching the gradient tolerance.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if np.unique(y).size < 2:
        raise ValueError("both classes must be present")
    a, b = 0.0, 0.0
    n = s.size
    for _ in range(max_iter):
        t = a * s + b
        p = 1.0 / (1.0 + np.exp(-t))
        ga = float(np.dot(p - y, s) / n + l2 * a)
        gb = float(np.mean(p - y) + l2 * b)
        if math.hypot(ga, gb) <= grad_tol:
            return a, b
        w = p * (1 - p)
        haa = float(np.dot(w, s * s) / n + l2)
        hab = float(np.dot(w, s) / n)
        hbb = float(np.mean(w) + l2)
        det = haa * hbb - hab * hab
        if det <= 0:
            break
        a -= (hbb * ga - hab * gb) / det
        b -= (haa * gb - hab * ga) / det
    warnings.warn("Platt fit stopped before reaching gradient tolerance",
                  RuntimeWarning)
    return a, b


def apply_platt(scores: np.ndarray, a: float, b: float) -> np.ndarray:
    """Probability matrix [P(y=0), P(y=1)] from scalar scores."""
    p1 = 1.0 / (1.0 + np.exp(-(a * np.asarray(scores, dtype=float) + b)))
    return np.column_stack([1.0 - p1, p1])


# ---------------------------------------------------------------------------
# Isotonic regression (pool-adjacent-violators)
# ---------------------------------------------------------------------------

@dataclass
class IsotonicModel:
    """Nondecreasing step function; constant extension beyond the score range."""

    starts: np.ndarray   # block start scores, ascending
    values: np.ndarray   # fitted block values, nondecreasing

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.starts, s, side="right") - 1,
                      0, len(self.values) - 1)
        return np.clip(self.values[idx], 0.0, 1.0)

    def probs(self, s) -> np.ndarray:
        p1 = np.atleast_1d(self(s))
        return np.column_stack([1.0 - p1, p1])


def fit_isotonic(scores: np.ndarray, labels: np.ndarray) -> IsotonicModel:
    """Least-squares nondecreasing fit of labels against scores via PAVA.

    Exact score ties are pre-pooled so the result is a function of the score.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.size == 0:
        raise ValueError("need at least one sample")
    order = np.argsort(s, kind="stable")
    s, y = s[order], y[order]

    starts, vals, wts = [], [], []
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        starts.append(s[i])
        vals.append(float(y[i:j].mean()))
        wts.append(j - i)
        i = j

    # stack-based PAVA: merge any adjacent blocks whose means decrease
    bs, bv, bw = [], [], []
    for st, v, w in zip(starts, vals, wts):
        bs.append(st)
        bv.append(v)
        bw.append(w)
        while len(bv) >= 2 and bv[-2] > bv[-1]:
            v2 = (bv[-2] * bw[-2] + bv[-1] * bw[-1]) / (bw[-2] + bw[-1])
            w2 = bw[-2] + bw[-1]
            bv.pop(); bw.pop(); bs.pop()
            bv[-1] = v2
            bw[-1] = w2
    return IsotonicModel(starts=np.array(bs), values=np.array(bv))


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def write_reliability_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RELIABILITY_CSV_HEADER)
        for lo, hi, mc, acc, count in rows:
            w.writerow([repr(lo), repr(hi), repr(mc), repr(acc), count])


def write_calibration_csv(path, reports: list[CalibReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "ece", "nll", "brier", "n_bins", "fitted_params"])
        for r in reports:
            w.writerow([r.method, repr(r.ece), repr(r.nll), repr(r.brier),
                        r.n_bins, _params_str(r.fitted_params)])


def _params_str(params: dict) -> str:
    return ";".join(f"{k}={v!r}" for k, v in sorted(params.items()))
