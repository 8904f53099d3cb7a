"""Uncertainty mining: the (tau, delta) union rule, threshold sweeps, budgets.

A sample is flagged when its top confidence falls below tau OR its top-2
probability margin falls below delta; exact margin ties are always flagged.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

REASON_LOW_CONFIDENCE = "low_confidence"
REASON_SMALL_MARGIN = "small_margin"
REASON_BOTH = "both"

ANCHOR_CSV_HEADER = ["id", "re1", "re2", "im1", "im2", "y_true",
                     "p0", "p1", "p_max", "margin", "flag_reason"]
SENS_CSV_HEADER = ["tau", "delta", "abstain", "capture", "precision",
                   "risk_accept", "dispersion", "kink_benefit"]

DEFAULT_TAU_GRID = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2))
DEFAULT_DELTA_GRID = tuple(np.round(np.arange(0.00, 0.601, 0.05), 2))


@dataclass
class AnchorRecord:
    id: int
    x: np.ndarray
    y_true: int
    probs: np.ndarray
    p_max: float
    margin: float
    flag_reason: str


@dataclass
class SensCell:
    tau: float
    delta: float
    abstain: float
    capture: float
    precision: float
    risk_accept: float
    dispersion: float
    kink_benefit: float


def confidence_margin(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (p_max, top-2 margin) for a (n, K) probability matrix."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    part = np.sort(probs, axis=1)
    p_max = part[:, -1]
    margin = part[:, -1] - part[:, -2]
    return p_max, margin


def uncertain_mask(probs: np.ndarray, tau: float, delta: float) -> np.ndarray:
    p_max, margin = confidence_margin(probs)
    return (p_max < tau) | (margin < delta) | (margin == 0.0)


def flag_uncertain(probs: np.ndarray, tau: float, delta: float,
                   X: np.ndarray | None = None,
                   y_true: np.ndarray | None = None) -> list[AnchorRecord]:
    """Apply the union rule and return one record per flagged sample."""
    if not (0 <= tau <= 1 and 0 <= delta <= 1):
        raise ValueError("tau and delta must lie in [0, 1]")
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n = probs.shape[0]
    X = np.zeros((n, 4)) if X is None else np.asarray(X, dtype=float)
    y_true = np.full(n, -1) if y_true is None else np.asarray(y_true, dtype=int)
    p_max, margin = confidence_margin(probs)

    records = []
    for i in range(n):
        low_conf = p_max[i] < tau
        small_margin = (margin[i] < delta) or (margin[i] == 0.0)
        if not (low_conf or small_margin):
            continue
        if low_conf and small_margin:
            reason = REASON_BOTH
        elif low_conf:
            reason = REASON_LOW_CONFIDENCE
        else:
            reason = REASON_SMALL_MARGIN
        records.append(AnchorRecord(
            id=i, x=X[i].copy(), y_true=int(y_true[i]), probs=probs[i].copy(),
            p_max=float(p_max[i]), margin=float(margin[i]), flag_reason=reason))
    return records


def _dispersion(X: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if idx.size <= 1:
        return 0.0
    span = X.max(axis=0) - X.min(axis=0)
    gspread = float(np.linalg.norm(span))
    if gspread == 0.0:
        return 0.0
    pts = X[idx]
    centroid = pts.mean(axis=0)
    return float(np.mean(np.linalg.norm(pts - centroid, axis=1)) / gspread)


def sensitivity_grid(probs: np.ndarray, labels: np.ndarray, preds: np.ndarray,
                     X: np.ndarray,
                     tau_grid=DEFAULT_TAU_GRID,
                     delta_grid=DEFAULT_DELTA_GRID) -> list[SensCell]:
    """Sweep the threshold grid and report abstain/capture/precision/risk.

    kink_benefit is capture minus abstain after min-max normalizing each
    quantity over the whole grid, a benefit-versus-cost summary.
    """
    tau_grid = list(tau_grid)
    delta_grid = list(delta_grid)
    if not tau_grid or not delta_grid:
        raise ValueError("threshold grids must be non-empty")
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    preds = np.asarray(preds, dtype=int)
    X = np.asarray(X, dtype=float)
    n = probs.shape[0]
    mis = preds != labels
    n_mis = int(mis.sum())

    raw = []
    for tau in tau_grid:
        for delta in delta_grid:
            flagged = uncertain_mask(probs, tau, delta)
            n_flag = int(flagged.sum())
            n_accept = n - n_flag
            abstain = n_flag / n
            capture = (int((flagged & mis).sum()) / n_mis) if n_mis else 0.0
            precision = (int((flagged & mis).sum()) / n_flag) if n_flag else 0.0
            risk = (int((mis & ~flagged).sum()) / n_accept) if n_accept else 0.0
            raw.append((tau, delta, abstain, capture, precision, risk,
                        _dispersion(X, flagged)))

    abst = np.array([r[2] for r in raw])
    capt = np.array([r[3] for r in raw])

    def _minmax(v):
        lo, hi = v.min(), v.max()
        return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)

    benefit = _minmax(capt) - _minmax(abst)
    return [SensCell(tau=t, delta=d, abstain=a, capture=c, precision=p,
                     risk_accept=r, dispersion=disp, kink_benefit=float(b))
            for (t, d, a, c, p, r, disp), b in zip(raw, benefit)]


def select_budget(probs: np.ndarray, budget: int) -> tuple[float, float]:
    """Pick (tau*, delta*) so at most `budget` candidates are admitted.

    Candidates are ordered by p_max (for tau) and by margin (for delta);
    admission is inclusive, so the returned thresholds equal the values of
    the last admitted point.  Re-flagging with the strict union rule then
    yields a half-open set whose size is checked against the budget.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    p_max, margin = confidence_margin(probs)
    n = p_max.size
    k = min(budget, n)
    if k == 0:
        return 0.0, 0.0
    pm_sorted = np.sort(p_max)
    mg_sorted = np.sort(margin)
    while k > 0:
        tau_star = float(pm_sorted[k - 1])
        delta_star = float(mg_sorted[k - 1])
        if int(uncertain_mask(probs, tau_star, delta_star).sum()) <= budget:
            return tau_star, delta_star
        k -= 1
    return 0.0, 0.0


def write_anchor_csv(path, records: list[AnchorRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ANCHOR_CSV_HEADER)
        for r in records:
            w.writerow([r.id, repr(float(r.x[0])), repr(float(r.x[1])),
                        repr(float(r.x[2])), repr(float(r.x[3])), r.y_true,
                        repr(float(r.probs[0])), repr(float(r.probs[1])),
                        repr(r.p_max), repr(r.margin), r.flag_reason])


def read_anchor_csv(path) -> list[AnchorRecord]:
    records = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ANCHOR_CSV_HEADER:
            raise ValueError(f"unexpected anchors header: {header}")
        for row in r:
            records.append(AnchorRecord(
                id=int(row[0]), x=np.array([float(v) for v in row[1:5]]),
                y_true=int(row[5]), probs=np.array([float(row[6]), float(row[7])]),
                p_max=float(row[8]), margin=float(row[9]), flag_reason=row[10]))
    return records


def write_sensitivity_csv(path, cells: list[SensCell]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SENS_CSV_HEADER)
        for c in cells:
            w.writerow([repr(float(c.tau)), repr(float(c.delta)), repr(c.abstain),
                        repr(c.capture), repr(c.precision), repr(c.risk_accept),
                        repr(c.dispersion), repr(c.kink_benefit)])
