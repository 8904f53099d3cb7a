"""Fold-wise statistical reporting: t-intervals, exact Wilcoxon, win rates."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv, ndtr

EXACT_ENUMERATION_MAX_N = 16
STATS_CSV_HEADER = ["method", "metric", "mean", "ci_half", "p_vs_none", "wins", "folds"]


class DegenerateSampleError(ValueError):
    """All paired differences are zero; no test statistic exists."""


@dataclass
class FoldMetrics:
    method: str
    values: list[float]


def t_quantile(p: float, dof: int) -> float:
    """Student-t quantile from the inverse regularized incomplete beta.

    Uses the tail identity P(|T| > t) = I_{dof/(dof+t^2)}(dof/2, 1/2).
    """
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if not (0.5 < p < 1):
        raise ValueError("p must lie in (0.5, 1)")
    tail = 2.0 * (1.0 - p)
    x = float(betaincinv(dof / 2.0, 0.5, tail))
    return math.sqrt(dof * (1.0 - x) / x)


def t_confidence_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Sample mean and Student-t half-width: t_{(1+level)/2, n-1} * s / sqrt(n)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 2:
        raise ValueError("need at least two values for a confidence interval")
    mean = float(v.mean())
    s = float(v.std(ddof=1))
    if s == 0.0:
        return mean, 0.0
    t = t_quantile((1 + level) / 2, n - 1)
    return mean, t * s / math.sqrt(n)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test
# ---------------------------------------------------------------------------

def _signed_ranks(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(ranks of |d| with ties mid-ranked, positive-sign mask)."""
    absd = np.abs(diff)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(len(diff), dtype=float)
    i = 0
    while i < len(diff):
        j = i
        while j < len(diff) and absd[order[j]] == absd[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # average of positions i+1..j
        i = j
    return ranks, diff > 0


def wilcoxon_signed_rank(a, b, alternative: str = "less") -> float:
    """One-sided signed-rank p-value for paired folds.

    Zero differences are dropped before ranking.  For n <= 16 the null
    distribution is enumerated exactly over all 2^n sign assignments of the
    observed ranks; larger n uses the normal approximation with tie
    correction and continuity correction.

    alternative="less" tests whether a tends to be smaller than b.
    """
    if alternative not in ("less", "greater"):
        raise ValueError("alternative must be 'less' or 'greater'")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("fold vectors must be aligned")
    diff = a - b
    diff = diff[diff != 0]
    n = diff.size
    if n == 0:
        raise DegenerateSampleError("all paired differences are zero")
    if n < 5:
        raise ValueError("signed-rank test reported only for n >= 5")

    ranks, positive = _signed_ranks(diff)
    w_plus = float(ranks[positive].sum())

    if n <= EXACT_ENUMERATION_MAX_N:
        count = 0
        total = 1 << n
        rank_list = [float(r) for r in ranks]
        for signs in itertools.product((False, True), repeat=n):
            w = sum(r for r, s in zip(rank_list, signs) if s)
            if alternative == "less":
                count += bool(w <= w_plus)
            else:
                count += bool(w >= w_plus)
        return count / total

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(diff), return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    sd = math.sqrt(var)
    if alternative == "less":
        z = (w_plus - mean + 0.5) / sd
        return float(ndtr(z))
    z = (w_plus - mean - 0.5) / sd
    return float(1.0 - ndtr(z))


def win_rate(a, b, direction: str = "lower") -> tuple[int, int]:
    """Folds where a strictly beats b ('lower' or 'higher' is better)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("fold vectors must be aligned")
    if direction == "lower":
        wins = int(np.sum(a < b))
    elif direction == "higher":
        wins = int(np.sum(a > b))
    else:
        raise ValueError("direction must be 'lower' or 'higher'")
    return wins, a.size


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def summarize_methods(per_fold: dict[str, dict[str, list[float]]],
                      baseline: str = "none",
                      lower_better: tuple[str, ...] = ("ece", "nll", "brier"),
                      ) -> list[dict]:
    """Stats rows per (method, metric): CI, one-sided p vs baseline, win rate.

    per_fold maps method -> metric -> fold values.  The Wilcoxon p-value is
    omitted (empty) for the baseline itself, degenerate differences, or too
    few folds.
    """
    rows = []
    for method in sorted(per_fold):
        for metric in sorted(per_fold[method]):
            vals = per_fold[method][metric]
            mean, half = t_confidence_interval(vals)
            p_str = ""
            wins_str = ""
            if method != baseline and baseline in per_fold:
                base_vals = per_fold[baseline][metric]
                direction = "lower" if metric in lower_better else "higher"
                wins, nf = win_rate(vals, base_vals, direction)
                wins_str = f"{wins}/{nf}"
                try:
                    alt = "less" if metric in lower_better else "greater"
                    p_str = repr(wilcoxon_signed_rank(vals, base_vals, alt))
                except (DegenerateSampleError, ValueError):
                    p_str = ""
            rows.append({"method": method, "metric": metric, "mean": mean,
                         "ci_half": half, "p_vs_none": p_str, "wins": wins_str,
                         "folds": len(vals)})
    return rows


def write_stats_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_CSV_HEADER)
        for r in rows:
            w.writerow([r["method"], r["metric"], repr(r["mean"]), repr(r["ci_half"]),
                        r["p_vs_none"], r["wins"], r["folds"]])
