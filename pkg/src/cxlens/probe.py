"""Ray probing of the original network around anchors.

Surrogate branch descriptors suggest phase-aligned directions along which the
sign of the local decision function changes fastest; this module validates
them on the real network by scanning rays for the smallest class-flip radius,
alongside random-phase and gradient baselines, and scores anchors for triage.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from . import ccore
from .puiseux import PuiseuxBranch
from .surrogate import SurrogateFit

SOURCE_BRANCH = "branch_phase"
SOURCE_RANDOM = "random_phase"
SOURCE_GRADIENT = "gradient"

RAY_CSV_HEADER = ["direction_source", "dir1", "dir2", "dir3", "dir4", "flip_radius"]
TRIAGE_CSV_HEADER = ["anchor_id", "abs_c4", "grad_norm", "inv_r_grad", "r_dom", "fragile"]
PR_CSV_HEADER = ["threshold", "precision", "recall"]

QUAD_EXPS = [(2, 0), (1, 1), (0, 2)]
QUARTIC_EXPS = [(4, 0), (3, 1), (2, 2), (1, 3), (0, 4)]


@dataclass
class RayProbe:
    direction: np.ndarray
    source: str
    flip_radius: float | None
    n_steps: int
    max_radius: float


@dataclass
class TriageRow:
    anchor_id: int
    abs_c4: float
    grad_norm: float
    inv_r_grad: float
    r_dom: float
    fragile: bool


# ---------------------------------------------------------------------------
# Ray scanning
# ---------------------------------------------------------------------------

def ray_flip_radius(params: ccore.ModelParams, anchor: np.ndarray,
                    direction: np.ndarray, max_radius: float = 0.02,
                    n_steps: int = 20) -> float | None:
    """Smallest grid radius at which the predicted class changes, if any.

    The scan uses the fixed radii k * max_radius / n_steps for k = 1..n_steps.
    """
    if not (max_radius > 0):
        raise ValueError("max_radius must be positive")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    anchor = np.asarray(anchor, dtype=float)
    direction = np.asarray(direction, dtype=float)
    logits, _ = ccore.forward(params, anchor)
    base = int(np.argmax(logits))
    radii = max_radius * np.arange(1, n_steps + 1) / n_steps
    pts = anchor + radii[:, None] * direction
    logits, _ = ccore.forward(params, pts)
    flipped = np.argmax(logits, axis=1) != base
    if not np.any(flipped):
        return None
    return float(radii[np.argmax(flipped)])


def generate_directions(branches: list[PuiseuxBranch], n_random: int = 20,
                        seed: int = 0, phase_sweep: int = 8,
                        ) -> list[tuple[np.ndarray, str]]:
    """Unit R^4 directions: branch phase orbits plus random phase pairs.

    A branch with leading term a * xi^theta traces eta ~ a xi^theta; sweeping
    the xi phase phi gives complex directions (e^{i phi}, (a/|a|) e^{i theta phi}),
    embedded in R^4 with the [Re1, Re2, Im1, Im2] layout and normalized.
    Random directions put an independent uniform phase on each coordinate.
    """
    out = []
    for b in branches:
        if not b.terms:
            continue  # the zero branch carries no direction information
        theta, a = b.terms[0]
        unit = a / abs(a)
        for k in range(phase_sweep):
            phi = 2 * math.pi * k / phase_sweep
            z1 = complex(math.cos(phi), math.sin(phi))
            z2 = unit * complex(math.cos(float(theta) * phi),
                                math.sin(float(theta) * phi))
            vec = np.array([z1.real, z2.real, z1.imag, z2.imag])
            out.append((vec / np.linalg.norm(vec), SOURCE_BRANCH))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        phi1, phi2 = rng.uniform(0, 2 * math.pi, size=2)
        vec = np.array([math.cos(phi1), math.cos(phi2),
                        math.sin(phi1), math.sin(phi2)])
        out.append((vec / np.linalg.norm(vec), SOURCE_RANDOM))
    return out


def probe_anchor(params: ccore.ModelParams, anchor: np.ndarray,
                 branches: list[PuiseuxBranch], n_random: int = 20,
                 seed: int = 0, max_radius: float = 0.02,
                 n_steps: int = 20, phase_sweep: int = 8,
                 include_gradient: bool = True) -> list[RayProbe]:
    """Scan branch, random, and +/- gradient rays from one anchor."""
    dirs = generate_directions(branches, n_random=n_random, seed=seed,
                               phase_sweep=phase_sweep)
    if include_gradient:
        grad, gnorm, _ = gradient_saliency(params, anchor)
        if gnorm > 0:
            g = grad / gnorm
            dirs.append((g, SOURCE_GRADIENT))
            dirs.append((-g, SOURCE_GRADIENT))
    probes = []
    for vec, source in dirs:
        r = ray_flip_radius(params, anchor, vec, max_radius=max_radius,
                            n_steps=n_steps)
        probes.append(RayProbe(direction=vec, source=source, flip_radius=r,
                               n_steps=n_steps, max_radius=max_radius))
    return probes


def min_flip_radius(probes: list[RayProbe], source: str | None = None) -> float | None:
    radii = [p.flip_radius for p in probes
             if p.flip_radius is not None and (source is None or p.source == source)]
    return min(radii) if radii else None


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def dominant_ratio(fit: SurrogateFit) -> tuple[float, float]:
    """Quadratic-to-quartic magnitude ratio and the onset radius sqrt(DR).

    Uses the unscaled coefficients.  A vanishing quartic block yields the
    +inf sentinel in both slots (detectable via math.isinf).
    """
    quad = max((abs(fit.coeffs.get(e, 0.0)) for e in QUAD_EXPS), default=0.0)
    quart = max((abs(fit.coeffs.get(e, 0.0)) for e in QUARTIC_EXPS), default=0.0)
    if quart == 0.0:
        return float("inf"), float("inf")
    dr = quad / quart
    return dr, math.sqrt(dr)


def max_quartic_magnitude(fit: SurrogateFit) -> float:
    return max((abs(fit.coeffs.get(e, 0.0)) for e in QUARTIC_EXPS), default=0.0)


def gradient_saliency(params: ccore.ModelParams, anchor: np.ndarray,
                      ) -> tuple[np.ndarray, float, float]:
    """Analytic input gradient of the logit difference, with wall time.

    Returns (gradient in R^4, l2 norm, seconds).  The backward pass is the
    same machinery used in training, so it inherits the gradient checks.
    """
    t0 = time.perf_counter()
    grad = ccore.input_gradient(params, np.asarray(anchor, dtype=float))
    dt = time.perf_counter() - t0
    return grad, float(np.linalg.norm(grad)), dt


# ---------------------------------------------------------------------------
# Fragile-anchor triage
# ---------------------------------------------------------------------------

TRIAGE_SCORES = ("abs_c4", "grad_norm", "inv_r_grad", "inv_r_dom")


def _score_value(row: TriageRow, score: str) -> float:
    if score == "abs_c4":
        return row.abs_c4
    if score == "grad_norm":
        return row.grad_norm
    if score == "inv_r_grad":
        return row.inv_r_grad
    if score == "inv_r_dom":
        return 0.0 if math.isinf(row.r_dom) else (
            float("inf") if row.r_dom == 0 else 1.0 / row.r_dom)
    raise ValueError(f"unknown triage score {score!r}")


def triage(rows: list[TriageRow], score: str,
           ) -> tuple[list[tuple[float, float, float]], float, bool]:
    """Precision-recall curve and average precision for one ranking score.

    Anchors are ranked by descending score; one PR point is emitted per
    distinct score value and AUPRC is the average precision (precision summed
    over recall increments, no trapezoids).  With all-positive or
    all-negative labels the AUPRC degenerates to the prevalence and the
    degenerate flag is set.
    """
    if not rows:
        raise ValueError("no triage rows")
    labels = np.array([r.fragile for r in rows], dtype=bool)
    values = np.array([_score_value(r, score) for r in rows], dtype=float)
    n_pos = int(labels.sum())
    prevalence = n_pos / len(rows)
    if n_pos == 0 or n_pos == len(rows):
        return [], prevalence, True

    order = np.argsort(-values, kind="stable")
    values = values[order]
    labels = labels[order]

    points = []
    auprc = 0.0
    prev_recall = 0.0
    tp = 0
    k = 0
    n = len(rows)
    while k < n:
        thr = values[k]
        while k < n and values[k] == thr:
            tp += int(labels[k])
            k += 1
        precision = tp / k
        recall = tp / n_pos
        points.append((float(thr), float(precision), float(recall)))
        auprc += precision * (recall - prev_recall)
        prev_recall = recall
    return points, float(auprc), False


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def write_ray_csv(path, probes: list[RayProbe]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAY_CSV_HEADER)
        for p in probes:
            w.writerow([p.source, *(repr(float(v)) for v in p.direction),
                        "" if p.flip_radius is None else repr(p.flip_radius)])


def write_triage_csv(path, rows: list[TriageRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAGE_CSV_HEADER)
        for r in rows:
            w.writerow([r.anchor_id, repr(r.abs_c4), repr(r.grad_norm),
                        repr(r.inv_r_grad), repr(r.r_dom), int(r.fragile)])


def write_pr_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PR_CSV_HEADER)
        for thr, prec, rec in points:
            w.writerow([repr(thr), repr(prec), repr(rec)])
