"""Kink-aware local polynomial surrogate of the logit difference.

Around an anchor z* the logit difference f = l_0 - l_1 is approximated by a
degree-d bivariate polynomial in the centered complex coordinates
(xi, eta) = (z1 - z1*, z2 - z2*), with the constant and linear monomials
excluded so the surrogate vanishes at the anchor by construction.

Samples whose smallest first-layer modReLU margin falls inside the kink band
are excluded; the rest are weighted by that margin (optionally with distance
decay) and fitted by column-scaled weighted ridge least squares with complex
coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ccore
from .puiseux import SparsePoly2

COEFF_PRUNE_REL = 1e-12  # sparse support cutoff before branch analysis


class InsufficientSamplesError(RuntimeError):
    """Too few samples survived kink filtering (or fewer than unknowns)."""

    def __init__(self, message, kept_ratio=0.0):
        super().__init__(message)
        self.kept_ratio = kept_ratio


class UnfittableAnchorError(RuntimeError):
    """Every fallback (radius halving, degree reduction) was exhausted."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


@dataclass
class SurrogateConfig:
    degree: int = 4
    radius: float = 0.05
    n_fit: int = 600
    n_eval: int = 200
    kink_eps: float = 1e-6
    ridge: float = 1e-8
    weight_by_distance: bool = True
    min_keep_ratio: float = 0.25
    cond_max: float = 1e10
    seed: int = 0

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("degree must be >= 2")
        if not (self.radius > 0):
            raise ValueError("radius must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if not (0 < self.min_keep_ratio <= 1):
            raise ValueError("min_keep_ratio must lie in (0, 1]")


@dataclass
class Fidelity:
    rmse: float
    mae: float
    pearson: float
    sign_agreement: float
    available: bool = True


@dataclass
class SurrogateFit:
    """Fitted coefficients keyed by (i, j) with 2 <= i+j <= degree_used."""

    coeffs: dict[tuple[int, int], complex]
    degree_used: int
    radius_used: float
    cond_A: float
    rank_A: int
    kept_ratio: float
    fidelity: Fidelity | None = None

    def evaluate(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Complex surrogate values; compare the real part against f."""
        xi = np.asarray(xi, dtype=complex)
        out = np.zeros_like(xi)
        for (i, j), c in self.coeffs.items():
            out = out + c * xi**i * eta**j
        return out

    def to_poly(self, prune_rel: float = COEFF_PRUNE_REL) -> SparsePoly2:
        """Sparse polynomial for the branch engine, tiny coefficients pruned."""
        top = max((abs(c) for c in self.coeffs.values()), default=0.0)
        poly = SparsePoly2()
        for (i, j), c in self.coeffs.items():
            if top and abs(c) >= prune_rel * top:
                poly.add_term(i, j, c)
        return poly


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """All (i, j) with 2 <= i + j <= degree, in a fixed deterministic order."""
    return [(i, t - i) for t in range(2, degree + 1) for i in range(t, -1, -1)]


def num_unknowns(degree: int) -> int:
    return math.comb(degree + 2, 2) - 3


def design_matrix(xi: np.ndarray, eta: np.ndarray, degree: int) -> np.ndarray:
    exps = monomial_exponents(degree)
    A = np.empty((xi.size, len(exps)), dtype=complex)
    for col, (i, j) in enumerate(exps):
        A[:, col] = xi**i * eta**j
    return A


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_neighborhood(params: ccore.ModelParams, anchor: np.ndarray,
                        cfg: SurrogateConfig, rng: np.random.Generator,
                        n: int | None = None, radius: float | None = None,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Draw perturbations, evaluate f, filter the kink band, weight the rest.

    Returns (delta, f_values, weights, kept_ratio) where delta holds the raw
    R^4 perturbations of the kept samples.  Raises InsufficientSamplesError
    when fewer than min_keep_ratio of the draws survive.
    """
    n = cfg.n_fit if n is None else n
    radius = cfg.radius if radius is None else radius
    anchor = np.asarray(anchor, dtype=float)
    delta = rng.uniform(-radius, radius, size=(n, 4))
    logits, margins = ccore.forward(params, anchor + delta)
    f = logits[:, 0] - logits[:, 1]
    min_s = margins.min(axis=1)
    keep = min_s > cfg.kink_eps
    kept_ratio = float(keep.sum()) / n
    if kept_ratio < cfg.min_keep_ratio:
        raise InsufficientSamplesError(
            f"kink filter kept {keep.sum()}/{n} samples "
            f"(ratio {kept_ratio:.3f} < {cfg.min_keep_ratio})",
            kept_ratio=kept_ratio)
    delta = delta[keep]
    f = f[keep]
    w = np.maximum(min_s[keep], 0.0) + 1e-9
    if cfg.weight_by_distance:
        w = w / (1.0 + np.linalg.norm(delta, axis=1) / radius)
    return delta, f, w, kept_ratio


def perturbations_to_xi_eta(delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    return delta[:, 0] + 1j * delta[:, 2], delta[:, 1] + 1j * delta[:, 3]


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------

def fit_polynomial(points: np.ndarray, f_values: np.ndarray, weights: np.ndarray,
                   cfg: SurrogateConfig, degree: int | None = None,
                   radius_used: float | None = None,
                   kept_ratio: float = 1.0) -> SurrogateFit:
    """Single weighted-ridge solve on one sample set (no fallback here).

    The weighted design matrix is column-scaled to unit l2 norm, solved as an
    augmented least-squares system through an orthogonal factorization (never
    normal equations), and the coefficients are unscaled back to the raw
    monomial basis.  cond(A) and rank(A) refer to the matrix actually solved.
    """
    degree = cfg.degree if degree is None else degree
    radius_used = cfg.radius if radius_used is None else radius_used
    xi, eta = perturbations_to_xi_eta(points)
    f_values = np.asarray(f_values)
    weights = np.asarray(weights, dtype=float)
    M = num_unknowns(degree)
    if xi.size < M:
        raise InsufficientSamplesError(
            f"{xi.size} samples for {M} unknowns", kept_ratio=kept_ratio)

    A = design_matrix(xi, eta, degree)
    sw = np.sqrt(weights)
    Aw = A * sw[:, None]
    Fw = f_values * sw
    colnorm = np.linalg.norm(Aw, axis=0)
    colnorm = np.where(colnorm > 0, colnorm, 1.0)
    As = Aw / colnorm

    sv = np.linalg.svd(As, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * max(As.shape) * np.finfo(float).eps)) if sv[0] > 0 else 0
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")

    if cfg.ridge > 0:
        A_aug = np.vstack([As, math.sqrt(cfg.ridge) * np.eye(M, dtype=complex)])
        F_aug = np.concatenate([Fw, np.zeros(M, dtype=Fw.dtype)])
    else:
        A_aug, F_aug = As, Fw
    c_scaled, *_ = np.linalg.lstsq(A_aug, F_aug.astype(complex), rcond=None)
    c = c_scaled / colnorm

    coeffs = {exp: complex(cv) for exp, cv in zip(monomial_exponents(degree), c)}
    return SurrogateFit(coeffs=coeffs, degree_used=degree, radius_used=radius_used,
                        cond_A=cond, rank_A=rank, kept_ratio=kept_ratio)


def _fallback_ladder(cfg: SurrogateConfig) -> list[tuple[int, float]]:
    """Retry plan: halve the radius, then drop the degree, alternating."""
    ladder = [(cfg.degree, cfg.radius)]
    d, r = cfg.degree, cfg.radius
    while True:
        r = r / 2
        ladder.append((d, r))
        if d <= 2:
            break
        d = d - 1
        ladder.append((d, r))
    return ladder


def fit_anchor_surrogate(params: ccore.ModelParams, anchor: np.ndarray,
                         cfg: SurrogateConfig,
                         rng: np.random.Generator | None = None,
                         timings: dict | None = None) -> SurrogateFit:
    """Sample, fit, and fall back until the diagnostics pass.

    An attempt fails when the kink filter keeps too little, the scaled design
    is rank deficient, or its condition number exceeds cond_max; each retry
    re-samples at the next (degree, radius) rung.  Exhausting the ladder
    raises UnfittableAnchorError carrying per-attempt diagnostics.

    When given, `timings` accumulates wall seconds under the keys "sampling"
    and "lstsq".
    """
    import time as _time

    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    attempts = []
    for degree, radius in _fallback_ladder(cfg):
        M = num_unknowns(degree)
        try:
            t0 = _time.perf_counter()
            delta, f, w, kept = sample_neighborhood(
                params, anchor, cfg, rng, n=cfg.n_fit, radius=radius)
            t1 = _time.perf_counter()
            fit = fit_polynomial(delta, f, w, cfg, degree=degree,
                                 radius_used=radius, kept_ratio=kept)
            t2 = _time.perf_counter()
            if timings is not None:
                timings["sampling"] = timings.get("sampling", 0.0) + (t1 - t0)
                timings["lstsq"] = timings.get("lstsq", 0.0) + (t2 - t1)
        except InsufficientSamplesError as exc:
            if timings is not None:
                timings["sampling"] = timings.get("sampling", 0.0) + (
                    _time.perf_counter() - t0)
            attempts.append({"degree": degree, "radius": radius,
                             "kept_ratio": exc.kept_ratio, "reason": "insufficient"})
            continue
        if fit.cond_A > cfg.cond_max or fit.rank_A < M:
            attempts.append({"degree": degree, "radius": radius,
                             "cond_A": fit.cond_A, "rank_A": fit.rank_A,
                             "reason": "ill_conditioned"})
            continue
        return fit
    raise UnfittableAnchorError(
        f"no usable fit after {len(attempts)} attempts", attempts)


# ---------------------------------------------------------------------------
# Fidelity and kink diagnostics
# ---------------------------------------------------------------------------

def fidelity_metrics(fhat: np.ndarray, f: np.ndarray) -> Fidelity:
    """RMSE, MAE, Pearson rho, and sign agreement (sign(0) counts as +)."""
    fhat = np.asarray(fhat, dtype=float)
    f = np.asarray(f, dtype=float)
    if f.size < 2:
        return Fidelity(float("nan"), float("nan"), float("nan"), float("nan"),
                        available=False)
    err = fhat - f
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    sf, sfh = np.std(f), np.std(fhat)
    if sf > 0 and sfh > 0:
        pearson = float(np.mean((f - f.mean()) * (fhat - fhat.mean())) / (sf * sfh))
    else:
        pearson = float("nan")
    sign = lambda v: np.where(v >= 0, 1.0, -1.0)
    sa = float(np.mean(sign(fhat) == sign(f)))
    return Fidelity(rmse=rmse, mae=mae, pearson=pearson, sign_agreement=sa)


def evaluate_fidelity(fit: SurrogateFit, params: ccore.ModelParams,
                      anchor: np.ndarray, cfg: SurrogateConfig,
                      rng: np.random.Generator | None = None) -> Fidelity:
    """Fidelity of the fit on fresh filtered perturbations."""
    rng = np.random.default_rng(cfg.seed + 1) if rng is None else rng
    try:
        delta, f, _, _ = sample_neighborhood(
            params, anchor, cfg, rng, n=cfg.n_eval, radius=fit.radius_used)
    except InsufficientSamplesError:
        return Fidelity(float("nan"), float("nan"), float("nan"), float("nan"),
                        available=False)
    xi, eta = perturbations_to_xi_eta(delta)
    return fidelity_metrics(fit.evaluate(xi, eta).real, f)


def kink_prevalence(params: ccore.ModelParams, anchor: np.ndarray,
                    n_draws: int = 2000, radius: float = 0.05,
                    rng: np.random.Generator | None = None,
                    fd_step: float | None = None) -> tuple[float, bool]:
    """Angular dispersion (radians) of local finite-difference gradients of f.

    Points are drawn on spheres of several radii around the anchor; each
    contributes the direction of the central-difference gradient.  The score
    is the root-mean-square angle between those directions and their
    resultant mean.  Returns (score, degenerate) with degenerate=True when
    every gradient vanishes.
    """
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    rng = np.random.default_rng(0) if rng is None else rng
    anchor = np.asarray(anchor, dtype=float)
    h = fd_step if fd_step is not None else max(1e-6, 1e-3 * radius)

    dirs = rng.normal(size=(n_draws, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * (0.25 + 0.75 * rng.random(n_draws))
    pts = anchor + dirs * radii[:, None]

    grads = np.empty((n_draws, 4))
    for d in range(4):
        step = np.zeros(4)
        step[d] = h
        fp = _logit_diff_batch(params, pts + step)
        fm = _logit_diff_batch(params, pts - step)
        grads[:, d] = (fp - fm) / (2 * h)

    norms = np.linalg.norm(grads, axis=1)
    nz = norms > 0
    if not np.any(nz):
        return 0.0, True
    units = grads[nz] / norms[nz, None]
    resultant = units.mean(axis=0)
    rnorm = np.linalg.norm(resultant)
    mean_dir = resultant / rnorm if rnorm > 1e-12 else units[0]
    cosines = np.clip(units @ mean_dir, -1.0, 1.0)
    angles = np.arccos(cosines)
    return float(np.sqrt(np.mean(angles**2))), False


def _logit_diff_batch(params: ccore.ModelParams, X: np.ndarray) -> np.ndarray:
    logits, _ = ccore.forward(params, X)
    return logits[:, 0] - logits[:, 1]
