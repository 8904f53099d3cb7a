"""Newton polygon construction and Newton-Puiseux branch expansion.

Works on sparse bivariate polynomials with complex coefficients, exact
rational x-exponents and integer y-exponents.  Exponent arithmetic is exact
(fractions.Fraction); coefficients are floating complex with documented
tolerances for root residuals and cluster detection.

The expansion solves f(x, y) = 0 near the origin for fractional-power series
y(x) = a1 x^t1 + a2 x^t2 + ... with strictly increasing rational exponents,
following the classical edge-by-edge refinement:

  1. take each compact lower-hull edge of the exponent support,
  2. reduce the quasi-homogeneous edge part to a univariate polynomial in u
     via x = t^p, y = t^q u,
  3. for each nonzero root a, shift y -> y + a x^theta and recurse on edges
     with strictly larger coslope, until the exponent threshold is reached.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

# root-finder tolerances
RESIDUAL_TOL = 1e-12     # target |g(root)| relative to the coefficient norm
CLUSTER_TOL = 1e-8       # distance at which two roots count as one
COEFF_DROP_REL = 1e-14   # relative cutoff for numerically-zero coefficients
MAX_REFINE_DEPTH = 16    # hard recursion cap, independent of the threshold


class EmptyPolynomialError(ValueError):
    """The zero polynomial has no Newton polygon."""


class RootFindingError(RuntimeError):
    """Simultaneous iteration failed to converge; partial roots attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# Sparse bivariate polynomials
# ---------------------------------------------------------------------------

def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    raise TypeError(f"exponents must be exact rationals, got {type(v).__name__}")


class SparsePoly2:
    """Map (x-exponent: Fraction >= 0, y-exponent: int >= 0) -> complex."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[tuple[Fraction, int], complex] = {}
        if terms:
            for (i, j), c in (terms.items() if isinstance(terms, dict) else terms):
                self.add_term(i, j, c)

    def add_term(self, i, j, c) -> None:
        i = _as_fraction(i)
        j = int(j)
        if i < 0 or j < 0:
            raise ValueError("exponents must be non-negative")
        c = complex(c)
        key = (i, j)
        cur = self.terms.get(key, 0j) + c
        if cur == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = cur

    @classmethod
    def from_terms(cls, triples) -> "SparsePoly2":
        p = cls()
        for i, j, c in triples:
            p.add_term(i, j, c)
        return p

    # -- basic queries ------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def support(self) -> list[tuple[Fraction, int]]:
        return sorted(self.terms.keys())

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def y_valuation(self) -> int:
        """Largest k with y^k dividing the polynomial (0 for the zero poly)."""
        if self.is_zero:
            return 0
        return min(j for (_, j) in self.terms)

    def __eq__(self, other):
        return isinstance(other, SparsePoly2) and self.terms == other.terms

    def __repr__(self):
        parts = [f"({c!r})*x^{i}*y^{j}" for (i, j), c in sorted(self.terms.items())]
        return " + ".join(parts) if parts else "0"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "SparsePoly2") -> "SparsePoly2":
        out = SparsePoly2(dict(self.terms))
        for (i, j), c in other.terms.items():
            out.add_term(i, j, c)
        return out

    def __mul__(self, other: "SparsePoly2") -> "SparsePoly2":
        out = SparsePoly2()
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                out.add_term(i1 + i2, j1 + j2, c1 * c2)
        return out

    def scale(self, c) -> "SparsePoly2":
        return SparsePoly2({k: v * c for k, v in self.terms.items()})

    def cleanup(self, rel_tol: float = COEFF_DROP_REL) -> "SparsePoly2":
        """Drop coefficients that are numerically zero relative to the largest."""
        top = self.max_abs_coeff()
        if top == 0.0:
            return SparsePoly2()
        return SparsePoly2({k: v for k, v in self.terms.items()
                            if abs(v) >= rel_tol * top})

    def transpose(self) -> "SparsePoly2":
        """Swap the roles of x and y; requires integer x-exponents."""
        out = SparsePoly2()
        for (i, j), c in self.terms.items():
            if i.denominator != 1:
                raise ValueError("transpose needs integer x-exponents")
            out.add_term(Fraction(j), int(i), c)
        return out

    def evaluate(self, x, y) -> complex:
        """Evaluate with the principal branch for fractional powers of x."""
        total = 0j
        for (i, j), c in self.terms.items():
            total += c * (complex(x) ** float(i)) * (complex(y) ** j)
        return total


def shift_substitute(f: SparsePoly2, a: complex, theta) -> SparsePoly2:
    """Expand f(x, y + a*x^theta) exactly in the exponents.

    Binomial expansion per term; like terms merge and coefficients below the
    relative drop tolerance are removed (they are cancellation noise).
    """
    theta = _as_fraction(theta)
    if theta <= 0:
        raise ValueError("theta must be positive")
    a = complex(a)
    if a == 0:
        return SparsePoly2(dict(f.terms))
    out = SparsePoly2()
    apow = {0: 1.0 + 0j}
    for (i, j), c in f.terms.items():
        for k in range(j + 1):
            # term c * C(j, k) * a^(j-k) * x^(i + theta*(j-k)) * y^k
            e = j - k
            if e not in apow:
                apow[e] = apow[e - 1] * a if (e - 1) in apow else a**e
            out.add_term(i + theta * e, k, c * math.comb(j, k) * apow[e])
    return out.cleanup()


# ---------------------------------------------------------------------------
# Newton polygon
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolygonEdge:
    """Compact lower-hull edge with its primitive inner normal (p, q)."""

    start: tuple[Fraction, int]
    end: tuple[Fraction, int]
    p: int
    q: int
    level: Fraction
    coslope: Fraction


def _cross(o, a, b) -> Fraction:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def newton_polygon(f: SparsePoly2) -> list[PolygonEdge]:
    """Compact edges of the lower-left hull of supp(f) + R+^2.

    Returned in order of increasing coslope.  A single support point yields
    no compact edge and the result is empty.
    """
    if f.is_zero:
        raise EmptyPolynomialError("zero polynomial has no Newton polygon")
    # for each x-exponent keep only the lowest y-exponent; dominated points
    # cannot touch the lower-left hull
    best: dict[Fraction, int] = {}
    for (i, j) in f.terms:
        if i not in best or j < best[i]:
            best[i] = j
    pts = sorted((i, j) for i, j in best.items())
    hull = []
    for pt in pts:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], pt) <= 0:
            hull.pop()
        hull.append(pt)
    edges = []
    for s, e in zip(hull, hull[1:]):
        dj = e[1] - s[1]
        if dj >= 0:
            break  # slope no longer negative: boundary heads off to +inf
        di = e[0] - s[0]
        # inner normal (p, q) with p*i + q*j constant: (p, q) ~ (-dj, di)
        p_raw = Fraction(-dj)
        q_raw = di
        den = p_raw.denominator * q_raw.denominator // math.gcd(
            p_raw.denominator, q_raw.denominator)
        p_int = int(p_raw * den)
        q_int = int(q_raw * den)
        g = math.gcd(p_int, q_int)
        p_int //= g
        q_int //= g
        edges.append(PolygonEdge(
            start=s, end=e, p=p_int, q=q_int,
            level=p_int * s[0] + q_int * s[1],
            coslope=Fraction(q_int, p_int)))
    edges.sort(key=lambda ed: ed.coslope)
    return edges


def edge_polynomial(f: SparsePoly2, edge: PolygonEdge) -> np.ndarray:
    """Univariate reduction of the quasi-homogeneous edge part.

    Substituting x = t^p, y = t^q u turns every support point on the edge
    line p*i + q*j = d into a monomial u^j; coefficients are returned in
    ascending order of the u-exponent.
    """
    coeffs: dict[int, complex] = {}
    for (i, j), c in f.terms.items():
        if edge.p * i + edge.q * j == edge.level:
            coeffs[j] = coeffs.get(j, 0j) + c
    deg = max(coeffs)
    out = np.zeros(deg + 1, dtype=complex)
    for j, c in coeffs.items():
        out[j] = c
    return out


# ---------------------------------------------------------------------------
# Univariate complex roots: Aberth simultaneous iteration
# ---------------------------------------------------------------------------

def _polyval(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    for c in coeffs[::-1]:
        out = out * z + c
    return out


def _polyder(coeffs: np.ndarray) -> np.ndarray:
    n = len(coeffs) - 1
    if n <= 0:
        return np.zeros(1, dtype=complex)
    return coeffs[1:] * np.arange(1, n + 1)


def _aberth(coeffs: np.ndarray, maxit: int = 500) -> np.ndarray:
    """All roots of a (zero-root-free) polynomial by Aberth-Ehrlich iteration."""
    n = len(coeffs) - 1
    norm = np.max(np.abs(coeffs))
    if n == 1:
        return np.array([-coeffs[0] / coeffs[1]])
    dcoeffs = _polyder(coeffs)
    radius = 1.0 + np.max(np.abs(coeffs[:-1] / coeffs[-1]))
    angles = 2 * np.pi * (np.arange(n) + 0.5) / n + 0.4
    z = radius * np.exp(1j * angles)
    for _ in range(maxit):
        pv = _polyval(coeffs, z)
        if np.all(np.abs(pv) <= RESIDUAL_TOL * norm):
            return z
        dv = _polyval(dcoeffs, z)
        dv = np.where(dv == 0, 1e-300, dv)
        w = pv / dv
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        s = inv.sum(axis=1)
        denom = 1.0 - w * s
        denom = np.where(denom == 0, 1e-300, denom)
        step = w / denom
        z = z - step
        if np.max(np.abs(step)) <= 1e-14 * (1.0 + np.max(np.abs(z))):
            break
    pv = _polyval(coeffs, z)
    scale = norm * np.maximum(1.0, np.abs(z)) ** n
    if np.any(np.abs(pv) > RESIDUAL_TOL * scale):
        raise RootFindingError(
            f"root iteration did not reach residual tolerance "
            f"(max |g(z)| = {np.max(np.abs(pv)):.3e}, norm = {norm:.3e})",
            partial=z)
    return z


def _newton_multiplicity(coeffs: np.ndarray, z: complex) -> int:
    """Classical multiplicity estimate m = 1 / (1 - p p'' / p'^2) near a root."""
    d1 = _polyder(coeffs)
    d2 = _polyder(d1)
    p = _polyval(coeffs, np.array([z]))[0]
    dp = _polyval(d1, np.array([z]))[0]
    ddp = _polyval(d2, np.array([z]))[0]
    if dp == 0:
        return len(coeffs) - 1
    ratio = 1.0 - p * ddp / (dp * dp)
    if ratio == 0 or not np.isfinite(ratio.real):
        return 1
    m = int(round((1.0 / ratio).real))
    return min(max(m, 1), len(coeffs) - 1)


def _polish_multiple(coeffs: np.ndarray, z: complex, k: int) -> complex:
    """Refine a k-fold root: Newton on the (k-1)-th derivative, where it is simple."""
    d = coeffs
    for _ in range(k - 1):
        d = _polyder(d)
    dd = _polyder(d)
    for _ in range(30):
        pv = _polyval(d, np.array([z]))[0]
        dv = _polyval(dd, np.array([z]))[0]
        if dv == 0:
            break
        step = pv / dv
        z = z - step
        if abs(step) <= 1e-15 * (1.0 + abs(z)):
            break
    return z


def poly_roots(coeffs) -> tuple[list[tuple[complex, int]], int]:
    """Roots with multiplicities of a univariate complex polynomial.

    `coeffs` are ascending.  Returns (nonzero_roots, zero_multiplicity) where
    nonzero_roots is a list of (root, multiplicity) pairs.

    A k-fold root perturbs the computed simple roots into a cluster of
    radius about RESIDUAL_TOL^(1/k), far wider than the base cluster
    tolerance, so clustering uses a per-root multiplicity estimate to pick
    the merge radius, then polishes the cluster center with Newton on the
    (k-1)-th derivative.  Verified invariant: multiplicities sum to deg g.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    nz = np.flatnonzero(np.abs(coeffs) > 0)
    if nz.size == 0:
        raise ValueError("zero polynomial has no well-defined roots")
    coeffs = coeffs[: nz[-1] + 1]
    zero_mult = int(nz[0])
    reduced = coeffs[zero_mult:]
    if len(reduced) == 1:
        return [], zero_mult

    roots = _aberth(reduced)

    mult_est = np.array([_newton_multiplicity(reduced, z) for z in roots])
    scale = np.maximum(1.0, np.abs(roots))
    blur = np.maximum(CLUSTER_TOL * scale,
                      10.0 * RESIDUAL_TOL ** (1.0 / np.maximum(mult_est, 1)) * scale)

    n = len(roots)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) <= max(blur[i], blur[j]):
                parent[find(i)] = find(j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    out = []
    for members in groups.values():
        k = len(members)
        center = complex(np.mean(roots[members]))
        if k > 1:
            center = _polish_multiple(reduced, center, k)
        out.append((center, k))
    out.sort(key=lambda rm: (rm[0].real, rm[0].imag))
    assert sum(m for _, m in out) + zero_mult == len(coeffs) - 1
    return out, zero_mult


# ---------------------------------------------------------------------------
# Branch expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PuiseuxBranch:
    """Truncated fractional-power series solving f(x, y(x)) = 0 locally.

    terms: ((exponent, coefficient), ...) with strictly increasing exponents.
    An empty term list encodes the exact branch y = 0.
    """

    terms: tuple[tuple[Fraction, complex], ...]
    multiplicity: int
    truncated: bool = False

    @property
    def orientation(self) -> float:
        """Argument of the leading coefficient (0 for the zero branch)."""
        if not self.terms:
            return 0.0
        c = self.terms[0][1]
        return math.atan2(c.imag, c.real)

    @property
    def leading_exponent(self) -> Fraction | None:
        return self.terms[0][0] if self.terms else None

    def evaluate(self, x: float) -> complex:
        """Principal-branch evaluation at real x > 0."""
        return sum((c * complex(x) ** float(e) for e, c in self.terms), 0j)


@dataclass
class BranchSummary:
    num_branches: int
    total_multiplicity: int
    orientations: list[float]
    leading_exponents: list[Fraction | None]
    degenerate: bool = False


def puiseux_expand(f: SparsePoly2, threshold=Fraction(4), mirror: bool = False,
                   max_depth: int = MAX_REFINE_DEPTH) -> list[PuiseuxBranch]:
    """All Puiseux branches of f(x, y) = 0 at the origin, up to the threshold.

    Top-level polygon edges are always expanded; refinement continues only
    along edges whose coslope exceeds the last exponent and stays within the
    threshold, matching the classical procedure.  With mirror=True the roles
    of x and y are swapped (expansions x(y)); the transposed exponent pairs
    run through the same engine.
    """
    threshold = _as_fraction(threshold)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if f.is_zero:
        raise EmptyPolynomialError("cannot expand the zero polynomial")
    if mirror:
        f = f.transpose()

    out: list[PuiseuxBranch] = []

    def emit(prefix, multiplicity, truncated=False):
        out.append(PuiseuxBranch(terms=tuple(prefix), multiplicity=multiplicity,
                                 truncated=truncated))

    def recurse(g: SparsePoly2, prefix, theta_prev: Fraction, last_mult: int,
                depth: int):
        if g.is_zero:
            # cancellation consumed every term: the prefix is an exact root
            emit(prefix, last_mult)
            return
        exact = g.y_valuation() >= 1
        if exact:
            # y divides g: the current prefix solves f exactly (y = 0 branch
            # at the top level); other continuations may still exist below
            emit(prefix, g.y_valuation())
        if depth >= max_depth:
            if prefix and not exact:
                emit(prefix, last_mult, truncated=True)
            return
        edges = [e for e in newton_polygon(g) if e.coslope > theta_prev]
        if depth == 0:
            refine = edges
        else:
            refine = [e for e in edges if e.coslope <= threshold]
        if not refine:
            if prefix and not exact:
                emit(prefix, last_mult, truncated=bool(edges))
            return
        for edge in refine:
            upoly = edge_polynomial(g, edge)
            nonzero_roots, _ = poly_roots(upoly)
            for a, mult in nonzero_roots:
                g2 = shift_substitute(g, a, edge.coslope)
                recurse(g2, prefix + [(edge.coslope, a)], edge.coslope, mult,
                        depth + 1)

    recurse(f, [], Fraction(0), 0, 0)
    out.sort(key=lambda b: ([(float(e), c.real, c.imag) for e, c in b.terms]))
    return out


def branch_summary(branches: list[PuiseuxBranch]) -> BranchSummary:
    """Aggregate descriptors consumed by calibration and ray generation."""
    if not branches:
        return BranchSummary(0, 0, [], [], degenerate=True)
    return BranchSummary(
        num_branches=len(branches),
        total_multiplicity=sum(b.multiplicity for b in branches),
        orientations=[b.orientation for b in branches],
        leading_exponents=[b.leading_exponent for b in branches],
    )


def branch_residual(f: SparsePoly2, branch: PuiseuxBranch, x: float = 1e-3) -> float:
    """|f(x, y(x))| at real x, principal branch of fractional powers."""
    return abs(f.evaluate(x, branch.evaluate(x)))


# ---------------------------------------------------------------------------
# Text formats
# ---------------------------------------------------------------------------

def poly_to_text(f: SparsePoly2) -> str:
    """One `coeff_re coeff_im xnum/xden yexp` line per term."""
    lines = []
    for (i, j), c in sorted(f.terms.items()):
        lines.append(f"{c.real!r} {c.imag!r} {i.numerator}/{i.denominator} {j}")
    return "\n".join(lines) + "\n"


def poly_from_text(text: str) -> SparsePoly2:
    p = SparsePoly2()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        re_s, im_s, xexp, yexp = line.split()
        num, den = xexp.split("/")
        p.add_term(Fraction(int(num), int(den)), int(yexp),
                   complex(float(re_s), float(im_s)))
    return p


def branch_to_dict(branch: PuiseuxBranch) -> dict:
    return {
        "terms": [{"exp_num": e.numerator, "exp_den": e.denominator,
                   "re": c.real, "im": c.imag} for e, c in branch.terms],
        "multiplicity": branch.multiplicity,
        "orientation_rad": branch.orientation,
    }


def branch_from_dict(doc: dict) -> PuiseuxBranch:
    terms = tuple((Fraction(t["exp_num"], t["exp_den"]), complex(t["re"], t["im"]))
                  for t in doc["terms"])
    return PuiseuxBranch(terms=terms, multiplicity=int(doc["multiplicity"]))
