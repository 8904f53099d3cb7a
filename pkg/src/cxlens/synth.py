"""Two-class C^2 helix dataset.

Each sample is a pair of complex numbers (z1, z2) built from normally drawn
amplitudes and phases; the two classes overlap in amplitude but differ by
90-degree phase offsets, producing a helical decision boundary in R^4.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

CSV_HEADER = ["id", "re1", "re2", "im1", "im2", "label"]


@dataclass(frozen=True)
class ClassParams:
    mu_r1: float
    sd_r1: float
    mu_r2: float
    sd_r2: float
    mu_phi1: float
    mu_phi2: float


@dataclass(frozen=True)
class HelixParams:
    """Generator parameters; defaults reproduce the standard benchmark."""

    class0: ClassParams = ClassParams(1.0, 0.10, 2.0, 0.20, 0.0, math.pi / 4)
    class1: ClassParams = ClassParams(1.5, 0.15, 2.0, 0.20, math.pi / 2, -math.pi)
    sd_phi: float = 0.3
    n_per_class: int = 2000
    seed: int = 42
    train_frac: float = 0.8

    def __post_init__(self):
        for cp in (self.class0, self.class1):
            if cp.sd_r1 <= 0 or cp.sd_r2 <= 0:
                raise ValueError("amplitude standard deviations must be positive")
        if self.sd_phi <= 0:
            raise ValueError("sd_phi must be positive")
        if not (0 < self.train_frac < 1):
            raise ValueError("train_frac must lie in (0, 1)")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")


def _normal(rng: np.random.Generator, mu: float, sd: float, size: int) -> np.ndarray:
    # Inverse-CDF transform of the uniform stream; fixed so that the exact
    # draw sequence is reproducible independent of numpy's ziggurat details.
    return mu + sd * ndtri(rng.random(size))


def _positive_normal(rng: np.random.Generator, mu: float, sd: float, size: int) -> np.ndarray:
    # Amplitudes are radii; non-positive draws are rejected and resampled.
    out = _normal(rng, mu, sd, size)
    bad = out <= 0
    while np.any(bad):
        out[bad] = _normal(rng, mu, sd, int(bad.sum()))
        bad = out <= 0
    return out


def _sample_class(rng: np.random.Generator, cp: ClassParams, sd_phi: float, n: int) -> np.ndarray:
    r1 = _positive_normal(rng, cp.mu_r1, cp.sd_r1, n)
    r2 = _positive_normal(rng, cp.mu_r2, cp.sd_r2, n)
    phi1 = _normal(rng, cp.mu_phi1, sd_phi, n)
    phi2 = _normal(rng, cp.mu_phi2, sd_phi, n)
    z1 = r1 * np.exp(1j * phi1)
    z2 = r2 * np.exp(1j * phi2)
    return np.column_stack([z1.real, z2.real, z1.imag, z2.imag])


def generate(p: HelixParams) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample the dataset and return (X_train, y_train, X_test, y_test).

    The split is stratified per class (80/20 by default) and every draw comes
    from one seeded stream, so equal seeds give identical datasets.
    """
    rng = np.random.default_rng(p.seed)
    n_train = round(p.train_frac * p.n_per_class)

    train_parts, test_parts = [], []
    train_labels, test_labels = [], []
    for label, cp in enumerate((p.class0, p.class1)):
        X = _sample_class(rng, cp, p.sd_phi, p.n_per_class)
        train_parts.append(X[:n_train])
        test_parts.append(X[n_train:])
        train_labels.append(np.full(n_train, label))
        test_labels.append(np.full(p.n_per_class - n_train, label))

    X_train = np.concatenate(train_parts)
    y_train = np.concatenate(train_labels)
    X_test = np.concatenate(test_parts)
    y_test = np.concatenate(test_labels)

    perm_train = rng.permutation(len(y_train))
    perm_test = rng.permutation(len(y_test))
    return X_train[perm_train], y_train[perm_train], X_test[perm_test], y_test[perm_test]


def write_csv(path, X: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i, (row, label) in enumerate(zip(X, y)):
            w.writerow([i, repr(float(row[0])), repr(float(row[1])),
                        repr(float(row[2])), repr(float(row[3])), int(label)])


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    X, y = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected dataset header: {header}")
        for row in r:
            X.append([float(v) for v in row[1:5]])
            y.append(int(row[5]))
    return np.array(X, dtype=float), np.array(y, dtype=int)
