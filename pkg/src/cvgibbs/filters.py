"""Frequency filters for the Gibbs samplers and their KMS audit.

A filter f maps a Bohr frequency nu to a complex weight. The samplers
require the KMS condition

    conj(f(nu)) = f(-nu) * exp(-beta * nu / 2),

which makes the Gibbs state stationary and the generator self-adjoint in
the KMS inner product.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

KMS_TOL = 1e-12


@dataclass(frozen=True)
class FilterFunction:
    """Evaluable filter with its inverse temperature.

    ``kind`` is 'metropolis', 'gaussian_kms' or 'custom'. For custom filters
    ``evaluator`` supplies the values.
    """

    kind: str
    beta: float
    width: float | None = None
    evaluator: Callable | None = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.kind == "gaussian_kms":
            if self.width is None:
                object.__setattr__(self, "width", 1.0 / self.beta)
            if not self.width > 0:
                raise ValueError("gaussian_kms width must be positive")
        elif self.kind == "custom":
            if self.evaluator is None:
                raise ValueError("custom filters need an evaluator")
        elif self.kind != "metropolis":
            raise ValueError(f"unknown filter kind '{self.kind}'")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @property
    def label(self) -> str:
        if self.kind == "gaussian_kms":
            return f"gaussian_kms(beta={self.beta},width={self.width})"
        return f"{self.name}(beta={self.beta})"

    def log_abs_scaled(self, nu, shift):
        """log|f(nu)| + shift * nu for the built-in families, computed stably."""
        nu = np.asarray(nu, dtype=float)
        b = self.beta
        if self.kind == "metropolis":
            return -(np.sqrt(1 + (b * nu) ** 2) + b * nu) / 4 + shift * nu
        if self.kind == "gaussian_kms":
            return -b * nu / 4 - nu**2 / (4 * self.width**2) + shift * nu
        raise TypeError("log form only available for built-in filters")

    def __call__(self, nu):
        return self.scaled(nu, 0.0)

    def scaled(self, nu, shift):
        """f(nu) * exp(shift * nu).

        Built-in filters are positive, so the product is evaluated in log
        space; ``shift = beta/4`` gives the filter of the self-adjoint
        picture without overflow.
        """
        nu = np.asarray(nu, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.evaluator(nu), dtype=complex) * np.exp(shift * nu)
        return np.exp(self.log_abs_scaled(nu, shift)).astype(complex)


def metropolis(beta: float) -> FilterFunction:
    return FilterFunction("metropolis", beta)


def gaussian_kms(beta: float, width: float | None = None) -> FilterFunction:
    return FilterFunction("gaussian_kms", beta, width)


def custom_filter(beta: float, func: Callable, name: str = "custom") -> FilterFunction:
    return FilterFunction("custom", beta, evaluator=func, name=name)


def load_filter_table(path, beta: float, name: str | None = None) -> FilterFunction:
    """Custom filter from a CSV table with columns nu, re, im.

    Values between nodes are linearly interpolated; outside the table the
    filter is zero.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                continue  # header line
    table = np.array(sorted(rows))
    if table.ndim != 2 or table.shape[1] != 3 or len(table) < 2:
        raise ValueError(f"filter table {path} needs at least two (nu, re, im) rows")
    nus, re, im = table.T

    def evaluate(nu):
        nu = np.asarray(nu, dtype=float)
        return np.interp(nu, nus, re, left=0.0, right=0.0) + 1j * np.interp(nu, nus, im, left=0.0, right=0.0)

    return custom_filter(beta, evaluate, name or f"table:{path}")


def default_grid(beta: float, points: int = 401) -> np.ndarray:
    return np.linspace(-10.0 / beta, 10.0 / beta, points)


def kms_defects(filt: FilterFunction, grid) -> np.ndarray:
    """Pointwise |conj f(nu) - f(-nu) e^{-beta nu/2}| / max(1, |f(nu)|)."""
    grid = np.asarray(grid, dtype=float)
    f = filt(grid)
    if filt.kind == "custom":
        mirrored = filt(-grid) * np.exp(-filt.beta * grid / 2)
    else:
        # both sides in log space so large |nu| does not overflow
        mirrored = filt.scaled(-grid, filt.beta / 2)
    return np.abs(np.conj(f) - mirrored) / np.maximum(1.0, np.abs(f))


@dataclass(frozen=True)
class KMSReport:
    max_violation: float
    worst_nu: float
    sup_abs: float
    sup_weighted: float
    passed: bool


def kms_audit(filt: FilterFunction, grid=None) -> KMSReport:
    """Check the KMS condition and boundedness on a symmetric grid."""
    grid = default_grid(filt.beta) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if not np.allclose(np.sort(grid), np.sort(-grid), atol=1e-12):
        raise ValueError("grid must be symmetric about zero")
    defects = kms_defects(filt, grid)
    worst = int(np.argmax(defects))
    sup_abs = float(np.abs(filt(grid)).max())
    sup_weighted = float(np.abs(filt.scaled(grid, filt.beta / 2)).max())
    ok = bool(defects[worst] <= KMS_TOL and np.isfinite(sup_abs) and np.isfinite(sup_weighted))
    return KMSReport(float(defects[worst]), float(grid[worst]), sup_abs, sup_weighted, ok)


def birth_death_rates(filt: FilterFunction, omega: float) -> tuple:
    """(nu_plus, nu_minus) = (|f(omega)|^2, |f(-omega)|^2)."""
    f = filt(np.array([omega, -omega]))
    return float(abs(f[0]) ** 2), float(abs(f[1]) ** 2)
