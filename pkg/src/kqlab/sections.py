"""Adjoint section spaces, diagonal Hilbert forms, quantized energy and Bergman densities.

Sections of the adjoint bundle of ``O(d)^k (x) O(1)^m`` on P^1 are spanned by
the monomials ``z^j dz`` with ``0 <= j <= d*k + m - 2``.  For a radial weight
the L^2 Gram matrix is diagonal, so a Hilbert form is a list of log norms

    log G_j = log( pi * int exp((j+1)s - k*(phi0 + u)(s) - m*fs(s)) ds ).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .pluripotential import PolarizedModel, Weight
from .radial import (
    GridFunction,
    fubini_study,
    log_trapezoid,
    log_weighted_integral,
    stable_sum,
)

__all__ = [
    "NoSectionsError",
    "QuadratureResolutionError",
    "SectionSpace",
    "HilbertForm",
    "BergmanDensity",
    "section_space",
    "hilbert_form",
    "quantized_energy",
    "bergman_density",
    "extremal_ratio",
    "density_at",
    "pair_density",
]

LOG_PI = math.log(math.pi)


class NoSectionsError(ValueError):
    """The adjoint bundle has no holomorphic sections."""


class QuadratureResolutionError(ArithmeticError):
    """A quadrature identity failed; the grid is too coarse or too short."""


def _as_function(u: Weight | GridFunction) -> GridFunction:
    f = u.u if isinstance(u, Weight) else u
    if not f.is_bounded():
        raise ValueError(f"weight must be bounded (zero slopes), got slopes {f.slopes}")
    return f


@dataclass(frozen=True, eq=False)
class SectionSpace:
    model: PolarizedModel
    k: int
    m: int = 0

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"m must be a non-negative integer, got {self.m}")
        if self.model.d * self.k + self.m < 2:
            raise NoSectionsError(
                f"d*k + m = {self.model.d * self.k + self.m} < 2: no adjoint sections"
            )

    @property
    def degree(self) -> int:
        """Total degree ``d*k + m`` of the twisted bundle."""
        return self.model.d * self.k + self.m

    @property
    def dimension(self) -> int:
        return self.degree - 1

    @property
    def exponents(self) -> np.ndarray:
        return np.arange(self.dimension)

    @property
    def grid(self):
        return self.model.grid

    @cached_property
    def twist(self) -> GridFunction:
        return fubini_study(self.grid, float(self.m))

    def total_weight(self, u: Weight | GridFunction) -> GridFunction:
        """``k*(phi0 + u) + m*fs`` as a grid function with slopes ``(0, d*k + m)``."""
        f = _as_function(u)
        return (self.model.phi0 + f) * float(self.k) + self.twist

    @cached_property
    def reference(self) -> "HilbertForm":
        zero = GridFunction(self.grid, np.zeros(self.grid.n_nodes), 0.0, 0.0)
        return hilbert_form(self, zero)


def section_space(model: PolarizedModel, k: int, m: int = 0) -> SectionSpace:
    return SectionSpace(model, k, m)


@dataclass(frozen=True, eq=False)
class HilbertForm:
    space: SectionSpace
    log_norms: np.ndarray
    weight: GridFunction

    def log_density_terms(self, s: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Matrix of ``log(pi e^{(j+1)s - W} / G_j)`` with rows indexed by ``j``."""
        j1 = (self.space.exponents + 1.0)[:, None]
        return LOG_PI + j1 * s[None, :] - W[None, :] - self.log_norms[:, None]


def hilbert_form(space: SectionSpace, u: Weight | GridFunction) -> HilbertForm:
    W = space.total_weight(u)
    logs = np.array([LOG_PI + log_weighted_integral(float(j + 1), W) for j in space.exponents])
    logs.setflags(write=False)
    return HilbertForm(space, logs, _as_function(u))


def quantized_energy(space: SectionSpace, u: Weight | GridFunction,
                     reference: HilbertForm | None = None) -> float:
    """Normalised log-determinant ratio ``-(1/(k N)) sum_j (log G_j(u) - log G_j(ref))``."""
    ref = space.reference if reference is None else reference
    form = hilbert_form(space, u)
    diff = stable_sum(form.log_norms - ref.log_norms)
    return -diff / (space.k * space.dimension)


def _log_sum_rows(terms: np.ndarray) -> np.ndarray:
    """Column-wise log-sum-exp with a max shift (fixed reduction order)."""
    top = terms.max(axis=0)
    return top + np.log(np.exp(terms - top[None, :]).sum(axis=0))


@dataclass(frozen=True, eq=False)
class BergmanDensity:
    space: SectionSpace
    form: HilbertForm
    density: GridFunction
    normalized: bool
    mass: float

    def cdf(self) -> np.ndarray:
        """Cumulative distribution at the nodes (trapezoid cells plus the left tail)."""
        p = self.density.values
        h = self.density.grid.h
        left_tail = p[0]  # the density decays like e^{s} to the left
        cells = 0.5 * h * (p[1:] + p[:-1])
        return np.concatenate(([left_tail], left_tail + np.cumsum(cells)))


def _density_values(form: HilbertForm, s: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.exp(_log_sum_rows(form.log_density_terms(s, W)))


def bergman_density(space: SectionSpace, u: Weight | GridFunction,
                    normalized: bool = True, rel_tol: float = 1e-6) -> BergmanDensity:
    """Bergman density pushed to the s-line: ``sum_j pi e^{(j+1)s - W} / G_j``."""
    form = hilbert_form(space, u)
    W = space.total_weight(u)
    s = space.grid.nodes
    logp = _log_sum_rows(form.log_density_terms(s, W.values))
    # tails decay like e^{s} on the left and e^{-s} on the right
    log_mass = log_trapezoid(logp, space.grid.h, 1.0, -1.0)
    mass = math.exp(log_mass)
    n = space.dimension
    if abs(mass / n - 1.0) > rel_tol:
        raise QuadratureResolutionError(
            f"Bergman mass {mass!r} differs from dimension {n} by more than {rel_tol:g} "
            "relative; enlarge or refine the grid"
        )
    p = np.exp(logp)
    if normalized:
        p = p / n
        mass = mass / n
    return BergmanDensity(space, form, GridFunction(space.grid, p, 0.0, 0.0), normalized, mass)


def density_at(form: HilbertForm, s: float) -> float:
    """Unnormalised Bergman density at an arbitrary point ``s``."""
    W = form.space.total_weight(form.weight)(np.array([s]))
    return float(_density_values(form, np.array([s]), np.asarray(W))[0])


def extremal_ratio(space: SectionSpace, u: Weight | GridFunction,
                   coefficients: np.ndarray, s_point: float,
                   form: HilbertForm | None = None) -> float:
    """Pointwise-to-L^2 ratio of the section ``sum_j c_j z^j dz`` at ``|z|^2 = e^s``.

    Evaluated on the positive real axis and pushed to the s-line in the same
    normalisation as :func:`bergman_density`, so it never exceeds the
    unnormalised density at ``s_point``.
    """
    c = np.asarray(coefficients, dtype=np.complex128)
    if c.shape != (space.dimension,):
        raise ValueError(f"need {space.dimension} coefficients, got shape {c.shape}")
    nz = np.abs(c) > 0
    if not nz.any():
        raise ValueError("coefficient vector is zero")
    form = hilbert_form(space, u) if form is None else form
    j = space.exponents[nz].astype(np.float64)
    cc = c[nz]
    log_abs = np.log(np.abs(cc))
    log_mag = log_abs + 0.5 * j * s_point
    top = float(log_mag.max())
    value = np.sum((cc / np.abs(cc)) * np.exp(log_mag - top))
    log_num = 2.0 * (top + math.log(abs(value))) if value != 0 else -math.inf
    log_norm = 2.0 * log_abs + form.log_norms[nz]
    ln_top = float(log_norm.max())
    log_den = ln_top + math.log(stable_sum(np.exp(log_norm - ln_top)))
    W = float(space.total_weight(u)(s_point))
    return math.exp(LOG_PI + s_point - W + log_num - log_den)


def pair_density(f: GridFunction, bergman: BergmanDensity) -> float:
    """``int f(s) p(s) ds`` by the trapezoid rule plus the exponential tails of ``p``."""
    p = bergman.density
    if f.grid != p.grid:
        raise ValueError("function and density live on different grids")
    w = f.values * p.values
    h = p.grid.h
    terms = h * w
    terms[0] *= 0.5
    terms[-1] *= 0.5
    # f is constant beyond the grid and p decays like e^{-|s|}
    tails = [w[0], w[-1]]
    return stable_sum(np.concatenate((terms, tails)))
