"""Large-power behaviour: ambient Bergman kernels, peak sections, comparison,
local Morse bounds and convergence of Bergman measures to equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import minimize_scalar

from .pluripotential import PolarizedModel, Weight, envelope, ma_energy, v_theta
from .radial import DEFAULT_GRID, ConvexPotential, Grid, GridFunction, log_weighted_integral
from .sections import SectionSpace, bergman_density, quantized_energy

__all__ = [
    "KahlerViolationError",
    "IllConditionedFitError",
    "TheoremViolationError",
    "RadialMetric",
    "AmbientKernel",
    "ExpansionFit",
    "PeakExtension",
    "MorseReport",
    "EquilibriumRow",
    "fubini_study_metric",
    "perturbed_metric",
    "ambient_kernel",
    "expansion_fit",
    "peak_extension",
    "kernel_cauchy_schwarz",
    "twist_constant",
    "comparison_ratio",
    "morse_report",
    "equilibrium_report",
    "slope_cdf",
    "kolmogorov_distance",
    "density_cdf",
    "phase_excess",
    "eventually_decreasing",
    "ComparisonResult",
]


class KahlerViolationError(ValueError):
    """The metric on the ample twist is not strictly positively curved."""


class IllConditionedFitError(ValueError):
    """Too few or too small powers for a stable asymptotic fit."""


class TheoremViolationError(AssertionError):
    """A bound that must hold failed; almost always a quadrature problem."""


# ---------------------------------------------------------------------------
# metrics on O(1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialMetric:
    """Potential of a radial metric on ``O(1)`` with its exact second derivative."""

    value: Callable[[np.ndarray], np.ndarray]
    curvature: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def potential(self, grid: Grid) -> ConvexPotential:
        return ConvexPotential(grid, self.value(grid.nodes), 0.0, 1.0)

    def density(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self.curvature(grid.nodes), 0.0, 0.0)


def _fs_value(s):
    return np.logaddexp(0.0, s)


def _fs_curvature(s):
    return np.exp(-np.logaddexp(0.0, s) - np.logaddexp(0.0, -s))


def fubini_study_metric() -> RadialMetric:
    return RadialMetric(_fs_value, _fs_curvature, "fs")


def perturbed_metric(amplitude: float = 0.05) -> RadialMetric:
    """``log(1 + e^s) + amplitude * sech(s)``."""

    def value(s):
        return np.logaddexp(0.0, s) + amplitude / np.cosh(s)

    def curvature(s):
        sech = 1.0 / np.cosh(s)
        th = np.tanh(s)
        return _fs_curvature(s) + amplitude * sech * (th * th - sech * sech)

    return RadialMetric(value, curvature, f"fs+{amplitude:g}*sech")


def _as_metric(phi: RadialMetric | ConvexPotential) -> RadialMetric:
    if isinstance(phi, RadialMetric):
        return phi
    grid = phi.grid
    h = grid.h
    v = phi.values
    second = np.empty_like(v)
    second[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    # log-linear at the ends, so the tails keep their decay rate
    with np.errstate(divide="ignore", invalid="ignore"):
        second[0] = second[1] * second[1] / second[2]
        second[-1] = second[-2] * second[-2] / second[-3]
    nodes = grid.nodes

    def curvature(s):
        return np.interp(s, nodes, second)

    return RadialMetric(lambda s: phi(s), curvature, "sampled")


# ---------------------------------------------------------------------------
# ambient kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmbientKernel:
    p: int
    metric: RadialMetric
    grid: Grid
    log_norms: np.ndarray
    diagonal: GridFunction

    def _log_terms(self, s_y: np.ndarray, s_x: float) -> np.ndarray:
        j = np.arange(self.p + 1, dtype=np.float64)[:, None]
        s_y = np.atleast_1d(np.asarray(s_y, dtype=np.float64))
        half = -0.5 * self.p * (self.metric.value(s_y) + self.metric.value(np.array([s_x])))
        return 0.5 * j * (s_y[None, :] + s_x) - self.log_norms[:, None] + half[None, :]

    def log_off_diagonal(self, s_y: np.ndarray, s_x: float) -> np.ndarray:
        """log of the pointwise norm of the kernel between two points of the positive real axis."""
        t = self._log_terms(s_y, s_x)
        top = t.max(axis=0)
        return top + np.log(np.exp(t - top).sum(axis=0))

    def off_diagonal_with_phase(self, s_y: float, s_x: float, phase: float) -> float:
        """Norm of the kernel when ``y`` is rotated by ``phase`` around the origin."""
        t = self._log_terms(np.array([s_y]), s_x)[:, 0]
        top = t.max()
        j = np.arange(self.p + 1)
        return float(abs(np.sum(np.exp(t - top) * np.exp(0.5j * 2 * j * phase))) * math.exp(top))

    def log_diagonal_at(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        j = np.arange(self.p + 1, dtype=np.float64)[:, None]
        t = j * s[None, :] - self.log_norms[:, None] - self.p * self.metric.value(s)[None, :]
        top = t.max(axis=0)
        return top + np.log(np.exp(t - top).sum(axis=0))

    def trace(self) -> float:
        """``int K_p * omega``; equals ``p + 1`` for any admissible metric."""
        dens = self.metric.density(self.grid)
        w = self.diagonal.values * dens.values
        h = self.grid.h
        return float(h * (w.sum() - 0.5 * (w[0] + w[-1])) + w[0] + w[-1])


def ambient_kernel(p: int, phi_A: RadialMetric | ConvexPotential,
                   grid: Grid = DEFAULT_GRID) -> AmbientKernel:
    """L^2 Bergman kernel of ``O(p)`` for the metric ``phi_A`` and volume form ``dd^c phi_A``."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p}")
    metric = _as_metric(phi_A)
    if isinstance(phi_A, ConvexPotential):
        grid = phi_A.grid
    curv = metric.curvature(grid.nodes)
    if not np.all(curv > 0.0):
        i = int(np.argmin(curv))
        raise KahlerViolationError(
            f"curvature {curv[i]:.3e} <= 0 at s={grid.nodes[i]:.6g}; the metric is not Kahler"
        )
    W = GridFunction(grid, p * metric.value(grid.nodes), 0.0, float(p))
    density = GridFunction(grid, curv, 0.0, 0.0)
    logs = np.array([log_weighted_integral(float(j), W, density) for j in range(p + 1)])
    logs.setflags(write=False)
    kernel = AmbientKernel(p, metric, grid, logs, GridFunction(grid, np.zeros(grid.n_nodes), 0, 0))
    diag = np.exp(kernel.log_diagonal_at(grid.nodes))
    object.__setattr__(kernel, "diagonal", GridFunction(grid, diag, 0.0, 0.0))
    return kernel


@dataclass(frozen=True)
class ExpansionFit:
    b0: GridFunction
    b1: GridFunction
    residual: float
    b0_error: float
    b1_spread: float


def expansion_fit(phi_A: RadialMetric | ConvexPotential, p_list: Sequence[int],
                  grid: Grid = DEFAULT_GRID) -> ExpansionFit:
    """Per-node least-squares fit ``K_p ~ p * b0 + b1``."""
    ps = np.asarray(sorted(set(int(p) for p in p_list)), dtype=np.float64)
    if ps.size < 3 or ps[-1] < 64:
        raise IllConditionedFitError(
            "expansion fit needs at least three powers with the largest >= 64"
        )
    kernels = [ambient_kernel(int(p), phi_A, grid) for p in ps]
    grid = kernels[0].grid
    K = np.stack([k.diagonal.values for k in kernels])  # (len(p), n)
    A = np.stack([ps, np.ones_like(ps)], axis=1)
    coef, *_ = np.linalg.lstsq(A, K, rcond=None)
    fitted = A @ coef
    resid = float(np.abs(fitted - K).max())
    b0 = GridFunction(grid, coef[0], 0.0, 0.0)
    b1 = GridFunction(grid, coef[1], 0.0, 0.0)
    return ExpansionFit(b0, b1, resid, float(np.abs(coef[0] - 1.0).max()), b1.osc())


# ---------------------------------------------------------------------------
# peak sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeakExtension:
    sup_ratio: float
    argmax: float
    s_x: float


def peak_extension(kernel: AmbientKernel, s_x: float, window: float = 6.0) -> PeakExtension:
    """Sup norm of the normalised kernel column ``K_p(., x) / K_p(x)``.

    The kernel coefficients are positive, so the supremum over ``P^1`` sits on
    the positive real axis through ``x``.  Grid nodes give a bracket that is
    then refined with a bounded scalar search on the exact metric.
    """
    grid = kernel.grid
    nodes = grid.nodes
    sel = nodes[(nodes >= s_x - window) & (nodes <= s_x + window)]
    ys = np.unique(np.concatenate((sel, [s_x])))
    log_diag_x = float(kernel.log_diagonal_at(np.array([s_x]))[0])
    vals = kernel.log_off_diagonal(ys, s_x) - log_diag_x
    i = int(np.argmax(vals))
    best_y, best = float(ys[i]), float(vals[i])
    lo, hi = float(ys[max(i - 1, 0)]), float(ys[min(i + 1, ys.size - 1)])
    if hi > lo:
        res = minimize_scalar(
            lambda y: -float(kernel.log_off_diagonal(np.array([y]), s_x)[0] - log_diag_x),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
        )
        if -res.fun > best:
            best, best_y = float(-res.fun), float(res.x)
    return PeakExtension(math.exp(best), best_y, float(s_x))


def kernel_cauchy_schwarz(kernel: AmbientKernel, n_pairs: int = 10_000, seed: int = 0,
                          s_range: tuple[float, float] = (-10.0, 10.0)) -> float:
    """Largest relative excess of ``|K(y,x)|`` over ``sqrt(K(x) K(y))`` on random pairs."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(*s_range, n_pairs)
    ys = rng.uniform(*s_range, n_pairs)
    j = np.arange(kernel.p + 1, dtype=np.float64)[:, None]
    val = kernel.metric.value
    t = (0.5 * j * (xs + ys)[None, :] - kernel.log_norms[:, None]
         - 0.5 * kernel.p * (val(xs) + val(ys))[None, :])
    top = t.max(axis=0)
    log_off = top + np.log(np.exp(t - top).sum(axis=0))
    log_bound = 0.5 * (kernel.log_diagonal_at(xs) + kernel.log_diagonal_at(ys))
    return float(np.max(np.expm1(log_off - log_bound)))


def phase_excess(kernel: AmbientKernel, s_x: float, s_y: float, n_phases: int = 200,
                 seed: int = 0) -> float:
    """Largest relative excess of rotated kernel values over the real-axis value."""
    rng = np.random.default_rng(seed)
    real = float(np.exp(kernel.log_off_diagonal(np.array([s_y]), s_x)[0]))
    worst = -math.inf
    for phase in rng.uniform(0.0, 2.0 * math.pi, n_phases):
        worst = max(worst, kernel.off_diagonal_with_phase(s_y, s_x, phase) / real - 1.0)
    return worst


@lru_cache(maxsize=64)
def _fs_twist_constant(m: int, n_scan: int) -> float:
    kernel = ambient_kernel(m, fubini_study_metric())
    excess = max(peak_extension(kernel, float(x)).sup_ratio - 1.0
                 for x in np.linspace(-5.0, 5.0, n_scan))
    return max(excess, 0.0) * m


def twist_constant(m: int, metric: RadialMetric | None = None, n_scan: int = 21) -> float:
    """Fitted constant ``C`` in ``sup_ratio <= 1 + C/m`` for the twisting metric."""
    if metric is None:
        return _fs_twist_constant(int(m), n_scan)
    kernel = ambient_kernel(m, metric)
    excess = max(peak_extension(kernel, float(x)).sup_ratio - 1.0
                 for x in np.linspace(-5.0, 5.0, n_scan))
    return max(excess, 0.0) * m


# ---------------------------------------------------------------------------
# comparison of twisted and untwisted Bergman densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonResult:
    max_ratio: float
    bound: float
    c_hat: float


def comparison_ratio(model: PolarizedModel, u: Weight | GridFunction, k: int, m: int,
                     c_hat: float | None = None, check: bool = True) -> ComparisonResult:
    """Max over nodes of untwisted over twisted unnormalised Bergman densities."""
    if m < 1:
        raise ValueError("the comparison needs a positive twist m")
    if model.d * k < 2:
        raise ValueError("d*k must be at least 2")
    c = twist_constant(m) if c_hat is None else float(c_hat)
    plain = bergman_density(SectionSpace(model, k, 0), u, normalized=False)
    twisted = bergman_density(SectionSpace(model, k, m), u, normalized=False)
    ratio = float(np.max(plain.density.values / twisted.density.values))
    bound = (1.0 + c / m) ** 2
    if check and ratio > bound + 1e-8:
        raise TheoremViolationError(
            f"density ratio {ratio!r} exceeds comparison bound {bound!r} (k={k}, m={m})"
        )
    return ComparisonResult(ratio, bound, c)


# ---------------------------------------------------------------------------
# CDFs and equilibrium
# ---------------------------------------------------------------------------

def slope_cdf(phi: GridFunction) -> np.ndarray:
    """Cumulative slope mass at the nodes, ``phi'(s_i) - left_slope``.

    Uses a sixth-order centred derivative in the interior so that the CDF of
    smooth potentials is accurate far below the cell size squared.
    """
    v = phi.values
    h = phi.grid.h
    d = np.empty_like(v)
    d[3:-3] = (-v[:-6] + 9.0 * v[1:-5] - 45.0 * v[2:-4]
               + 45.0 * v[4:-2] - 9.0 * v[5:-1] + v[6:]) / (60.0 * h)
    d[1:3] = (v[2:4] - v[0:2]) / (2.0 * h)
    d[-3:-1] = (v[-2:] - v[-4:-2]) / (2.0 * h)
    d[0] = (v[1] - v[0]) / h
    d[-1] = (v[-1] - v[-2]) / h
    return d - phi.left_slope


def density_cdf(density: GridFunction, left_rate: float = 1.0) -> np.ndarray:
    """CDF of an exponentially decaying density: left tail plus cumulative Simpson."""
    p = density.values
    tail = p[0] / left_rate
    return tail + cumulative_simpson(p, dx=density.grid.h, initial=0.0)


def kolmogorov_distance(cdf_a: np.ndarray, cdf_b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(cdf_a) - np.asarray(cdf_b))))


@dataclass(frozen=True)
class EquilibriumRow:
    k: int
    kolmogorov: float
    energy_error: float
    quantized_energy: float
    ma_energy: float


def equilibrium_report(model: PolarizedModel, phi: GridFunction,
                       k_list: Sequence[int]) -> list[EquilibriumRow]:
    """Distance from Bergman measures to the equilibrium measure, and energy errors."""
    pw, _ = envelope(model, phi)
    target = slope_cdf(model.phi0 + pw.u) / model.d
    e_theta = ma_energy(model, pw, v_theta(model))
    rows = []
    for k in k_list:
        space = SectionSpace(model, int(k), 0)
        beta = bergman_density(space, phi, normalized=True)
        dist = kolmogorov_distance(density_cdf(beta.density), target)
        e_k = quantized_energy(space, phi)
        rows.append(EquilibriumRow(int(k), dist, abs(e_k - e_theta), e_k, e_theta))
    return rows


def eventually_decreasing(values: Sequence[float]) -> bool:
    """True when the last value is below the first and the tail is monotone."""
    v = list(values)
    if len(v) < 2:
        return True
    tail = v[len(v) // 2:]
    return v[-1] < v[0] and all(b <= a for a, b in zip(tail, tail[1:]))


# ---------------------------------------------------------------------------
# Morse-type bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MorseReport:
    k_list: tuple[int, ...]
    bounded_constants: tuple[float, ...]
    growth_slope: float
    negative_region: np.ndarray
    region_max_density: tuple[float, ...]
    decay_rate: float | None
    decay_r2: float | None
    domination_residual: float
    domination_by_k: tuple[float, ...] = field(default_factory=tuple)
    twisted_rho: tuple[float, ...] = field(default_factory=tuple)
    limsup_proxy: np.ndarray | None = None

    @property
    def region_empty(self) -> bool:
        return not bool(self.negative_region.any())


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


def morse_report(model: PolarizedModel, phi: GridFunction, k_list: Sequence[int],
                 m: int = 0, delta: float = 1e-3) -> MorseReport:
    """Local Morse bounds for a smooth bounded weight (psh not required).

    (a) ``sup (1/k) p_k / omega`` per k with its trend against ``log2 k``;
    (b) exponential decay of the Bergman density where the curvature of
        ``phi0 + phi`` is below ``-delta``;
    (c) global domination ``beta_k <= exp(k (P phi - phi)) sup beta_k``;
    (d) for ``m >= 1`` the fitted excess of the twisted density over the
        twisted curvature.
    """
    ks = [int(k) for k in k_list]
    grid = model.grid
    s = grid.nodes
    omega = _fs_curvature(s)
    total = (model.phi0 + phi).values
    h = grid.h
    curv = np.empty_like(total)
    curv[1:-1] = (total[2:] - 2.0 * total[1:-1] + total[:-2]) / (h * h)
    curv[0], curv[-1] = curv[1], curv[-2]
    region = curv <= -delta
    pw, _ = envelope(model, phi)
    gap = pw.values - phi.values  # <= 0

    consts, region_max, dom = [], [], []
    proxy = None
    for k in ks:
        space = SectionSpace(model, k, 0)
        raw = bergman_density(space, phi, normalized=False).density.values
        consts.append(float(np.max(raw / (k * omega))))
        beta = raw / space.dimension
        if region.any():
            region_max.append(float(beta[region].max()))
        dom.append(max(float(np.max(beta - np.exp(k * gap) * beta.max())), 0.0))
        proxy = raw / k
    slope, _, _ = _linear_fit(np.log2(np.asarray(ks, dtype=np.float64)), np.asarray(consts))

    rate = r2 = None
    if region_max:
        y = np.log(np.asarray(region_max))
        fit_slope, _, r2 = _linear_fit(np.asarray(ks, dtype=np.float64), y)
        rate = -fit_slope

    rhos = []
    if m >= 1:
        for k in ks:
            eps = m / k
            target = curv + eps * omega
            ok = target > delta
            dens = bergman_density(SectionSpace(model, k, m), phi, normalized=False).density.values
            excess = float(np.max(dens[ok] / (k * target[ok])))
            damp = -math.expm1(-eps * math.log(k) ** 2)
            rhos.append(math.log(excess * damp))

    region.setflags(write=False)
    return MorseReport(tuple(ks), tuple(consts), slope, region, tuple(region_max),
                       rate, r2, max(dom), tuple(dom), tuple(rhos), proxy)
