"""Radial substrate: grids, grid functions, discrete Legendre transforms,
slope-constrained convex envelopes, slope measures and log-domain quadrature.

Everything is expressed in the log-radial coordinate ``s = log|z|^2``.  A
:class:`GridFunction` stores node values together with two asymptotic slopes
and is extended affinely beyond the grid with those slopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "ConvexPotential",
    "DualGridFunction",
    "SlopeMeasure",
    "ConvexityError",
    "IntegrabilityError",
    "DivergentDualError",
    "GridMismatchError",
    "DEFAULT_GRID",
    "make_grid_function",
    "as_convex",
    "fubini_study",
    "fubini_study_curvature",
    "legendre_dual",
    "legendre_primal",
    "legendre_primal_with_argmax",
    "breakpoint_dual_nodes",
    "constrained_convex_envelope",
    "slope_measure",
    "mass_tolerance",
    "conv_tolerance",
    "pair_measure",
    "log_weighted_integral",
    "log_trapezoid",
    "stable_sum",
]


class ConvexityError(ValueError):
    """A potential that must be convex is not (beyond tolerance)."""


class IntegrabilityError(ValueError):
    """A weighted integral diverges through one of its affine tails."""


class DivergentDualError(ValueError):
    """The Legendre transform is infinite at an interior dual node."""


class GridMismatchError(ValueError):
    """Two objects that must share a grid do not."""


def stable_sum(values: np.ndarray | Sequence[float]) -> float:
    """Order-fixed compensated sum (independent of any parallel schedule)."""
    return math.fsum(np.asarray(values, dtype=np.float64).ravel().tolist())


@dataclass(frozen=True)
class Grid:
    s_min: float = -30.0
    s_max: float = 30.0
    n_nodes: int = 4001

    def __post_init__(self) -> None:
        if not (math.isfinite(self.s_min) and math.isfinite(self.s_max)):
            raise ValueError("grid bounds must be finite")
        if not self.s_min < self.s_max:
            raise ValueError(f"need s_min < s_max, got {self.s_min} >= {self.s_max}")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise ValueError(f"need an integer n_nodes >= 3, got {self.n_nodes}")

    @property
    def h(self) -> float:
        return (self.s_max - self.s_min) / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.s_min + np.arange(self.n_nodes, dtype=np.float64) * self.h

    def refine(self, factor: int) -> "Grid":
        """Same interval with ``factor`` times as many cells."""
        return Grid(self.s_min, self.s_max, (self.n_nodes - 1) * factor + 1)


DEFAULT_GRID = Grid()


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node samples on a :class:`Grid` with affine extension beyond it.

    ``slope_warning`` is set when the end differences disagree with the
    declared slopes by more than ``slope_tol``; consumers decide whether to
    refuse such inputs.
    """

    grid: Grid
    values: np.ndarray
    left_slope: float
    right_slope: float
    slope_tol: float | None = None
    slope_warning: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} values, got shape {vals.shape}"
            )
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise ValueError(f"non-finite value at node {int(bad[0])}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "left_slope", float(self.left_slope))
        object.__setattr__(self, "right_slope", float(self.right_slope))
        tol = self.slope_tol
        if tol is None:
            tol = 1e-6 * (1.0 + abs(self.right_slope - self.left_slope))
        object.__setattr__(self, "slope_tol", float(tol))
        h = self.grid.h
        fwd = (vals[1] - vals[0]) / h
        bwd = (vals[-1] - vals[-2]) / h
        warn = abs(fwd - self.left_slope) > tol or abs(bwd - self.right_slope) > tol
        object.__setattr__(self, "slope_warning", bool(warn))

    # -- basic accessors -------------------------------------------------
    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def slopes(self) -> tuple[float, float]:
        return self.left_slope, self.right_slope

    def osc(self) -> float:
        return float(self.values.max() - self.values.min())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def is_bounded(self) -> bool:
        return self.left_slope == 0.0 and self.right_slope == 0.0

    def __call__(self, s: float | np.ndarray) -> np.ndarray | float:
        """Piecewise-linear interpolation with affine tails."""
        s_arr = np.asarray(s, dtype=np.float64)
        g = self.grid
        out = np.interp(s_arr, g.nodes, self.values)
        out = np.where(
            s_arr < g.s_min, self.values[0] + self.left_slope * (s_arr - g.s_min), out
        )
        out = np.where(
            s_arr > g.s_max, self.values[-1] + self.right_slope * (s_arr - g.s_max), out
        )
        return float(out) if np.ndim(out) == 0 else out

    def midpoints(self) -> np.ndarray:
        v = self.values
        return 0.5 * (v[:-1] + v[1:])

    def with_values(self, values: np.ndarray, left: float | None = None,
                    right: float | None = None) -> "GridFunction":
        return GridFunction(
            self.grid,
            values,
            self.left_slope if left is None else left,
            self.right_slope if right is None else right,
        )

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other: "GridFunction") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "GridFunction | float") -> "GridFunction":
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(
                self.grid,
                self.values + other.values,
                self.left_slope + other.left_slope,
                self.right_slope + other.right_slope,
            )
        return GridFunction(self.grid, self.values + float(other),
                            self.left_slope, self.right_slope)

    __radd__ = __add__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values, -self.left_slope, -self.right_slope)

    def __sub__(self, other: "GridFunction | float") -> "GridFunction":
        return self + (-other)

    def __rsub__(self, other: float) -> "GridFunction":
        return (-self) + other

    def __mul__(self, c: float) -> "GridFunction":
        c = float(c)
        return GridFunction(self.grid, c * self.values, c * self.left_slope,
                            c * self.right_slope)

    __rmul__ = __mul__

    def minimum(self, other: "GridFunction") -> "GridFunction":
        """Pointwise minimum (used for rooftop envelopes)."""
        self._check(other)
        return GridFunction(
            self.grid,
            np.minimum(self.values, other.values),
            max(self.left_slope, other.left_slope),
            min(self.right_slope, other.right_slope),
        )


def conv_tolerance(values: np.ndarray) -> float:
    return 1e-10 * (float(np.abs(values).max()) + 1.0)


@dataclass(frozen=True, eq=False)
class ConvexPotential(GridFunction):
    """A :class:`GridFunction` that passed the discrete convexity check."""

    conv_tol: float | None = None

    def __post_init__(self) -> None:
        super().__post_init__()
        tol = conv_tolerance(self.values) if self.conv_tol is None else float(self.conv_tol)
        object.__setattr__(self, "conv_tol", tol)
        v = self.values
        second = v[2:] - 2.0 * v[1:-1] + v[:-2]
        if second.size and second.min() < -tol:
            i = int(np.argmin(second)) + 1
            raise ConvexityError(
                f"second difference {second.min():.3e} < -{tol:.3e} at node {i}"
            )
        h = self.grid.h
        fwd = (v[1] - v[0]) / h
        bwd = (v[-1] - v[-2]) / h
        slack = tol / h
        if self.left_slope > fwd + slack or bwd > self.right_slope + slack:
            raise ConvexityError(
                f"declared slopes ({self.left_slope}, {self.right_slope}) do not "
                f"bracket end differences ({fwd}, {bwd})"
            )


def as_convex(f: GridFunction, conv_tol: float | None = None) -> ConvexPotential:
    """Promote ``f`` to a :class:`ConvexPotential` or raise ConvexityError."""
    if isinstance(f, ConvexPotential) and conv_tol is None:
        return f
    return ConvexPotential(f.grid, f.values, f.left_slope, f.right_slope,
                           f.slope_tol, conv_tol=conv_tol)


def make_grid_function(
    samples: Callable[[np.ndarray], np.ndarray] | Sequence[tuple[float, float]] | np.ndarray,
    grid: Grid,
    left_slope: float,
    right_slope: float,
    slope_tol: float | None = None,
) -> GridFunction:
    """Sample a function on ``grid``.

    ``samples`` is either a vectorised callable or a sequence of ``(s, value)``
    pairs that is linearly interpolated onto the nodes.
    """
    s = grid.nodes
    if callable(samples):
        with np.errstate(all="ignore"):
            values = np.asarray(samples(s), dtype=np.float64)
        if values.ndim == 0:
            values = np.full_like(s, float(values))
    else:
        pts = np.asarray(samples, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("samples must be (s, value) pairs")
        order = np.argsort(pts[:, 0], kind="stable")
        values = np.interp(s, pts[order, 0], pts[order, 1])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ValueError(f"non-finite sample at node {int(bad[0])} (s={s[bad[0]]:.6g})")
    return GridFunction(grid, values, left_slope, right_slope, slope_tol)


def fubini_study(grid: Grid = DEFAULT_GRID, scale: float = 1.0) -> ConvexPotential:
    """``scale * log(1 + e^s)``, slopes ``(0, scale)``."""
    values = scale * np.logaddexp(0.0, grid.nodes)
    return ConvexPotential(grid, values, 0.0, scale)


def fubini_study_curvature(grid: Grid = DEFAULT_GRID, scale: float = 1.0) -> GridFunction:
    """Exact second derivative of :func:`fubini_study` (logistic density)."""
    s = grid.nodes
    values = scale * np.exp(-np.logaddexp(0.0, s) - np.logaddexp(0.0, -s))
    return GridFunction(grid, values, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Legendre transforms
# ---------------------------------------------------------------------------

def _lower_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of points sorted by strictly increasing x.

    Collinear interior points are dropped, so each hull edge has a distinct
    slope and its left vertex is the leftmost point attaining any tie.
    """
    hull: list[int] = []
    xs = x.tolist()
    ys = y.tolist()
    for i in range(len(xs)):
        xi, yi = xs[i], ys[i]
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b if it is on or above the segment a -> i
            cross = (xs[b] - xs[a]) * (yi - ys[a]) - (ys[b] - ys[a]) * (xi - xs[a])
            if cross <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=np.int64)


def _conjugate(x: np.ndarray, y: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """max_i (q * x_i - y_i) for every query q, with the leftmost argmax.

    Linear time in ``len(x) + len(q)`` apart from a binary search over the
    (short) list of hull slopes.
    """
    hull = _lower_hull(x, y)
    hx, hy = x[hull], y[hull]
    edge_slopes = np.diff(hy) / np.diff(hx)
    # number of hull edges with slope strictly below q -> vertex index
    pos = np.searchsorted(edge_slopes, q, side="left")
    idx = hull[pos]
    return q * x[idx] - y[idx], idx


@dataclass(frozen=True, eq=False)
class DualGridFunction:
    """Values of a Legendre dual on increasing nodes inside ``[xi_min, xi_max]``.

    ``values`` may hold ``+inf`` only at the two end nodes.
    """

    xi: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        xi = _frozen(self.xi)
        vals = _frozen(self.values)
        if xi.ndim != 1 or xi.shape != vals.shape or xi.size < 2:
            raise ValueError("dual nodes and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(xi) <= 0):
            raise ValueError("dual nodes must be strictly increasing")
        if np.any(np.isnan(vals)) or np.any(np.isinf(vals[1:-1])):
            raise DivergentDualError("dual values must be finite at interior nodes")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "values", vals)

    @property
    def xi_min(self) -> float:
        return float(self.xi[0])

    @property
    def xi_max(self) -> float:
        return float(self.xi[-1])

    @property
    def m_nodes(self) -> int:
        return int(self.xi.size)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def combine(self, other: "DualGridFunction", t: float) -> "DualGridFunction":
        """``(1 - t) * self + t * other`` on a shared dual grid."""
        if self.xi.shape != other.xi.shape or np.any(self.xi != other.xi):
            raise GridMismatchError("dual grids differ")
        return DualGridFunction(self.xi, (1.0 - t) * self.values + t * other.values)

    def shift(self, c: float) -> "DualGridFunction":
        return DualGridFunction(self.xi, self.values + c)

    def integral(self) -> float:
        """Trapezoid integral over the dual interval (finite values only)."""
        if not self.is_finite():
            raise DivergentDualError("cannot integrate a dual with infinite end values")
        dx = np.diff(self.xi)
        return stable_sum(0.5 * dx * (self.values[1:] + self.values[:-1]))


def _dual_nodes(xi_min: float, xi_max: float, nodes: int | np.ndarray) -> np.ndarray:
    if isinstance(nodes, (int, np.integer)):
        if nodes < 2:
            raise ValueError("need at least two dual nodes")
        if not xi_min < xi_max:
            raise ValueError("need xi_min < xi_max")
        return np.linspace(xi_min, xi_max, int(nodes))
    return np.asarray(nodes, dtype=np.float64)


def legendre_dual(
    f: GridFunction,
    xi_min: float,
    xi_max: float,
    nodes: int | np.ndarray = 4001,
) -> DualGridFunction:
    """``g(xi) = sup_s (xi*s - f(s))`` over the grid and its affine tails.

    ``nodes`` is a node count (uniform dual grid) or an explicit increasing
    array.  The supremum over a tail of slope ``a`` is finite exactly when
    ``xi`` does not exceed ``a`` on the right (or fall below it on the left);
    in that case it is attained at the grid end, so only nodes need scanning.
    """
    xi = _dual_nodes(xi_min, xi_max, nodes)
    vals, _ = _conjugate(f.grid.nodes, f.values, xi)
    diverges = (xi > f.right_slope) | (xi < f.left_slope)
    if diverges[1:-1].any():
        bad = int(np.flatnonzero(diverges[1:-1])[0]) + 1
        raise DivergentDualError(
            f"Legendre transform is +inf at interior dual node {bad} (xi={xi[bad]:.6g}); "
            f"slopes of f are ({f.left_slope}, {f.right_slope})"
        )
    vals = np.where(diverges, np.inf, vals)
    return DualGridFunction(xi, vals)


def legendre_primal_with_argmax(
    g: DualGridFunction, grid: Grid
) -> tuple[ConvexPotential, np.ndarray]:
    """As :func:`legendre_primal`, also returning the maximising dual index per node."""
    if not g.is_finite():
        raise DivergentDualError("legendre_primal needs a finite dual")
    s = grid.nodes
    vals, idx = _conjugate(g.xi, g.values, s)
    return ConvexPotential(grid, vals, g.xi_min, g.xi_max), idx


def legendre_primal(g: DualGridFunction, grid: Grid) -> ConvexPotential:
    """``f(s) = max_j (s*xi_j - g_j)``, slopes ``(xi_min, xi_max)``."""
    return legendre_primal_with_argmax(g, grid)[0]


def breakpoint_dual_nodes(f: GridFunction, xi_min: float, xi_max: float) -> np.ndarray:
    """Dual nodes at which the discrete transform of ``f`` can have kinks.

    These are the hull-edge slopes inside ``(xi_min, xi_max)`` plus the two
    endpoints; a primal built from the dual on these nodes is exact.
    """
    s = f.grid.nodes
    hull = _lower_hull(s, f.values)
    slopes = np.diff(f.values[hull]) / np.diff(s[hull])
    inner = slopes[(slopes > xi_min) & (slopes < xi_max)]
    return np.unique(np.concatenate(([xi_min], inner, [xi_max])))


def constrained_convex_envelope(
    f: GridFunction, lo: float, hi: float
) -> ConvexPotential:
    """Largest convex function below ``f`` (nodes and affine tails) with slopes in ``[lo, hi]``.

    Built on the primal side: the lower hull of the node samples, with the
    parts whose slopes leave ``[lo, hi]`` replaced by the supporting rays of
    slope ``lo`` and ``hi``.  Tail slopes of ``f`` narrow the admissible
    slope range, because a steeper line would cross ``f`` beyond the grid.
    """
    lo_eff = max(lo, f.left_slope)
    hi_eff = min(hi, f.right_slope)
    if lo_eff > hi_eff:
        raise ValueError(
            f"no affine minorant: slope range [{lo}, {hi}] misses tails "
            f"({f.left_slope}, {f.right_slope})"
        )
    s = f.grid.nodes
    v = f.values
    hull = _lower_hull(s, v)
    hx, hy = s[hull], v[hull]
    edge = np.diff(hy) / np.diff(hx)
    # leftmost vertex whose outgoing slope reaches lo_eff
    left = int(np.searchsorted(edge, lo_eff, side="left"))
    # rightmost vertex whose incoming slope stays within hi_eff
    right = int(np.searchsorted(edge, hi_eff, side="right"))
    right = max(right, left)
    out = np.interp(s, hx[left:right + 1], hy[left:right + 1])
    mask_l = s < hx[left]
    out[mask_l] = hy[left] + lo_eff * (s[mask_l] - hx[left])
    mask_r = s > hx[right]
    out[mask_r] = hy[right] + hi_eff * (s[mask_r] - hx[right])
    out = np.minimum(out, v)
    return ConvexPotential(f.grid, out, lo_eff, hi_eff)


# ---------------------------------------------------------------------------
# slope measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SlopeMeasure:
    grid: Grid
    cell_masses: np.ndarray
    left_defect: float
    right_defect: float

    def __post_init__(self) -> None:
        masses = _frozen(self.cell_masses)
        if masses.shape != (self.grid.n_nodes - 1,):
            raise ValueError("one mass per cell expected")
        object.__setattr__(self, "cell_masses", masses)

    @property
    def total(self) -> float:
        return stable_sum(np.concatenate((self.cell_masses,
                                          [self.left_defect, self.right_defect])))

    def cdf(self) -> np.ndarray:
        """Cumulative mass at every node (left defect included at the first node)."""
        c = np.concatenate(([self.left_defect], self.cell_masses))
        return np.cumsum(c)

    def __add__(self, other: "SlopeMeasure") -> "SlopeMeasure":
        if other.grid != self.grid:
            raise GridMismatchError("measures live on different grids")
        return SlopeMeasure(self.grid, self.cell_masses + other.cell_masses,
                            self.left_defect + other.left_defect,
                            self.right_defect + other.right_defect)

    def __mul__(self, c: float) -> "SlopeMeasure":
        return SlopeMeasure(self.grid, c * self.cell_masses, c * self.left_defect,
                            c * self.right_defect)

    __rmul__ = __mul__


def _node_slopes(v: np.ndarray, h: float) -> np.ndarray:
    c = np.empty_like(v)
    c[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    c[0] = (v[1] - v[0]) / h
    c[-1] = (v[-1] - v[-2]) / h
    return c


def mass_tolerance(phi: GridFunction) -> float:
    """Rounding floor for slope masses: ``1e-12`` or the slope round-off, whichever is larger."""
    eps = np.finfo(np.float64).eps
    return max(1e-12, 16.0 * eps * (float(np.abs(phi.values).max()) + 1.0) / phi.grid.h)


def slope_measure(phi: GridFunction, mass_tol: float | None = None,
                  check: bool = True) -> SlopeMeasure:
    """Stieltjes measure of the slope of a convex potential.

    Masses are differences of centred node slopes, so they telescope to
    ``right_slope - left_slope``.  With ``check=False`` arbitrarily signed
    masses are allowed; this gives the linear map used for differences of
    potentials.
    """
    if mass_tol is None:
        mass_tol = mass_tolerance(phi)
    c = _node_slopes(phi.values, phi.grid.h)
    masses = np.diff(c)
    left = float(c[0] - phi.left_slope)
    right = float(phi.right_slope - c[-1])
    if check:
        worst = min(float(masses.min()), left, right)
        if worst < -mass_tol:
            raise ConvexityError(f"negative slope mass {worst:.3e} (convexity violated)")
    # round-off negatives within mass_tol are kept: clamping them would add
    # mass and break the telescoping total
    return SlopeMeasure(phi.grid, masses, left, right)


def pair_measure(f: GridFunction, mu: SlopeMeasure) -> float:
    """``int f dmu`` with cell midpoints and end values for the defects."""
    if f.grid != mu.grid:
        raise GridMismatchError(f"grid mismatch: {f.grid} vs {mu.grid}")
    terms = np.concatenate((
        f.midpoints() * mu.cell_masses,
        [f.values[0] * mu.left_defect, f.values[-1] * mu.right_defect],
    ))
    return stable_sum(terms)


# ---------------------------------------------------------------------------
# log-domain quadrature
# ---------------------------------------------------------------------------

def log_trapezoid(exponents: np.ndarray, h: float, left_rate: float | None,
                  right_rate: float | None) -> float:
    """log of the trapezoid sum of ``exp(exponents)`` plus exponential tails.

    ``left_rate`` (> 0) and ``right_rate`` (< 0) are the exponential rates of
    the integrand beyond the first and last node; ``None`` means no tail.
    """
    e = np.asarray(exponents, dtype=np.float64)
    top = float(e.max())
    if top == -math.inf:
        return -math.inf
    w = np.exp(e - top)
    terms = h * w
    terms[0] *= 0.5
    terms[-1] *= 0.5
    extra = []
    if left_rate is not None:
        extra.append(w[0] / left_rate)
    if right_rate is not None:
        extra.append(w[-1] / (-right_rate))
    total = stable_sum(np.concatenate((terms, extra)))
    return top + math.log(total)


def _log_density(density: GridFunction) -> tuple[np.ndarray, float, float]:
    rho = density.values
    if rho.min() < 0.0:
        raise ValueError("density must be non-negative")
    with np.errstate(divide="ignore"):
        log_rho = np.log(rho)
    h = density.grid.h

    def rate(a: float, b: float) -> float:
        if a == -math.inf or b == -math.inf:
            return -math.inf
        return (a - b) / h

    # log-linear extrapolation of the density beyond each end
    left = rate(log_rho[1], log_rho[0])
    right = rate(log_rho[-1], log_rho[-2])
    return log_rho, left, right


def log_weighted_integral(a: float, W: GridFunction,
                          density: GridFunction | None = None) -> float:
    """``log int exp(a*s - W(s)) * density(s) ds`` over the whole line.

    Tails use the affine extension of ``W``; a density is extrapolated
    log-linearly from its two end nodes.  Raises :class:`IntegrabilityError`
    if a tail does not decay.
    """
    s = W.grid.nodes
    exps = a * s - W.values
    left_rate = a - W.left_slope
    right_rate = a - W.right_slope
    if density is not None:
        if density.grid != W.grid:
            raise GridMismatchError("density lives on a different grid")
        log_rho, dl, dr = _log_density(density)
        exps = exps + log_rho
        left_rate = left_rate + dl if dl != -math.inf else None
        right_rate = right_rate + dr if dr != -math.inf else None
    if left_rate is not None and not left_rate > 0.0:
        raise IntegrabilityError(
            f"left tail diverges: exponent rate {left_rate} at s -> -inf (a={a})"
        )
    if right_rate is not None and not right_rate < 0.0:
        raise IntegrabilityError(
            f"right tail diverges: exponent rate {right_rate} at s -> +inf (a={a})"
        )
    return log_trapezoid(exps, W.grid.h, left_rate, right_rate)
