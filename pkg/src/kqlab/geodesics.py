"""Weak geodesics between bounded radial weights and the energy identities along them.

The geodesic is built on the Legendre side: if ``g0`` and ``g1`` are the duals
of ``phi0 + u0`` and ``phi0 + u1`` over the moment interval ``[0, d]``, then
``phi0 + u_t`` is the primal transform of ``(1 - t) g0 + t g1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .pluripotential import (
    DerivativeMismatchError,
    PolarizedModel,
    UncertifiedWeightError,
    Weight,
    certify,
    ma_energy,
    v_theta,
)
from .radial import (
    DualGridFunction,
    GridFunction,
    _lower_hull,
    breakpoint_dual_nodes,
    legendre_dual,
    legendre_primal,
)
from .sections import SectionSpace, bergman_density, pair_density, quantized_energy

__all__ = [
    "GeodesicPath",
    "GeodesicResolutionError",
    "EnergyProfile",
    "make_geodesic",
    "initial_tangent",
    "energy_profiles",
    "qma_initial_derivative",
    "affine_path_derivative",
    "ma_energy_slope",
    "integrability_probe",
]

CHECK_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)
RICHARDSON_STEPS = (1e-2, 5e-3)


class GeodesicResolutionError(ArithmeticError):
    """The discrete geodesic failed a consistency check; refine the grids."""


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    model: PolarizedModel
    u0: Weight
    u1: Weight
    g0: DualGridFunction
    g1: DualGridFunction
    lipschitz_bound: float
    roundtrip_tol: float

    def potential(self, t: float):
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        return legendre_primal(self.g0.combine(self.g1, t), self.model.grid)

    def evaluate(self, t: float) -> Weight:
        """Weight ``u_t`` (certified: the primal transform is convex)."""
        phi = self.potential(t)
        u = GridFunction(self.model.grid, phi.values - self.model.phi0.values, 0.0, 0.0)
        return certify(self.model, u)


def make_geodesic(model: PolarizedModel, u0: Weight, u1: Weight,
                  m_nodes: int = 4001) -> GeodesicPath:
    for name, w in (("u0", u0), ("u1", u1)):
        if not w.psh_certified:
            raise UncertifiedWeightError(f"endpoint {name} is not certified psh")
    d = float(model.d)
    f0, f1 = model.phi0 + u0.u, model.phi0 + u1.u
    # both duals are piecewise linear with kinks at hull slopes; sampling them
    # there makes the interpolated primal exact on the grid
    xi = np.unique(np.concatenate((
        np.linspace(0.0, d, m_nodes),
        breakpoint_dual_nodes(f0, 0.0, d),
        breakpoint_dual_nodes(f1, 0.0, d),
    )))
    g0 = legendre_dual(f0, 0.0, d, xi)
    g1 = legendre_dual(f1, 0.0, d, xi)
    lip = float(np.abs(u0.values - u1.values).max())
    tol = model.grid.h + d / (m_nodes - 1)
    path = GeodesicPath(model, u0, u1, g0, g1, lip, tol)
    samples = {t: path.evaluate(t).values for t in CHECK_TIMES}
    for t, target in ((0.0, u0.values), (1.0, u1.values)):
        err = float(np.abs(samples[t] - target).max())
        if err > tol:
            raise GeodesicResolutionError(
                f"endpoint t={t} reproduced only to {err:.3e} (tolerance {tol:.3e})"
            )
    for i, t in enumerate(CHECK_TIMES):
        for t2 in CHECK_TIMES[i + 1:]:
            gap = float(np.abs(samples[t] - samples[t2]).max())
            if gap > lip * (t2 - t) + tol:
                raise GeodesicResolutionError(
                    f"Lipschitz bound violated between t={t} and t={t2}: {gap:.3e}"
                )
    return path


def _danskin_tangent(g0: DualGridFunction, g1: DualGridFunction, s: np.ndarray,
                     slope_tol: float) -> np.ndarray:
    """``max (g0 - g1)`` over the maximisers of ``s*xi - g0(xi)``, for every ``s``.

    A dual computed from grid samples is piecewise linear with slopes equal to
    grid nodes, so at a node the maximiser is a whole run of dual nodes; the
    right derivative in ``t`` picks the best member of that run.
    """
    xi, y = g0.xi, g0.values
    hull = _lower_hull(xi, y)
    edge = np.diff(y[hull]) / np.diff(xi[hull])
    first = hull[np.searchsorted(edge, s - slope_tol, side="left")]
    last = hull[np.searchsorted(edge, s + slope_tol, side="right")]
    gap = np.append(g0.values - g1.values, -np.inf)
    bounds = np.empty(2 * s.size, dtype=np.int64)
    bounds[0::2] = first
    bounds[1::2] = last + 1
    return np.maximum.reduceat(gap, bounds)[0::2]


def initial_tangent(path: GeodesicPath, step: float = 1e-4,
                    rel_tol: float = 1e-3) -> GridFunction:
    """Right derivative of ``u_t`` at ``t = 0`` via the envelope theorem.

    At each node the maximising dual index of the ``t = 0`` problem is held
    fixed, giving ``g0(xi*) - g1(xi*)``; a forward difference cross-checks it.
    """
    grid = path.model.grid
    tangent = _danskin_tangent(path.g0, path.g1, grid.nodes, 1e-3 * grid.h)
    fd = (path.evaluate(step).values - path.evaluate(0.0).values) / step
    err = float(np.abs(fd - tangent).max())
    if err > rel_tol * path.lipschitz_bound + 1e-12:
        raise GeodesicResolutionError(
            f"initial tangent and forward difference differ by {err:.3e}"
        )
    return GridFunction(grid, tangent, 0.0, 0.0)


def _richardson(values_at: callable, base: float) -> float:
    h1, h2 = RICHARDSON_STEPS
    d1 = (values_at(h1) - base) / h1
    d2 = (values_at(h2) - base) / h2
    # one-sided quotients have error linear in the step; eliminate it
    return (h1 * d2 - h2 * d1) / (h1 - h2)


@dataclass(frozen=True)
class EnergyProfile:
    t: np.ndarray
    ma_energy: np.ndarray
    quantized: dict[int, np.ndarray]
    affinity_residual: float
    min_second_difference: dict[int, float]


def _second_differences(t: np.ndarray, e: np.ndarray) -> np.ndarray:
    if t.size < 3:
        return np.zeros(0)
    dt = np.diff(t)
    slopes = np.diff(e) / dt
    return np.diff(slopes) * 0.5 * (dt[1:] + dt[:-1])


def energy_profiles(path: GeodesicPath, t_grid: Sequence[float],
                    k_list: Sequence[int], m: int = 0) -> EnergyProfile:
    """Monge-Ampere and quantized energies sampled along the path."""
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > 1:
        raise ValueError("t_grid must be increasing inside [0, 1]")
    model = path.model
    v = v_theta(model)
    spaces = {k: SectionSpace(model, k, m) for k in k_list}
    weights = [path.evaluate(float(x)) for x in t]
    e_theta = np.array([ma_energy(model, w, v) for w in weights])
    e_k = {k: np.array([quantized_energy(sp, w) for w in weights]) for k, sp in spaces.items()}
    line = e_theta[0] + (t - t[0]) / (t[-1] - t[0]) * (e_theta[-1] - e_theta[0])
    residual = float(np.abs(e_theta - line).max())
    mins = {}
    for k, col in e_k.items():
        sd = _second_differences(t, col)
        mins[k] = float(sd.min()) if sd.size else math.inf
    return EnergyProfile(t, e_theta, e_k, residual, mins)


class DerivativePair(NamedTuple):
    lhs: float
    rhs: float


def qma_initial_derivative(path: GeodesicPath, space: SectionSpace,
                           rel_tol: float = 1e-4, check: bool = True) -> DerivativePair:
    """Right derivative of ``E_k(u_t)`` at 0 against the Bergman pairing of the tangent."""
    if space.model is not path.model:
        raise ValueError("section space and path use different models")
    u0 = path.evaluate(0.0)
    base = quantized_energy(space, u0)
    lhs = _richardson(lambda t: quantized_energy(space, path.evaluate(t)), base)
    tangent = initial_tangent(path)
    beta = bergman_density(space, u0, normalized=True)
    rhs = pair_density(tangent, beta)
    tol = rel_tol * tangent.osc() + 1e-10 * (1.0 + abs(rhs))
    if check and abs(lhs - rhs) > tol:
        raise DerivativeMismatchError("quantized energy variation mismatch", rhs, lhs)
    return DerivativePair(lhs, rhs)


def ma_energy_slope(path: GeodesicPath) -> float:
    """Right derivative of the Monge-Ampere energy along the path at ``t = 0``."""
    v = v_theta(path.model)
    u0 = path.evaluate(0.0)
    base = ma_energy(path.model, u0, v)
    return _richardson(lambda t: ma_energy(path.model, path.evaluate(t), v), base)


def affine_path_derivative(space: SectionSpace, phi: GridFunction, f: GridFunction,
                           step: float = 1e-3, rel_tol: float = 1e-5,
                           check: bool = True) -> DerivativePair:
    """Symmetric difference of ``t -> E_k(phi + t f)`` at 0 against ``int f dbeta_phi``."""
    slope = (quantized_energy(space, phi + step * f)
             - quantized_energy(space, phi - step * f)) / (2.0 * step)
    beta = bergman_density(space, phi, normalized=True)
    pairing = pair_density(f, beta)
    tol = rel_tol * f.osc() + 1e-10 * (1.0 + abs(pairing))
    if check and abs(slope - pairing) > tol:
        raise DerivativeMismatchError("affine path derivative mismatch", pairing, slope)
    return DerivativePair(slope, pairing)


def integrability_probe(path: GeodesicPath, density: GridFunction) -> dict[str, float]:
    """Experimental: how much of ``int |tangent| * density`` sits in the outer grid cells.

    Reports the integral and the share contributed by the outermost 5% of
    nodes on each side; nothing is asserted.
    """
    tangent = initial_tangent(path)
    w = np.abs(tangent.values) * density.values
    h = density.grid.h
    total = float(np.sum(w) * h)
    n = w.size
    edge = max(1, n // 20)
    outer = float((np.sum(w[:edge]) + np.sum(w[-edge:])) * h)
    return {"integral": total, "outer_share": outer / total if total > 0 else 0.0}
