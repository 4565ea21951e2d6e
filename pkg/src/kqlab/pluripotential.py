"""Reference geometry, envelopes and the Monge-Ampere energy on the radial model.

A :class:`PolarizedModel` fixes the degree ``d`` of the line bundle and a
convex reference potential ``phi0`` with slopes ``0`` and ``d``.  Weights
are bounded functions ``u``; ``phi0 + u`` convex means ``u`` is
quasi-plurisubharmonic for the reference form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .radial import (
    ConvexityError,
    ConvexPotential,
    GridFunction,
    SlopeMeasure,
    as_convex,
    constrained_convex_envelope,
    conv_tolerance,
    pair_measure,
    slope_measure,
)

__all__ = [
    "PolarizedModel",
    "Weight",
    "ContactReport",
    "UncertifiedWeightError",
    "DerivativeMismatchError",
    "EnergyDerivative",
    "certify",
    "v_theta",
    "envelope",
    "ma_measure",
    "ma_energy",
    "energy_derivative_along_perturbation",
]


class UncertifiedWeightError(ValueError):
    """An operation that needs a psh weight received one that is not."""


class DerivativeMismatchError(ArithmeticError):
    """Analytic and finite-difference derivatives disagree beyond tolerance."""

    def __init__(self, message: str, analytic: float, numeric: float):
        super().__init__(f"{message}: analytic={analytic!r}, finite difference={numeric!r}")
        self.analytic = analytic
        self.numeric = numeric


@dataclass(frozen=True, eq=False)
class PolarizedModel:
    d: int
    phi0: ConvexPotential
    label: str = ""

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"degree must be a positive integer, got {self.d}")
        phi0 = as_convex(self.phi0)
        if phi0.left_slope != 0.0 or phi0.right_slope != float(self.d):
            raise ValueError(
                f"reference potential must have slopes (0, {self.d}), got "
                f"({phi0.left_slope}, {phi0.right_slope})"
            )
        object.__setattr__(self, "phi0", phi0)

    @property
    def grid(self):
        return self.phi0.grid

    @property
    def volume(self) -> float:
        return float(self.phi0.right_slope - self.phi0.left_slope)

    def zero(self) -> "Weight":
        return certify(self, GridFunction(self.grid, np.zeros(self.grid.n_nodes), 0.0, 0.0))

    def constant(self, c: float) -> "Weight":
        return certify(self, GridFunction(self.grid, np.full(self.grid.n_nodes, float(c)), 0.0, 0.0))


@dataclass(frozen=True, eq=False)
class Weight:
    u: GridFunction
    psh_certified: bool

    def __post_init__(self) -> None:
        if not self.u.is_bounded():
            raise ValueError(
                f"weights must have zero asymptotic slopes, got {self.u.slopes}"
            )

    @property
    def values(self) -> np.ndarray:
        return self.u.values

    def osc(self) -> float:
        return self.u.osc()


def certify(model: PolarizedModel, u: GridFunction) -> Weight:
    """Wrap ``u`` as a weight, flagging whether ``phi0 + u`` is discretely convex."""
    if u.grid != model.grid:
        raise ValueError("weight and model live on different grids")
    total = model.phi0.values + u.values
    second = total[2:] - 2.0 * total[1:-1] + total[:-2]
    ok = bool(second.min() >= -conv_tolerance(total))
    return Weight(u, ok)


def _require_psh(u: Weight) -> None:
    if not u.psh_certified:
        raise UncertifiedWeightError("weight is not certified psh; pass it through envelope() first")


@dataclass(frozen=True, eq=False)
class ContactReport:
    mask: np.ndarray
    equilibrium_mass_outside: float
    contact_tol: float


def envelope(model: PolarizedModel, f: GridFunction,
             contact_tol: float | None = None) -> tuple[Weight, ContactReport]:
    """Largest psh weight lying below ``f``, with its contact set."""
    if not f.is_bounded():
        raise ValueError("envelope expects a bounded function")
    total = model.phi0 + f
    env = constrained_convex_envelope(total, 0.0, float(model.d))
    p_vals = env.values - model.phi0.values
    weight = certify(model, GridFunction(model.grid, p_vals, 0.0, 0.0))
    if contact_tol is None:
        contact_tol = 1e-6 * (1.0 + f.osc())
    mask = np.abs(p_vals - f.values) <= contact_tol
    mu = slope_measure(env)
    outside_cells = ~(mask[:-1] | mask[1:])
    outside = float(mu.cell_masses[outside_cells].sum())
    if not mask[0]:
        outside += mu.left_defect
    if not mask[-1]:
        outside += mu.right_defect
    mask.setflags(write=False)
    return weight, ContactReport(mask, max(outside, 0.0), float(contact_tol))


def v_theta(model: PolarizedModel) -> Weight:
    """Envelope of the zero function (the minimal-singularity weight)."""
    zero = GridFunction(model.grid, np.zeros(model.grid.n_nodes), 0.0, 0.0)
    return envelope(model, zero)[0]


def ma_measure(model: PolarizedModel, u: Weight) -> SlopeMeasure:
    """Monge-Ampere measure of ``u`` pushed to the s-line; total mass ``d``."""
    _require_psh(u)
    return slope_measure(model.phi0 + u.u)


def ma_energy(model: PolarizedModel, u: Weight, reference: Weight | None = None) -> float:
    """Monge-Ampere energy, normalised to vanish at the minimal-singularity weight."""
    _require_psh(u)
    v = v_theta(model) if reference is None else reference
    diff = u.u - v.u
    total = pair_measure(diff, ma_measure(model, u)) + pair_measure(diff, ma_measure(model, v))
    return total / (2.0 * model.d)


class EnergyDerivative(NamedTuple):
    analytic: float
    finite_difference: float


def energy_derivative_along_perturbation(
    model: PolarizedModel,
    u: Weight,
    f: GridFunction,
    step: float = 1e-3,
    rel_tol: float = 1e-4,
    check: bool = True,
) -> EnergyDerivative:
    """Derivative of ``t -> E(P(u + t f))`` at ``t = 0``.

    The analytic value pairs ``f`` with the normalised Monge-Ampere measure of
    ``u``; a symmetric difference through the envelope is computed alongside
    and must agree to ``rel_tol * osc(f)``.
    """
    _require_psh(u)
    analytic = pair_measure(f, ma_measure(model, u)) / model.d
    v = v_theta(model)
    plus = envelope(model, u.u + step * f)[0]
    minus = envelope(model, u.u - step * f)[0]
    numeric = (ma_energy(model, plus, v) - ma_energy(model, minus, v)) / (2.0 * step)
    tol = rel_tol * f.osc() + 1e-10 * (1.0 + abs(analytic))
    if check and abs(analytic - numeric) > tol:
        raise DerivativeMismatchError("energy derivative mismatch", analytic, numeric)
    return EnergyDerivative(analytic, numeric)
