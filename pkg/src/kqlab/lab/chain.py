"""The chain of inequalities behind the quantization estimate, checked link by link."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..asymptotics import twist_constant
from ..geodesics import initial_tangent, ma_energy_slope, make_geodesic, qma_initial_derivative
from ..pluripotential import PolarizedModel, UncertifiedWeightError, Weight, ma_energy, ma_measure, v_theta
from ..radial import pair_measure
from ..sections import SectionSpace, bergman_density, pair_density, quantized_energy

__all__ = ["ChainViolationError", "ChainRecord", "key_estimate_chain"]


class ChainViolationError(AssertionError):
    def __init__(self, link: str, slack: float, record: "ChainRecord"):
        super().__init__(f"chain link '{link}' violated with slack {slack:.3e}")
        self.link = link
        self.slack = slack
        self.record = record


@dataclass(frozen=True)
class ChainRecord:
    k: int
    m: int
    gap: float              # E_k(u) - E(u)
    derivative_gap: float   # d/dt E_k(u_t) - d/dt E(u_t) at t = 0
    pairing: float          # int tangent d(beta_k - MA(0)/vol)
    twisted_pairing: float  # same with the twisted density and the comparison factor
    tolerance: float
    c_hat: float

    @property
    def slacks(self) -> dict[str, float]:
        return {
            "convexity": self.gap - self.derivative_gap,
            "variation": self.derivative_gap - self.pairing,
            "comparison": self.pairing - self.twisted_pairing,
        }


def key_estimate_chain(model: PolarizedModel, u: Weight, k: int, m: int = 0,
                       rel_tol: float = 1e-6, check: bool = True) -> ChainRecord:
    """Evaluate ``gap >= derivative_gap >= pairing >= twisted_pairing`` along the
    geodesic from 0 to ``u``.

    With ``m = 0`` the last member equals ``pairing``.
    """
    if not u.psh_certified:
        raise UncertifiedWeightError("the chain needs a certified psh weight")
    if float(u.values.max()) > 0.0:
        raise ValueError("normalise the weight so that u <= 0")
    zero = model.zero()
    if not zero.psh_certified:
        raise UncertifiedWeightError("reference potential is not convex; 0 is not psh")
    space = SectionSpace(model, k, 0)
    v = v_theta(model)
    gap = quantized_energy(space, u) - ma_energy(model, u, v)

    path = make_geodesic(model, zero, u)
    d_quant = qma_initial_derivative(path, space, check=False).lhs
    d_ma = ma_energy_slope(path)
    tangent = initial_tangent(path)
    beta = bergman_density(space, zero, normalized=True)
    eq = pair_measure(tangent, ma_measure(model, zero)) / model.d
    pairing = pair_density(tangent, beta) - eq

    c_hat = 0.0
    twisted = pairing
    if m >= 1:
        c_hat = twist_constant(m)
        dens = bergman_density(SectionSpace(model, k, m), zero, normalized=False)
        factor = (1.0 + c_hat / m) ** 2
        twisted = factor * pair_density(tangent, dens) / space.dimension - eq

    # rounding floor so that constant weights, with zero oscillation, still tie
    tol = rel_tol * u.osc() + 1e-12 * (1.0 + float(np.abs(u.values).max()))
    rec = ChainRecord(int(k), int(m), gap, d_quant - d_ma, pairing, twisted, tol, c_hat)
    if check:
        for link, slack in rec.slacks.items():
            if slack < -tol:
                raise ChainViolationError(link, slack, rec)
    return rec
