"""Dispatch a configuration to the numerical modules and collect a report."""

from __future__ import annotations

import platform
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from ..asymptotics import (
    RadialMetric,
    ambient_kernel,
    comparison_ratio,
    equilibrium_report,
    expansion_fit,
    kernel_cauchy_schwarz,
    morse_report,
    peak_extension,
)
from ..geodesics import energy_profiles, make_geodesic
from ..pluripotential import PolarizedModel, certify, envelope, ma_energy, v_theta
from ..radial import GridFunction
from ..sections import SectionSpace, quantized_energy
from .chain import key_estimate_chain
from .config import ExperimentConfig
from .report import Report, Table
from .weights import derivative, evaluate, simplify, to_grid_function

__all__ = ["build_model", "weight_function", "metric_from_expr", "run_config"]

AFFINITY_TOL = 1e-6
CONVEXITY_TOL = 1e-8
DOMINATION_TOL = 1e-8
GROWTH_TOL = 1e-3


def build_model(cfg: ExperimentConfig) -> PolarizedModel:
    phi0 = to_grid_function(cfg.reference, cfg.grid)
    return PolarizedModel(cfg.d, phi0, cfg.reference_text)


def weight_function(cfg: ExperimentConfig, name: str) -> GridFunction:
    return to_grid_function(cfg.weights[name], cfg.grid)


def metric_from_expr(expr, label: str = "") -> RadialMetric:
    """Exact value and curvature callables from a weight expression."""
    second = simplify(derivative(simplify(derivative(expr))))
    return RadialMetric(lambda s: evaluate(expr, s), lambda s: evaluate(second, s), label)


def _fingerprint(cfg: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "seed": cfg.seed,
        "grid": {"s_min": cfg.grid.s_min, "s_max": cfg.grid.s_max, "n_nodes": cfg.grid.n_nodes},
        "model": {"d": cfg.d, "reference": cfg.reference_text},
        "weights": dict(sorted(cfg.weight_texts.items())),
        "k_list": list(cfg.k_list),
        "m": cfg.m,
        "tolerances": {"affinity": AFFINITY_TOL, "convexity": CONVEXITY_TOL,
                       "domination": DOMINATION_TOL, "growth_slope": GROWTH_TOL},
    }


def _rows(items: Sequence, fn: Callable, threads: int) -> list:
    """Evaluate ``fn`` on every item, in order; exceptions are returned, not raised."""

    def safe(x):
        try:
            return fn(x)
        except Exception as exc:  # noqa: BLE001 - recorded in the ledger
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(safe, items))
    return [safe(x) for x in items]


def _decreasing_check(report: Report, name: str, ks: list, values: list) -> None:
    if len(values) < 2:
        return
    steps = [a - b for a, b in zip(values, values[1:])]
    report.check(name, all(s >= 0 for s in steps), min(steps),
                 f"values over k={ks}")


def _add(report: Report, row: dict, name: str) -> None:
    try:
        report.table.add(row)
    except ValueError as exc:
        report.fail(name, exc)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _quantize(cfg, model, report, threads):
    u = certify(model, weight_function(cfg, cfg.weight))
    pw = u if u.psh_certified else envelope(model, u.u)[0]
    report.check("weight_psh", u.psh_certified, None,
                 "" if u.psh_certified else "energy compared at the envelope")
    e_theta = ma_energy(model, pw, v_theta(model))
    out = _rows(cfg.k_list, lambda k: quantized_energy(SectionSpace(model, k, cfg.m), u), threads)
    ks, errs = [], []
    for k, e in zip(cfg.k_list, out):
        if isinstance(e, Exception):
            report.fail(f"quantize[k={k}]", e)
            continue
        err = abs(e - e_theta)
        _add(report, {"k": k, "quantized_energy": e, "ma_energy": e_theta, "error": err,
                      "k_times_error": k * err}, f"row[k={k}]")
        report.plot.add({"series": "energy_error", "x_name": "k", "x": k, "y_name": "error", "y": err})
        ks.append(k)
        errs.append(err)
    _decreasing_check(report, "energy_error_decreasing", ks, errs)


def _bergman(cfg, model, report, threads):
    phi = weight_function(cfg, cfg.weight)
    out = _rows(cfg.k_list, lambda k: equilibrium_report(model, phi, [k])[0], threads)
    ks, dist, energy = [], [], []
    for k, row in zip(cfg.k_list, out):
        if isinstance(row, Exception):
            report.fail(f"bergman[k={k}]", row)
            continue
        _add(report, {"k": k, "kolmogorov": row.kolmogorov, "energy_error": row.energy_error},
             f"row[k={k}]")
        report.plot.add({"series": "kolmogorov", "x_name": "k", "x": k,
                         "y_name": "distance", "y": row.kolmogorov})
        ks.append(k)
        dist.append(row.kolmogorov)
        energy.append(row.energy_error)
    _decreasing_check(report, "kolmogorov_decreasing", ks, dist)
    _decreasing_check(report, "energy_error_decreasing", ks, energy)


def _geodesic(cfg, model, report, threads):
    if cfg.target is None:
        raise ValueError("geodesic experiments need [experiment] target")
    u0 = certify(model, weight_function(cfg, cfg.weight))
    u1 = certify(model, weight_function(cfg, cfg.target))
    path = make_geodesic(model, u0, u1)
    prof = energy_profiles(path, cfg.t_grid, cfg.k_list, cfg.m)
    osc = max(u0.osc(), u1.osc(), (u0.u - u1.u).osc())
    for i, t in enumerate(prof.t):
        row = {"t": float(t), "ma_energy": float(prof.ma_energy[i])}
        for k in cfg.k_list:
            row[f"quantized_k{k}"] = float(prof.quantized[k][i])
        _add(report, row, f"row[t={t:g}]")
        report.plot.add({"series": "ma_energy", "x_name": "t", "x": float(t),
                         "y_name": "energy", "y": float(prof.ma_energy[i])})
        for k in cfg.k_list:
            report.plot.add({"series": f"quantized_k{k}", "x_name": "t", "x": float(t),
                             "y_name": "energy", "y": float(prof.quantized[k][i])})
    tol = AFFINITY_TOL * osc
    report.check("ma_energy_affine", prof.affinity_residual <= tol, tol - prof.affinity_residual,
                 f"residual {prof.affinity_residual:.3e}, tolerance {tol:.3e}")
    for k in cfg.k_list:
        sd = prof.min_second_difference[k]
        report.check(f"quantized_convex[k={k}]", sd >= -CONVEXITY_TOL, sd + CONVEXITY_TOL)


def _envelope(cfg, model, report, threads):
    f = weight_function(cfg, cfg.weight)
    pw, contact = envelope(model, f)
    for s, fv, pv, c in zip(cfg.grid.nodes, f.values, pw.values, contact.mask):
        report.table.add({"s": float(s), "f": float(fv), "envelope": float(pv), "contact": bool(c)})
    excess = float((pw.values - f.values).max())
    report.check("envelope_below", excess <= contact.contact_tol, contact.contact_tol - excess)
    report.check("envelope_psh", pw.psh_certified)
    outside = contact.equilibrium_mass_outside
    report.check("mass_on_contact_set", outside <= 1e-6 * model.d, 1e-6 * model.d - outside,
                 f"equilibrium mass off the contact set {outside:.3e}")


def _asymptotics(cfg, model, report, threads):
    if cfg.metric is None:
        raise ValueError("asymptotics experiments need [experiment] metric")
    metric = metric_from_expr(cfg.weights[cfg.metric], cfg.metric)

    def one(p):
        ker = ambient_kernel(p, metric, cfg.grid)
        peaks = [peak_extension(ker, x).sup_ratio for x in cfg.s_scan]
        excess = max(peaks) - 1.0
        cs = kernel_cauchy_schwarz(ker, seed=cfg.seed + p)
        trace = ker.trace() / (p + 1) - 1.0
        return excess, cs, trace

    out = _rows(cfg.p_list, one, threads)
    for p, r in zip(cfg.p_list, out):
        if isinstance(r, Exception):
            report.fail(f"kernel[p={p}]", r)
            continue
        excess, cs, trace = r
        _add(report, {"p": p, "peak_excess": excess, "peak_excess_times_p": excess * p,
                      "cauchy_schwarz_excess": cs, "trace_error": trace}, f"row[p={p}]")
        report.plot.add({"series": "peak_excess", "x_name": "p", "x": p, "y_name": "excess", "y": excess})
        report.check(f"peak_at_least_one[p={p}]", excess >= -1e-8, excess + 1e-8)
        report.check(f"cauchy_schwarz[p={p}]", cs <= 1e-10, 1e-10 - cs)
        report.check(f"projection_trace[p={p}]", abs(trace) <= 1e-8, 1e-8 - abs(trace))
    try:
        fit = expansion_fit(metric, cfg.p_list, cfg.grid)
        report.check("expansion_b0", fit.b0_error <= 1e-3, 1e-3 - fit.b0_error,
                     f"b1 spread {fit.b1_spread:.3e}")
    except Exception as exc:  # noqa: BLE001
        report.fail("expansion_b0", exc)


def _morse(cfg, model, report, threads):
    phi = weight_function(cfg, cfg.weight)
    rep = morse_report(model, phi, cfg.k_list, cfg.m)
    for i, k in enumerate(rep.k_list):
        row = {"k": k, "bounded_constant": rep.bounded_constants[i],
               "region_max_density": rep.region_max_density[i] if rep.region_max_density else 0.0,
               "domination_residual": rep.domination_by_k[i]}
        if cfg.m >= 1:
            row["twisted_rho"] = rep.twisted_rho[i]
        _add(report, row, f"row[k={k}]")
        report.plot.add({"series": "bounded_constant", "x_name": "k", "x": k,
                         "y_name": "constant", "y": rep.bounded_constants[i]})
    report.check("clause_a_growth", rep.growth_slope <= GROWTH_TOL, GROWTH_TOL - rep.growth_slope,
                 f"regression slope per doubling {rep.growth_slope:.3e}")
    if rep.region_empty:
        report.check("clause_b_decay", False, None, "negative-curvature region is empty")
    else:
        ok = rep.decay_rate > 0 and rep.decay_r2 >= 0.95
        report.check("clause_b_decay", ok, rep.decay_rate,
                     f"rate {rep.decay_rate:.4g}, R^2 {rep.decay_r2:.4f}")
    report.check("clause_c_domination", rep.domination_residual <= DOMINATION_TOL,
                 DOMINATION_TOL - rep.domination_residual)


def _compare(cfg, model, report, threads):
    u = weight_function(cfg, cfg.weight)
    ms = cfg.m_list or (cfg.m,)
    pairs = [(k, m) for k in cfg.k_list for m in ms]
    out = _rows(pairs, lambda km: comparison_ratio(model, u, km[0], km[1], check=False), threads)
    for (k, m), r in zip(pairs, out):
        if isinstance(r, Exception):
            report.fail(f"compare[k={k},m={m}]", r)
            continue
        _add(report, {"k": k, "m": m, "max_ratio": r.max_ratio, "bound": r.bound}, f"row[k={k},m={m}]")
        report.check(f"comparison[k={k},m={m}]", r.max_ratio <= r.bound + 1e-8,
                     r.bound + 1e-8 - r.max_ratio)


def _chain(cfg, model, report, threads):
    f = weight_function(cfg, cfg.weight)
    f = f - float(f.values.max())  # the chain is stated for u <= 0
    u = certify(model, f)
    ms = cfg.m_list or (cfg.m,)
    pairs = [(k, m) for k in cfg.k_list for m in ms]
    out = _rows(pairs, lambda km: key_estimate_chain(model, u, km[0], km[1], check=False), threads)
    for (k, m), r in zip(pairs, out):
        if isinstance(r, Exception):
            report.fail(f"chain[k={k},m={m}]", r)
            continue
        _add(report, {"k": k, "m": m, "gap": r.gap, "derivative_gap": r.derivative_gap,
                      "pairing": r.pairing, "twisted_pairing": r.twisted_pairing}, f"row[k={k},m={m}]")
        report.plot.add({"series": f"gap_m{m}", "x_name": "k", "x": k, "y_name": "gap", "y": r.gap})
        for link, slack in r.slacks.items():
            report.check(f"chain_{link}[k={k},m={m}]", slack >= -r.tolerance, slack + r.tolerance)


_COLUMNS = {
    "quantize": ("k", "quantized_energy", "ma_energy", "error", "k_times_error"),
    "bergman": ("k", "kolmogorov", "energy_error"),
    "envelope": ("s", "f", "envelope", "contact"),
    "asymptotics": ("p", "peak_excess", "peak_excess_times_p", "cauchy_schwarz_excess", "trace_error"),
    "compare": ("k", "m", "max_ratio", "bound"),
    "chain": ("k", "m", "gap", "derivative_gap", "pairing", "twisted_pairing"),
}

_RUNNERS = {
    "quantize": _quantize, "bergman": _bergman, "geodesic": _geodesic, "envelope": _envelope,
    "asymptotics": _asymptotics, "morse": _morse, "compare": _compare, "chain": _chain,
}


def _columns(cfg: ExperimentConfig) -> tuple[str, ...]:
    if cfg.kind == "geodesic":
        return ("t", "ma_energy") + tuple(f"quantized_k{k}" for k in cfg.k_list)
    if cfg.kind == "morse":
        cols = ("k", "bounded_constant", "region_max_density", "domination_residual")
        return cols + (("twisted_rho",) if cfg.m >= 1 else ())
    return _COLUMNS[cfg.kind]


def run_config(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Run one experiment; module errors land in the ledger instead of propagating."""
    report = Report(cfg.kind, _fingerprint(cfg), Table(_columns(cfg)))
    try:
        model = build_model(cfg)
    except Exception as exc:  # noqa: BLE001
        report.fail("model", exc)
        return report
    try:
        _RUNNERS[cfg.kind](cfg, model, report, max(1, int(threads)))
    except Exception as exc:  # noqa: BLE001
        report.fail(cfg.kind, exc)
    return report
