"""Experiment configuration files.

INI-style text with four sections.  Every key is listed in ``KEYS``; any
other key is an error.

    [model]       d, reference
    [grid]        s_min, s_max, n_nodes
    [weights]     <name> = <weight expression>   (any number)
    [experiment]  kind, weight, target, metric, k_list, m, m_list, t_grid,
                  p_list, s_scan, seed, csv, json, plot_csv
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..radial import Grid
from .weights import WeightExpr, WeightSyntaxError, parse_weight

__all__ = ["ConfigError", "ExperimentConfig", "KINDS", "KEYS", "load_config", "parse_config"]

KINDS = ("quantize", "bergman", "geodesic", "envelope", "asymptotics", "morse", "compare", "chain")

KEYS = {
    "model": {"d", "reference"},
    "grid": {"s_min", "s_max", "n_nodes"},
    "experiment": {"kind", "weight", "target", "metric", "k_list", "m", "m_list", "t_grid",
                   "p_list", "s_scan", "seed", "csv", "json", "plot_csv"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    reference: WeightExpr
    reference_text: str
    grid: Grid
    weights: dict[str, WeightExpr]
    weight_texts: dict[str, str]
    kind: str
    weight: str
    k_list: tuple[int, ...]
    m: int = 0
    m_list: tuple[int, ...] = ()
    target: str | None = None
    metric: str | None = None
    t_grid: tuple[float, ...] = tuple(i / 10 for i in range(11))
    p_list: tuple[int, ...] = (16, 32, 64, 128)
    s_scan: tuple[float, ...] = tuple(-5.0 + 0.5 * i for i in range(21))
    seed: int = 0
    csv: str = "results.csv"
    json: str = "report.json"
    plot_csv: str = "plot.csv"
    source: str = field(default="", compare=False)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig(**data)


def _ints(text: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from exc


def _int(text: str, key: str) -> int:
    try:
        return int(text.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from exc


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from exc


def _parse_expr(text: str, where: str) -> WeightExpr:
    try:
        return parse_weight(text)
    except WeightSyntaxError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    cp.optionxform = str  # keep weight names case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown_sections = set(cp.sections()) - {"model", "grid", "weights", "experiment"}
    if unknown_sections:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown_sections))}")
    for sec, allowed in KEYS.items():
        if sec in cp:
            extra = set(cp[sec]) - allowed
            if extra:
                raise ConfigError(f"[{sec}] unknown key(s): {', '.join(sorted(extra))}")
    for sec in ("model", "experiment"):
        if sec not in cp:
            raise ConfigError(f"missing section [{sec}]")

    model = cp["model"]
    d = _int(model.get("d", "1"), "[model] d")
    ref_text = model.get("reference", "fs").strip()
    if ref_text == "fs":
        ref_text = f"fs({d})"
    reference = _parse_expr(ref_text, "[model] reference")

    g = cp["grid"] if "grid" in cp else {}
    try:
        grid = Grid(float(g.get("s_min", -30.0)), float(g.get("s_max", 30.0)),
                    int(g.get("n_nodes", 4001)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[grid] {exc}") from exc

    texts = dict(cp["weights"]) if "weights" in cp else {}
    weights = {name: _parse_expr(t, f"[weights] {name}") for name, t in texts.items()}

    ex = cp["experiment"]
    kind = ex.get("kind", "quantize").strip()
    if kind not in KINDS:
        raise ConfigError(f"[experiment] kind must be one of {', '.join(KINDS)}, got {kind!r}")
    k_list = _ints(ex.get("k_list", ""), "k_list")
    if not k_list:
        raise ConfigError("[experiment] k_list must not be empty")
    if list(k_list) != sorted(set(k_list)) or k_list[0] < 1:
        raise ConfigError(f"[experiment] k_list must be positive and strictly ascending, got {k_list}")
    kwargs = {}
    for key in ("weight", "target", "metric"):
        if key in ex:
            name = ex[key].strip()
            if name not in weights:
                raise ConfigError(f"[experiment] {key} refers to unknown weight {name!r}")
            kwargs[key] = name
    if "weight" not in kwargs:
        if kind not in ("asymptotics",):
            raise ConfigError("[experiment] weight is required")
        kwargs["weight"] = ""
    if "m" in ex:
        kwargs["m"] = _int(ex["m"], "m")
    if "m_list" in ex:
        kwargs["m_list"] = _ints(ex["m_list"], "m_list")
    if "t_grid" in ex:
        kwargs["t_grid"] = _floats(ex["t_grid"], "t_grid")
    if "p_list" in ex:
        kwargs["p_list"] = _ints(ex["p_list"], "p_list")
    if "s_scan" in ex:
        kwargs["s_scan"] = _floats(ex["s_scan"], "s_scan")
    if "seed" in ex:
        kwargs["seed"] = _int(ex["seed"], "seed")
    for key in ("csv", "json", "plot_csv"):
        if key in ex:
            kwargs[key] = ex[key].strip()
    return ExperimentConfig(d, reference, ref_text, grid, weights, texts, kind,
                            k_list=k_list, source=source, **kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), str(p))
