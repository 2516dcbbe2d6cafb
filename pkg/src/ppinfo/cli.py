"""Batch command-line front end.

Each run reads one JSON config and writes one JSON document.  Exit codes:
0 on success (audit verdicts that report a failure are still results),
2 for configuration errors, 3 for numerical failures.

Example::

    ppinfo entropy --config desk.json --out result.json
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import numpy as np

from . import __version__
from .estimator import MapEstimate, c_sensitivity, map_estimate, set_map_estimate
from .info import (
    CHECKED,
    AbsoluteContinuityViolation,
    Nondimensionalized,
    NonpositiveDensity,
    clark_igf,
    clark_igf_f_substituted,
    cumulant_functional,
    differential_entropy,
    entropy_moments_audit,
    kl_divergence,
    laplace_functional,
    mc_entropy,
    shannon_entropy_audit,
)
from .measure import PatternSet, QuadratureBudgetExceeded, ReferenceMeasure, prob_measure
from .models import (
    EmptyOnlyModel,
    IIDClusterModel,
    MultiBernoulliModel,
    PointProcessModel,
    PoissonModel,
    UnsupportedModel,
    sample_many,
)
from .pgfl import Indicator, NonConvergent, janossy_from_pgfl, nth_differential, pgfl_eval
from .space import BaseSpace, Lattice, NonnegFunction, PointPattern, QuadratureGrid, Region, TestFunction
from .units import Quantity, UnitError, format_unit, unit_exp

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

NUMERICAL_ERRORS = (
    NonpositiveDensity,
    AbsoluteContinuityViolation,
    NonConvergent,
    QuadratureBudgetExceeded,
    UnitError,
    UnsupportedModel,
    FloatingPointError,
    OverflowError,
)


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


# -- config ----------------------------------------------------------------------


def _get(block: dict, key: str, path: str, kind, default=..., check=None):
    where = f"{path}.{key}" if path else key
    if key not in block or block[key] is None:
        if default is ...:
            raise ConfigError(where, "missing required field")
        return default
    value = block[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(where, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    if check is not None:
        problem = check(value)
        if problem:
            raise ConfigError(where, problem)
    return value


def _block(cfg: dict, key: str, required: bool = False) -> dict:
    if key not in cfg:
        if required:
            raise ConfigError(key, "missing required block")
        return {}
    if not isinstance(cfg[key], dict):
        raise ConfigError(key, "expected an object")
    return cfg[key]


def _positive(v):
    return None if v > 0 and math.isfinite(v) else f"must be positive, got {v!r}"


def _parse_alpha(raw, where: str) -> Fraction:
    if isinstance(raw, int) and not isinstance(raw, bool):
        return Fraction(raw)
    if not isinstance(raw, str):
        raise ConfigError(where, 'expected a rational string such as "1/2"')
    try:
        return unit_exp(raw)
    except ZeroDivisionError:
        raise ConfigError(where, "zero denominator") from None
    except ValueError:
        raise ConfigError(where, f"not a rational number: {raw!r}") from None


def _cell_values(raw, lattice: Lattice, where: str):
    """Per-cell values given as a number, a list, "uniform" or a gaussian bump."""
    if isinstance(raw, str):
        if raw != "uniform":
            raise ConfigError(where, f"unknown shape {raw!r}")
        return raw
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, list):
        arr = np.asarray(raw, dtype=float) if all(isinstance(v, (int, float)) for v in raw) else None
        if arr is None or arr.size != lattice.size:
            raise ConfigError(where, f"expected {lattice.size} numbers")
        return arr
    if isinstance(raw, dict) and "gaussian" in raw:
        g = raw["gaussian"]
        if not isinstance(g, dict):
            raise ConfigError(f"{where}.gaussian", "expected an object")
        mean = np.atleast_1d(np.asarray(_get(g, "mean", f"{where}.gaussian", (int, float, list)), dtype=float))
        sd = _get(g, "sd", f"{where}.gaussian", float, check=_positive)
        if mean.size != lattice.dimension:
            raise ConfigError(f"{where}.gaussian.mean", "must have one entry per dimension")
        d2 = np.sum((lattice.midpoints - mean) ** 2, axis=1)
        return np.exp(-0.5 * d2 / sd**2)
    raise ConfigError(where, "expected a number, a list, \"uniform\" or {\"gaussian\": ...}")


def _parse_space(cfg: dict) -> BaseSpace:
    blk = _block(cfg, "base_space", required=True)
    bounds = _get(blk, "bounds", "base_space", list)
    dim = _get(blk, "dimension", "base_space", int, len(bounds))
    unit_name = _get(blk, "unit_name", "base_space", str, "iota")
    if len(bounds) != dim or not all(isinstance(b, list) and len(b) == 2 for b in bounds):
        raise ConfigError("base_space.bounds", f"expected {dim} [lower, upper] pairs")
    try:
        return BaseSpace(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds), unit_name)
    except (TypeError, ValueError) as err:
        raise ConfigError("base_space.bounds", str(err)) from None


def _parse_model(blk: Any, lattice: Lattice, path: str) -> PointProcessModel:
    if not isinstance(blk, dict):
        raise ConfigError(path, "expected an object")
    variant = _get(blk, "variant", path, str)
    try:
        if variant == "poisson":
            lam = _cell_values(blk.get("intensity", 0.5), lattice, f"{path}.intensity")
            if isinstance(lam, str):
                raise ConfigError(f"{path}.intensity", "expected numbers per cell or a gaussian bump")
            return PoissonModel(lattice, lam)
        if variant == "iid_cluster":
            pmf = _get(blk, "cardinality", path, list)
            spatial = _cell_values(blk.get("spatial_pdf", "uniform"), lattice, f"{path}.spatial_pdf")
            return IIDClusterModel(lattice, pmf, spatial)
        if variant == "multi_bernoulli":
            comps = _get(blk, "components", path, list)
            parsed = []
            for i, comp in enumerate(comps):
                where = f"{path}.components[{i}]"
                if not isinstance(comp, dict):
                    raise ConfigError(where, "expected an object")
                q = _get(comp, "q", where, float, check=lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]")
                parsed.append((q, _cell_values(comp.get("pdf", "uniform"), lattice, f"{where}.pdf")))
            return MultiBernoulliModel(lattice, parsed)
        if variant == "empty":
            return EmptyOnlyModel(lattice)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(path, str(err)) from None
    raise ConfigError(f"{path}.variant", f"unknown variant {variant!r}")


@dataclass
class RunConfig:
    """Parsed configuration; every field is a module-level object."""

    space: BaseSpace
    grid: QuadratureGrid
    lattice: Lattice
    model: PointProcessModel
    ref: Optional[ReferenceMeasure]
    mc_samples: int
    seed: int
    raw: dict = field(repr=False)

    @classmethod
    def from_dict(cls, cfg: Any, seed: Optional[int] = None) -> "RunConfig":
        if not isinstance(cfg, dict):
            raise ConfigError("config", "top level must be an object")
        space = _parse_space(cfg)
        gblk = _block(cfg, "grid")
        cells = _get(gblk, "cells", "grid", int, 100, check=lambda v: None if v >= 1 else "must be >= 1")
        n_max = _get(gblk, "n_max", "grid", int, None, check=lambda v: None if v >= 0 else "must be >= 0")
        tail = _get(gblk, "tail_tolerance", "grid", float, 1e-10, check=lambda v: None if 0 < v < 1 else "must lie in (0, 1)")
        grid = QuadratureGrid(cells, n_max, tail)
        lattice = Lattice(space, cells)
        model = _parse_model(cfg.get("model"), lattice, "model")
        rblk = _block(cfg, "reference")
        c = _get(rblk, "c_value", "reference", float, None, check=_positive)
        mc = _block(cfg, "mc")
        samples = _get(mc, "samples", "mc", int, 10000, check=lambda v: None if v >= 2 else "must be >= 2")
        mc_seed = _get(mc, "seed", "mc", int, 0)
        return cls(
            space, grid, lattice, model, None if c is None else ReferenceMeasure.of(c), samples,
            mc_seed if seed is None else seed, cfg,
        )

    def require_ref(self) -> ReferenceMeasure:
        if self.ref is None:
            raise ConfigError("reference.c_value", "missing required field")
        return self.ref


def load_config(path: str, seed: Optional[int] = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(path, err.strerror or str(err)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}", err.msg) from None
    return RunConfig.from_dict(raw, seed)


# -- output helpers -------------------------------------------------------------------


def _dim(value: float, exponent) -> dict:
    return {"value": float(value), "unit_exponent": format_unit(Fraction(exponent))}


def _points(pattern: PointPattern, space: BaseSpace) -> dict:
    return {
        "coordinates": [list(p) for p in pattern.points],
        "unit_exponent": format_unit(space.axis_unit),
    }


def _map_row(c: float, est: MapEstimate, space: BaseSpace) -> dict:
    return {
        "c": _dim(c, 1),
        "n_hat": est.n_hat,
        "points": _points(est.pattern, space),
        "cells": list(est.cells),
        "score": est.score,
    }


def _rel_err(got: float, want: float) -> Optional[float]:
    return abs(got - want) / abs(want) if want != 0 else None


# -- commands ----------------------------------------------------------------------------


def cmd_entropy(rc: RunConfig) -> dict:
    ref = rc.require_ref()
    de = differential_entropy(rc.model, ref, rc.grid)
    mc_de, mc_se = mc_entropy(rc.model, ref, rc.mc_samples, rc.seed)
    return {
        "de": de,
        "mc_de": mc_de,
        "mc_stderr": mc_se,
        "mc_samples": rc.mc_samples,
        "seed": rc.seed,
        "c": _dim(ref.value, 1),
        "n_max": rc.grid.resolve_n_max(rc.model),
    }


def cmd_kl(rc: RunConfig) -> dict:
    blk = _block(rc.raw, "kl", required=True)
    other = _parse_model(blk.get("model"), rc.lattice, "kl.model")
    return {"kl": kl_divergence(rc.model, other, rc.grid), "n_max": rc.grid.resolve_n_max(rc.model)}


def cmd_map(rc: RunConfig) -> dict:
    ref = rc.require_ref()
    est = map_estimate(rc.model, ref, rc.grid)
    set_est = set_map_estimate(rc.model, ref, rc.grid)
    return {"rows": [_map_row(ref.value, est, rc.space)], "set_form_agrees": est.cells == set_est.cells}


def cmd_c_sweep(rc: RunConfig) -> dict:
    blk = _block(rc.raw, "sweep", required=True)
    values = _get(blk, "c_values", "sweep", list)
    if not values or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in values):
        raise ConfigError("sweep.c_values", "expected a non-empty list of positive numbers")
    result = c_sensitivity(rc.model, rc.grid, values)
    return {
        "rows": [_map_row(c, est, rc.space) for c, est in result.rows],
        "crossings": [
            {
                "c_low": _dim(x.c_low, 1),
                "c_high": _dim(x.c_high, 1),
                "c_star": _dim(x.c_star, 1),
                "n_below": x.n_below,
                "n_above": x.n_above,
                "guidance_ratio": ratio,
            }
            for x, ratio in zip(result.crossings, result.guidance_ratios)
        ],
        "guidance_scale": _dim(result.guidance_scale, 1) if math.isfinite(result.guidance_scale) else None,
    }


def cmd_audit(rc: RunConfig) -> dict:
    blk = _block(rc.raw, "audit", required=True)
    alpha = _parse_alpha(blk.get("alpha", "0"), "audit.alpha")
    mode_name = _get(blk, "mode", "audit", str, "checked")
    if mode_name == "checked":
        mode = CHECKED
    elif mode_name == "nondimensionalized":
        mode = Nondimensionalized(_get(blk, "k", "audit", float, 1.0, check=_positive))
    else:
        raise ConfigError("audit.mode", 'expected "checked" or "nondimensionalized"')
    m = _get(blk, "m", "audit", int, 1, check=lambda v: None if 0 <= v <= 4 else "must lie in 0..4")
    try:
        h = TestFunction(rc.lattice, _cell_values(blk.get("h", 1.0), rc.lattice, "audit.h"))
        f = NonnegFunction(rc.lattice, _cell_values(blk.get("f", 0.0), rc.lattice, "audit.f"))
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("audit", str(err)) from None
    ref = rc.require_ref()
    reports = [
        clark_igf(rc.model, h, alpha, rc.grid, mode),
        clark_igf_f_substituted(rc.model, ref, h, alpha, rc.grid, mode),
        laplace_functional(rc.model, f, alpha, rc.grid, mode),
        cumulant_functional(rc.model, f, alpha, rc.grid, mode),
        shannon_entropy_audit(rc.model, rc.grid, mode),
        entropy_moments_audit(rc.model, m, rc.grid, mode),
    ]
    return {"alpha": format_unit(alpha), "mode": mode.describe(), "reports": [r.to_dict() for r in reports]}


def cmd_pgfl_check(rc: RunConfig) -> dict:
    blk = _block(rc.raw, "pgfl_check")
    d = rc.space.dimension
    lo, hi = np.asarray(rc.space.lower), np.asarray(rc.space.upper)
    span = hi - lo
    default_regions = [
        [[float(a), float(b)] for a, b in zip(lo + 0.1 * span, lo + 0.25 * span)],
        [[float(a), float(b)] for a, b in zip(lo + 0.6 * span, lo + 0.7 * span)],
    ]
    default_points = [list(map(float, lo + 0.33 * span)), list(map(float, lo + 0.671 * span))]
    raw_regions = _get(blk, "regions", "pgfl_check", list, default_regions)
    raw_points = _get(blk, "points", "pgfl_check", list, default_points)
    try:
        regions = [Region.box(*[tuple(iv) for iv in r]) for r in raw_regions]
        points = PointPattern(tuple(tuple(p) for p in raw_points))
        for r in regions:
            r.check_inside(rc.space)
        points.validate(rc.space)
    except (TypeError, ValueError) as err:
        raise ConfigError("pgfl_check", str(err)) from None
    if len(regions) != 2 or len(points) != 2 or len(regions[0].axes) != d:
        raise ConfigError("pgfl_check", "expected two regions and two points")

    model, grid = rc.model, rc.grid
    comparisons = []

    def compare(name, got: Quantity, want: Quantity):
        comparisons.append(
            {
                "name": name,
                "numeric": got.value,
                "exact": want.value,
                "unit_exponent": format_unit(got.unit),
                "abs_error": abs(got.value - want.value),
                "rel_error": _rel_err(got.value, want.value),
            }
        )

    compare("G(1)", Quantity(pgfl_eval(model, 1.0, grid)), Quantity(1.0))
    d2 = nth_differential(model, 0.0, [Indicator(r) for r in regions], grid)
    moyal = prob_measure(model, PatternSet.product(rc.space, *regions), grid)
    compare("P2(B1xB2)", Quantity(d2.value / 2), Quantity(moyal))
    one = PointPattern((points.points[0],))
    compare("p1(x1)", janossy_from_pgfl(model, one, grid), model.janossy(one))
    compare("p2(x1,x2)", janossy_from_pgfl(model, points, grid), model.janossy(points))
    rels = [c["rel_error"] for c in comparisons if c["rel_error"] is not None]
    return {
        "comparisons": comparisons,
        "max_relative_error": max(rels) if rels else None,
        "max_abs_error_zero_reference": max(
            (c["abs_error"] for c in comparisons if c["rel_error"] is None), default=None
        ),
    }


def cmd_sample(rc: RunConfig) -> dict:
    blk = _block(rc.raw, "sample")
    count = _get(blk, "count", "sample", int, 1, check=lambda v: None if v >= 1 else "must be >= 1")
    patterns = sample_many(rc.model, count, rc.seed)
    return {
        "seed": rc.seed,
        "samples": [_points(p, rc.space) for p in patterns],
    }


COMMANDS = {
    "entropy": cmd_entropy,
    "kl": cmd_kl,
    "map": cmd_map,
    "c-sweep": cmd_c_sweep,
    "audit": cmd_audit,
    "pgfl-check": cmd_pgfl_check,
    "sample": cmd_sample,
}


def render(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ppinfo-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppinfo", description="Unit-checked information functionals for finite point processes."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="write JSON here instead of standard output")
    parser.add_argument("--seed", type=int, help="overrides mc.seed from the config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args.config, args.seed)
        doc = COMMANDS[args.command](rc)
        doc = {"command": args.command, **doc}
        text = render(doc)
    except ConfigError as err:
        print(f"ppinfo: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as err:
        print(f"ppinfo: numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
