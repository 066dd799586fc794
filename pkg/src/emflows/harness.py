"""Experiment harness: JSON configs in, CSV/JSON/SVG artifacts out.

A config file (``schema: 1``) has four blocks::

    model      family + parameters + optional wrapper chain
    algorithm  scheme, iterations, step size, representation, seed, init
    checks     inequality checks to run (lambda defaults to the certified one)
    bounds     bound curves to evaluate against the trace
    output     directory and formats (csv, json, svg)

Float serialization uses 17 significant digits, which round-trips IEEE
doubles exactly.  The wall-clock column is serialized as zero so that a
fixed config and seed produce byte-identical files; timings stay
available on the in-memory records.
"""

from __future__ import annotations

import json
import logging
import math
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import bounds as bounds_mod
from . import inequalities as ineq_mod
from .algorithms import AlgorithmConfig, IterateRecord, Trace, run
from .errors import ConfigError, EmflowsError, InvalidParameterError
from .laws import GaussianLaw
from .models import (
    HierarchicalModelConfig,
    ModelSpec,
    make_conjugate_1d,
    make_hierarchical,
    perturbed_model,
    pushforward_model,
)

log = logging.getLogger("emflows")

CHECK_NAMES = ("xlsi", "xt2i", "descent", "monotonicity")
BOUND_NAMES = ("em_basic", "em_sharp", "first_order", "langevin", "agd")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

def _need(block: dict, field: str, path: str):
    if field not in block:
        raise ConfigError(f"{path}.{field}", "missing")
    return block[field]


def _number(block: dict, field: str, path: str) -> float:
    v = _need(block, field, path)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{path}.{field}", f"expected a number, got {v!r}")
    return float(v)


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if cfg.get("schema") != 1:
        raise ConfigError("schema", f"expected 1, got {cfg.get('schema')!r}")
    _need(cfg, "model", "<root>")
    _need(cfg, "algorithm", "<root>")
    return cfg


def build_model(block: dict) -> ModelSpec:
    family = _need(block, "family", "model")
    if family == "conjugate_1d":
        model = make_conjugate_1d(
            _number(block, "y", "model"),
            _number(block, "prior_var", "model"),
            _number(block, "obs_var", "model"),
        )
    elif family == "hierarchical":
        cfg = HierarchicalModelConfig(
            m=int(_number(block, "m", "model")),
            c_blocks=[np.asarray(c, dtype=np.float64)
                      for c in _need(block, "c_blocks", "model")],
            loading=np.asarray(_need(block, "loading", "model"), dtype=np.float64),
            sigma_u=np.asarray(_need(block, "sigma_u", "model"), dtype=np.float64),
            sigma_v=np.asarray(_need(block, "sigma_v", "model"), dtype=np.float64),
            y=np.asarray(_need(block, "y", "model"), dtype=np.float64),
        )
        model = make_hierarchical(cfg)
    else:
        raise ConfigError("model.family", f"unknown family {family!r}")

    for i, wrapper in enumerate(block.get("wrappers", [])):
        kind = _need(wrapper, "kind", f"model.wrappers[{i}]")
        if kind == "pushforward":
            model = pushforward_model(
                model,
                np.asarray(_need(wrapper, "scale", f"model.wrappers[{i}]"),
                           dtype=np.float64),
                np.asarray(_need(wrapper, "shift", f"model.wrappers[{i}]"),
                           dtype=np.float64),
            )
        elif kind == "perturbation":
            weight = _need(wrapper, "weight", f"model.wrappers[{i}]")
            if weight != "cosine":
                raise ConfigError(
                    f"model.wrappers[{i}].weight", f"unknown weight {weight!r}"
                )
            amp = _number(wrapper, "amplitude", f"model.wrappers[{i}]")
            if amp <= 0:
                raise ConfigError(
                    f"model.wrappers[{i}].amplitude", "must be positive"
                )
            model = perturbed_model(
                model,
                log_weight=lambda xs, a=amp: a * np.cos(xs),
                bound=float(np.exp(amp)),
                grad_log_weight=lambda xs, a=amp: -a * np.sin(xs),
                weight_hessian_bound=amp,
            )
        else:
            raise ConfigError(f"model.wrappers[{i}].kind", f"unknown kind {kind!r}")
    return model


def build_algorithm(block: dict, model: ModelSpec,
                    seed_override: Optional[int] = None) -> AlgorithmConfig:
    scheme = _need(block, "scheme", "algorithm")
    init_theta = np.asarray(_need(block, "init_theta", "algorithm"),
                            dtype=np.float64)
    init_law_spec = block.get("init_law", "posterior_at_init")
    if init_law_spec == "posterior_at_init":
        init_law = None
    elif isinstance(init_law_spec, dict):
        init_law = GaussianLaw(
            np.asarray(_need(init_law_spec, "mean", "algorithm.init_law"),
                       dtype=np.float64),
            np.asarray(_need(init_law_spec, "cov", "algorithm.init_law"),
                       dtype=np.float64),
        )
    else:
        raise ConfigError("algorithm.init_law",
                          "expected 'posterior_at_init' or {mean, cov}")
    seed = int(block.get("seed", 0)) if seed_override is None else int(seed_override)
    try:
        return AlgorithmConfig(
            scheme=scheme,
            iterations=int(_number(block, "iterations", "algorithm")),
            step_h=float(block.get("step_h", 0.0)),
            representation=block.get("representation", "exact_gaussian"),
            particle_count=int(block.get("particle_count", 0)),
            seed=seed,
            init_theta=init_theta,
            init_law=init_law,
        )
    except InvalidParameterError as exc:
        raise ConfigError("algorithm", str(exc)) from exc


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def trace_csv_header(d_theta: int, d_x: int) -> str:
    cols = ["k"]
    cols += [f"theta_{i}" for i in range(d_theta)]
    cols += [f"law_mean_{i}" for i in range(d_x)]
    cols += [f"law_cov_flat_{i}" for i in range(d_x * d_x)]
    cols += ["gap", "fisher", "dist", "wall_nanos"]
    return ",".join(cols)


def write_trace_csv(trace: Trace, path: str) -> None:
    d_theta = trace.records[0].theta.shape[0]
    d_x = trace.records[0].law_mean.shape[0]
    lines = [trace_csv_header(d_theta, d_x)]
    for r in trace.records:
        row = [str(r.k)]
        row += [_fmt(v) for v in r.theta]
        row += [_fmt(v) for v in r.law_mean]
        row += [_fmt(v) for v in r.law_cov.ravel()]
        row += [_fmt(r.gap), _fmt(r.fisher), _fmt(r.dist), "0"]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path: str) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    d_theta = sum(c.startswith("theta_") for c in header)
    d_x = sum(c.startswith("law_mean_") for c in header)
    records = []
    for ln in lines[1:]:
        cells = ln.split(",")
        i = 0
        k = int(cells[i]); i += 1
        theta = np.array([float(c) for c in cells[i:i + d_theta]]); i += d_theta
        mean = np.array([float(c) for c in cells[i:i + d_x]]); i += d_x
        cov = np.array(
            [float(c) for c in cells[i:i + d_x * d_x]]
        ).reshape(d_x, d_x); i += d_x * d_x
        gap, fisher, dist = (float(cells[i]), float(cells[i + 1]),
                             float(cells[i + 2]))
        wall = int(cells[i + 3])
        records.append(IterateRecord(k, theta, mean, cov, gap, fisher, dist, wall))
    return Trace(
        scheme="parsed", model_label="parsed", records=records,
        exact=True, proxy=False,
    )


def write_bounds_csv(curves: Dict[str, bounds_mod.BoundCurve], path: str) -> None:
    names = list(curves)
    k_max = max(len(c.values) for c in curves.values())
    lines = [",".join(["k"] + names)]
    for k in range(k_max):
        row = [str(k)]
        for name in names:
            vals = curves[name].values
            row.append(_fmt(vals[k]) if k < len(vals) else "")
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_checks_json(reports: List[ineq_mod.InequalityReport], path: str) -> None:
    payload = {
        "checks": [r.to_dict() for r in reports],
        "all_ok": all(r.ok for r in reports),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# SVG overlay (no plotting dependency; figures are outputs, not interfaces)
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_log_svg(series: Dict[str, Sequence[float]], path: str,
                   title: str, ylabel: str = "value") -> None:
    """Log-scale polyline plot of one or more positive sequences over k."""
    width, height = 760, 500
    ml, mr, mt, mb = 70, 20, 40, 50
    finite = [
        (name, [(k, v) for k, v in enumerate(vals)
                if v is not None and np.isfinite(v) and v > 0])
        for name, vals in series.items()
    ]
    finite = [(n, pts) for n, pts in finite if pts]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    if finite:
        xmax = max(max(k for k, _ in pts) for _, pts in finite)
        xmax = max(xmax, 1)
        ys = [math.log10(v) for _, pts in finite for _, v in pts]
        ylo, yhi = min(ys), max(ys)
        if yhi - ylo < 1e-9:
            ylo, yhi = ylo - 1.0, yhi + 1.0

        def sx(k):
            return ml + (width - ml - mr) * k / xmax

        def sy(v):
            return height - mb - (height - mt - mb) * (
                (math.log10(v) - ylo) / (yhi - ylo)
            )

        for t in range(int(math.floor(ylo)), int(math.ceil(yhi)) + 1):
            if ylo <= t <= yhi:
                y = sy(10.0 ** t)
                parts.append(
                    f'<line x1="{ml}" y1="{y:.2f}" x2="{width - mr}" y2="{y:.2f}" '
                    f'stroke="#dddddd"/>'
                )
                parts.append(
                    f'<text x="{ml - 8}" y="{y + 4:.2f}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="11">1e{t}</text>'
                )
        parts.append(
            f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
            f'y2="{height - mb}" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>'
        )
        for i, (name, pts) in enumerate(finite):
            color = _PALETTE[i % len(_PALETTE)]
            coords = " ".join(f"{sx(k):.2f},{sy(v):.2f}" for k, v in pts)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
            parts.append(
                f'<text x="{width - mr - 6}" y="{mt + 16 * (i + 1)}" '
                f'text-anchor="end" font-family="sans-serif" font-size="12" '
                f'fill="{color}">{name}</text>'
            )
        parts.append(
            f'<text x="{(ml + width - mr) / 2}" y="{height - 14}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">k</text>'
        )
        parts.append(
            f'<text x="18" y="{(mt + height - mb) / 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 18 {(mt + height - mb) / 2})">{ylabel}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Checks and bounds wiring
# ---------------------------------------------------------------------------

def _resolve_lambda(model: ModelSpec, item: dict):
    if "lambda" in item:
        return float(item["lambda"])
    lam, _ = ineq_mod.certified_lambda(model)
    return lam


def run_checks(model: ModelSpec, trace: Trace,
               items: List[dict]) -> List[ineq_mod.InequalityReport]:
    reports = []
    for i, item in enumerate(items):
        name = _need(item, "name", f"checks[{i}]")
        tol = float(item.get("tolerance", ineq_mod.DEFAULT_TOL))
        if name == "xlsi":
            reports.append(
                ineq_mod.check_xlsi(model, trace, _resolve_lambda(model, item), tol)
            )
        elif name == "xt2i":
            reports.append(
                ineq_mod.check_xt2i(model, trace, _resolve_lambda(model, item), tol)
            )
        elif name == "descent":
            reports.append(ineq_mod.check_descent(model, trace, tol))
        elif name == "monotonicity":
            reports.append(ineq_mod.check_monotonicity(model, trace, tol))
        else:
            raise ConfigError(f"checks[{i}].name", f"unknown check {name!r}")
    return reports


def build_bounds(model: ModelSpec, trace: Trace,
                 items: List[dict]) -> Dict[str, bounds_mod.BoundCurve]:
    curves: Dict[str, bounds_mod.BoundCurve] = {}
    if not items:
        return curves
    lam, _ = ineq_mod.certified_lambda(model)
    gap0 = float(trace.gaps[0])
    k_max = len(trace.records) - 1
    for i, item in enumerate(items):
        name = _need(item, "name", f"bounds[{i}]")
        h = float(item.get("h", trace.config.get("step_h", 0.0)))
        if name == "em_basic":
            curve = bounds_mod.em_bound_basic(lam, model.lipschitz_theta, gap0, k_max)
        elif name == "em_sharp":
            c_const = bounds_mod.constant_C(model, lam, gap0)
            curve = bounds_mod.em_bound_sharp(
                lam, model.lipschitz_theta, model.lipschitz_x,
                model.d_x, c_const, gap0, k_max,
            )
        elif name == "first_order":
            curve = bounds_mod.first_order_bound(
                lam, h, gap0, k_max, model.lipschitz_theta
            )
        elif name == "langevin":
            c_const = bounds_mod.constant_C(model, lam, gap0)
            curve = bounds_mod.langevin_em_bound(
                lam, model.lipschitz_theta, model.lipschitz_x,
                model.d_x, c_const, h, gap0, k_max,
            )
        elif name == "agd":
            curve = bounds_mod.agd_bound(lam, model.lipschitz, model.d_x,
                                         h, gap0, k_max)
        else:
            raise ConfigError(f"bounds[{i}].name", f"unknown bound {name!r}")
        key = name if name not in curves else f"{name}_{i}"
        curves[key] = curve
    return curves


# ---------------------------------------------------------------------------
# CLI operations
# ---------------------------------------------------------------------------

def _out_dir(cfg: dict, override: Optional[str]) -> str:
    if override:
        d = override
    else:
        d = cfg.get("output", {}).get("directory", ".")
    os.makedirs(d, exist_ok=True)
    return d


def fit_contraction_factor(gaps: np.ndarray) -> float:
    """Per-step geometric factor fitted to the decaying prefix of a gap
    sequence (least squares on log gap vs k)."""
    gaps = np.asarray(gaps, dtype=np.float64)
    floor = max(1e-15, float(gaps[0]) * 1e-12)
    mask = gaps > floor
    cut = int(np.argmin(mask)) if not mask.all() else len(gaps)
    usable = gaps[:max(cut, 2)]
    if len(usable) < 2 or usable[0] <= 0:
        return float("nan")
    k = np.arange(len(usable))
    slope = np.polyfit(k, np.log(usable), 1)[0]
    return float(np.exp(slope))


def cli_run(config_path: str, out: Optional[str] = None,
            seed: Optional[int] = None, no_svg: bool = False) -> int:
    """Run one experiment; exit 0 on success, 2 on a check violation,
    1 on any error."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg["model"])
        alg = build_algorithm(cfg["algorithm"], model, seed)
        trace = run(model, alg)
        reports = run_checks(model, trace, cfg.get("checks", []))
        curves = build_bounds(model, trace, cfg.get("bounds", []))
    except EmflowsError as exc:
        log.error("%s", exc)
        print(f"error: {exc}")
        return 1
    try:
        out_dir = _out_dir(cfg, out)
        formats = cfg.get("output", {}).get("formats", ["csv", "json", "svg"])
        if "csv" in formats:
            write_trace_csv(trace, os.path.join(out_dir, "trace.csv"))
            if curves:
                write_bounds_csv(curves, os.path.join(out_dir, "bounds.csv"))
        if "json" in formats:
            write_checks_json(reports, os.path.join(out_dir, "checks.json"))
        if "svg" in formats and not no_svg:
            series: Dict[str, Sequence[float]] = {"gap": trace.gaps.tolist()}
            for name, curve in curves.items():
                series[name] = curve.values.tolist()
            render_log_svg(series, os.path.join(out_dir, "overlay.svg"),
                           title=f"{trace.scheme} on {model.label}",
                           ylabel="free-energy gap / bound")
    except OSError as exc:
        log.error("%s", exc)
        print(f"error: cannot write outputs: {exc}")
        return 1
    for r in reports:
        state = "ok" if r.ok else f"VIOLATED at k={r.violated_at}"
        print(f"check {r.name}: min margin {r.min_margin:.3e} ({state})")
    if any(not r.ok for r in reports):
        return 2
    return 0


def cli_compare(config_paths: Sequence[str], out: Optional[str] = None,
                seed: Optional[int] = None, no_svg: bool = False) -> int:
    """Run several configs sharing a model block; write aligned gap columns."""
    try:
        if len(config_paths) < 2:
            raise InvalidParameterError("compare needs at least two configs")
        cfgs = [load_config(p) for p in config_paths]
        ref = json.dumps(cfgs[0]["model"], sort_keys=True)
        for p, c in zip(config_paths[1:], cfgs[1:]):
            if json.dumps(c["model"], sort_keys=True) != ref:
                raise InvalidParameterError(
                    f"model block of {p} differs from {config_paths[0]}"
                )
        model = build_model(cfgs[0]["model"])
        traces = []
        for c in cfgs:
            alg = build_algorithm(c["algorithm"], model, seed)
            traces.append(run(model, alg))
    except EmflowsError as exc:
        log.error("%s", exc)
        print(f"error: {exc}")
        return 1
    try:
        out_dir = _out_dir(cfgs[0], out)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}")
        return 1
    names = []
    for t in traces:
        base = t.scheme
        name = base
        i = 2
        while name in names:
            name = f"{base}_{i}"
            i += 1
        names.append(name)
    k_max = max(len(t.records) for t in traces)
    lines = [",".join(["k"] + [f"gap_{n}" for n in names])]
    for k in range(k_max):
        row = [str(k)]
        for t in traces:
            row.append(_fmt(t.records[k].gap) if k < len(t.records) else "")
        lines.append(",".join(row))
    with open(os.path.join(out_dir, "compare.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if not no_svg:
        render_log_svg(
            {n: t.gaps.tolist() for n, t in zip(names, traces)},
            os.path.join(out_dir, "compare.svg"),
            title=f"scheme comparison on {model.label}",
            ylabel="free-energy gap",
        )
    for n, t in zip(names, traces):
        factor = fit_contraction_factor(t.gaps)
        print(f"{n}: per-step contraction factor ~ {factor:.6g}")
    return 0


def cli_certify(config_path: str) -> int:
    """Print the certified constant with its derivation chain and the
    model's smoothness/bias constants."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg["model"])
        lam, trail = ineq_mod.certified_lambda(model)
    except EmflowsError as exc:
        log.error("%s", exc)
        print(f"error: {exc}")
        return 1
    print(f"model: {model.label}")
    print(f"certified lambda = {lam:.12g}")
    for step in trail:
        print(f"  {step}")
    print(f"L_theta = {model.lipschitz_theta:.12g}")
    print(f"L_x     = {model.lipschitz_x:.12g}")
    print(f"L       = {model.lipschitz:.12g}")
    try:
        alg = build_algorithm(cfg["algorithm"], model, None)
        alg0 = AlgorithmConfig(
            scheme="em", iterations=0, init_theta=alg.init_theta,
            init_law=alg.init_law, seed=alg.seed,
        )
        gap0 = float(run(model, alg0).gaps[0])
        c_const = bounds_mod.constant_C(model, lam, gap0)
        b_const = 8.0 * model.lipschitz_x ** 2 * model.d_x \
            + c_const * model.lipschitz_x / 2.0
        print(f"gap0 = {gap0:.12g}")
        print(f"C = {c_const:.12g}")
        print(f"B = {b_const:.12g}")
    except EmflowsError:
        print("C, B: unavailable for this model/start")
    return 0
