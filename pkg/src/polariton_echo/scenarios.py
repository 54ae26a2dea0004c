"""Named scenarios that regenerate the storage-time, OD and wait-time curves.

Every scenario is a pure function of (config, options); CSV outputs are
byte-identical across reruns and thread counts. Grid points whose pulse
sequence does not fit inside the storage time are written as NaN.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from polariton_echo import __version__
from polariton_echo.efficiency import (
    EfficiencyCurve,
    EfficiencyPoint,
    Mode,
    ODModel,
    SequenceDoesNotFit,
    analytic_free_decay,
    analytic_protocol,
    apply_od_loss,
    check_bounds,
    mc_efficiency,
    od,
    od_correction,
)
from polariton_echo.fitting import Dataset, FitModel, fit
from polariton_echo.phase import DerivedGeometry, derive_geometry, optimal_wait
from polariton_echo.quantities import FILE_SCHEMA, ConfigError, ExperimentConfig, config_to_mapping, load_config, to_si

SCENARIOS = ("fig1b", "fig3a", "fig3b", "fig4", "fit", "sweep")
THREADS_ENV = "POLARITON_ECHO_THREADS"

DEFAULT_STORAGE_POINTS = 41
DEFAULT_WAIT_POINTS = 61
STORAGE_RANGE = (0.0, 20e-6)
NAN = float("nan")


@dataclass
class RunOptions:
    seed: int | None = None
    decay: bool = True
    ideal_pulses: bool = False
    points: int | None = None
    tmin: float | None = None  # s
    tmax: float | None = None  # s
    od_map: str = "saturating"
    weighted: bool = False
    model: str = "M1"
    threads: int | None = None
    param: str | None = None
    mc: bool = True


@dataclass
class RunManifest:
    scenario: str
    seed: int | None
    config: dict
    geometry: dict
    outputs: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tool_version: str = __version__
    wall_clock_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, allow_nan=True) + "\n"


def normalize(curve: EfficiencyCurve, reference_point_index: int = 0) -> EfficiencyCurve:
    """Divide efficiencies and standard errors by the efficiency of one reference point."""
    ref = curve.points[reference_point_index].efficiency
    if not ref > 0:
        raise ValueError(f"reference efficiency must be positive (got {ref!r})")
    points = tuple(EfficiencyPoint(p.control_value, p.efficiency / ref, p.std_error / ref) for p in curve.points)
    return EfficiencyCurve(points, {**curve.metadata, "normalized_to": reference_point_index})


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items, threads: int) -> list:
    """Ordered map; results do not depend on scheduling."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _geometry_dict(g: DerivedGeometry) -> dict:
    return {
        "k": g.k,
        "k_r": g.k_r,
        "omega_r": g.omega_r,
        "t_pi": g.t_pi,
        "sigma_v": g.sigma_v,
        "motional_time": g.motional_time,
        "wait_width": g.wait_width,
    }


def _digits17(obj):
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _digits17(v) for k, v in obj.items()}
    return obj


def _protocol_analytic(t_s: float, t_w: float, g: DerivedGeometry, config: ExperimentConfig, opts: RunOptions) -> float:
    try:
        return analytic_protocol(
            t_s,
            t_w,
            g,
            config.tau_r1 if opts.decay else None,
            config.tau_r2 if opts.decay else None,
            ideal_pulses=opts.ideal_pulses,
        )
    except SequenceDoesNotFit:
        return NAN


def _protocol_mc(config: ExperimentConfig, g: DerivedGeometry, opts: RunOptions, stream: int) -> tuple[float, float]:
    try:
        p = mc_efficiency(config, Mode.PROTOCOL, stream=stream, ideal_pulses=opts.ideal_pulses, decay=opts.decay, geometry=g)
    except SequenceDoesNotFit:
        return NAN, NAN
    return p.efficiency, p.std_error


def _free_mc(config: ExperimentConfig, g: DerivedGeometry, opts: RunOptions, stream: int) -> tuple[float, float]:
    p = mc_efficiency(config, Mode.FREE, stream=stream, decay=opts.decay, geometry=g)
    return p.efficiency, p.std_error


def storage_grid(opts: RunOptions) -> np.ndarray:
    lo = STORAGE_RANGE[0] if opts.tmin is None else opts.tmin
    hi = STORAGE_RANGE[1] if opts.tmax is None else opts.tmax
    return np.linspace(lo, hi, opts.points or DEFAULT_STORAGE_POINTS)


def wait_grid(t_s: float, g: DerivedGeometry, opts: RunOptions) -> np.ndarray:
    t_opt = float(optimal_wait(t_s, g))
    lo = max(0.0, t_opt - 3 * g.wait_width) if opts.tmin is None else opts.tmin
    hi = t_opt + 3 * g.wait_width if opts.tmax is None else opts.tmax
    return np.linspace(lo, hi, opts.points or DEFAULT_WAIT_POINTS)


def _curve(control, values, errors=None, **meta) -> EfficiencyCurve:
    control = np.asarray(control, dtype=float)
    values = np.asarray(values, dtype=float)
    errors = np.zeros_like(values) if errors is None else np.where(np.isnan(values), NAN, errors)
    points = tuple(EfficiencyPoint(float(c), float(v), float(e) if not math.isnan(e) else NAN) for c, v, e in zip(control, values, errors))
    return EfficiencyCurve(points, meta)


def _fit_finite(control, values, model: FitModel, opts: RunOptions, sigma=None):
    control = np.asarray(control)
    values = np.asarray(values)
    keep = ~np.isnan(values)
    if keep.sum() < len(model.param_names()) + 1:
        return None
    ds = Dataset(control[keep], values[keep], None if sigma is None else np.asarray(sigma)[keep])
    return fit(ds, model, weighted=opts.weighted)


def scenario_fig1b(config, g, opts) -> tuple[dict[str, EfficiencyCurve], dict]:
    t_s = storage_grid(opts)
    tau1 = config.tau_r1 if opts.decay else None

    def point(i):
        ts = float(t_s[i])
        t_w = float(optimal_wait(ts, g))
        row = {"free": float(analytic_free_decay(ts, g, tau1)), "protocol": _protocol_analytic(ts, t_w, g, config, opts)}
        if opts.mc:
            cfg = dataclasses.replace(config, t_s=ts, t_w=None)
            row["free_mc"] = _free_mc(cfg, g, opts, i)
            row["protocol_mc"] = _protocol_mc(cfg, g, opts, i) if t_w >= 0 else (NAN, NAN)
        return row

    rows = parallel_map(point, range(len(t_s)), thread_count(opts.threads))
    curves = {
        "free_analytic": _curve(t_s, [r["free"] for r in rows]),
        "protocol_analytic": _curve(t_s, [r["protocol"] for r in rows]),
    }
    if opts.mc:
        curves["free_mc"] = _curve(t_s, [r["free_mc"][0] for r in rows], [r["free_mc"][1] for r in rows])
        curves["protocol_mc"] = _curve(t_s, [r["protocol_mc"][0] for r in rows], [r["protocol_mc"][1] for r in rows])
    summary = {"motional_time_s": g.motional_time}
    free_fit = _fit_finite(t_s, [r["free"] for r in rows], FitModel.M1, opts)
    if free_fit is not None:
        summary["free_fit_M1"] = free_fit.to_dict()
    return curves, summary


def scenario_fig3a(config, g, opts) -> tuple[dict[str, EfficiencyCurve], dict]:
    t_s = storage_grid(opts)
    model = ODModel.from_config(config, opts.od_map)
    tau1 = config.tau_r1 if opts.decay else None
    clean, raw, corrected, free_raw = [], [], [], []
    for ts in t_s:
        ts = float(ts)
        eta = _protocol_analytic(ts, float(optimal_wait(ts, g)), g, config, opts)
        lossy = apply_od_loss(EfficiencyPoint(ts, eta), model)
        clean.append(eta)
        raw.append(lossy.efficiency)
        corrected.append(od_correction(lossy, model).efficiency)
        free_raw.append(apply_od_loss(EfficiencyPoint(ts, float(analytic_free_decay(ts, g, tau1))), model).efficiency)
    curves = {
        "protocol_raw": _curve(t_s, raw),
        "protocol_corrected": _curve(t_s, corrected),
        "free_raw": _curve(t_s, free_raw),
    }
    summary = {}
    for name, values, m in (
        ("free_raw_fit_M1", free_raw, FitModel.M1),
        ("protocol_raw_fit_M2", raw, FitModel.M2),
        ("protocol_corrected_fit_M2", corrected, FitModel.M2),
    ):
        result = _fit_finite(t_s, values, m, opts)
        if result is not None:
            summary[name] = result.to_dict()
    return curves, summary


def scenario_fig3b(config, g, opts) -> tuple[dict, dict]:
    t_s = storage_grid(opts)
    model = ODModel.from_config(config, opts.od_map)
    depth = od(t_s, model)
    result = fit(Dataset(t_s, depth), FitModel.M3)
    return {"od": (t_s, depth)}, {"od_fit_M3": result.to_dict()}


def scenario_fig4(config, g, opts) -> tuple[dict[str, EfficiencyCurve], dict]:
    t_s = config.t_s
    t_opt = float(optimal_wait(t_s, g))
    t_w = wait_grid(t_s, g, opts)
    free = float(analytic_free_decay(t_s, g, config.tau_r1 if opts.decay else None))

    def point(i):
        tw = float(t_w[i])
        row = {"protocol": _protocol_analytic(t_s, tw, g, config, opts)}
        if opts.mc:
            cfg = dataclasses.replace(config, t_w=tw)
            row["protocol_mc"] = _protocol_mc(cfg, g, opts, i)
        return row

    rows = parallel_map(point, range(len(t_w)), thread_count(opts.threads))
    curves = {
        "protocol_analytic": _curve(t_w, [r["protocol"] for r in rows]),
        "free_reference": _curve(t_w, [free] * len(t_w)),
    }
    analytic = np.array([r["protocol"] for r in rows])
    summary = {
        "t_s": t_s,
        "t_opt": t_opt,
        "grid_step": float(t_w[1] - t_w[0]) if len(t_w) > 1 else 0.0,
        "argmax_analytic": float(t_w[np.nanargmax(analytic)]),
    }
    if opts.mc:
        mc = np.array([r["protocol_mc"][0] for r in rows])
        curves["protocol_mc"] = _curve(t_w, mc, [r["protocol_mc"][1] for r in rows])
        summary["argmax_mc"] = float(t_w[np.nanargmax(mc)])
    return curves, summary


def _file_field(key: str) -> tuple[str, str | None]:
    for schema in FILE_SCHEMA.values():
        if key in schema:
            return schema[key]
    raise ConfigError([f"unknown sweep parameter {key!r}"])


def scenario_sweep(config, g, opts) -> tuple[dict, dict]:
    """Scan one config-file key over [tmin, tmax] (in that key's file units) at t_w = t_opt."""
    if opts.param is None or opts.tmin is None or opts.tmax is None:
        raise ConfigError(["sweep needs --param, --tmin and --tmax"])
    name, unit = _file_field(opts.param)
    values = np.linspace(opts.tmin, opts.tmax, opts.points or DEFAULT_STORAGE_POINTS)

    def point(i):
        value = float(values[i])
        raw = int(round(value)) if unit is None and name != "od0" else to_si(unit, value)
        cfg = dataclasses.replace(config, **{name: raw})
        geo = derive_geometry(cfg)
        t_w = float(optimal_wait(cfg.t_s, geo)) if cfg.t_w is None else cfg.t_w
        row = {
            "free": float(analytic_free_decay(cfg.t_s, geo, cfg.tau_r1 if opts.decay else None)),
            "protocol": _protocol_analytic(cfg.t_s, t_w, geo, cfg, opts),
        }
        if opts.mc:
            row["protocol_mc"] = _protocol_mc(cfg, geo, opts, i)
        return row

    rows = parallel_map(point, range(len(values)), thread_count(opts.threads))
    table = {
        "free_analytic": ([r["free"] for r in rows], None),
        "protocol_analytic": ([r["protocol"] for r in rows], None),
    }
    if opts.mc:
        table["protocol_mc"] = ([r["protocol_mc"][0] for r in rows], [r["protocol_mc"][1] for r in rows])
    return {"sweep": (opts.param, values, table)}, {"param": opts.param}


def _write(path: Path, text: str) -> dict:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return {"file": path.name, "sha256": hashlib.sha256(text.encode()).hexdigest()}


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def run(scenario: str, config_path: str | Path, out_dir: str | Path, options: RunOptions | None = None) -> RunManifest:
    """Run one scenario and write its CSV curves plus ``manifest.json`` into ``out_dir``.

    For the ``fit`` scenario ``config_path`` is the dataset CSV instead.
    """
    opts = options or RunOptions()
    if scenario not in SCENARIOS:
        raise ConfigError([f"unknown scenario {scenario!r}"])
    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if scenario == "fit":
        dataset = Dataset.from_csv(config_path)
        result = fit(dataset, FitModel(opts.model), weighted=opts.weighted)
        manifest = RunManifest("fit", None, {"dataset": str(Path(config_path).name)}, {})
        manifest.outputs.append(_write(out / "fit.json", result.to_json() + "\n"))
        manifest.outputs.append(_write(out / "fit.txt", result.to_text()))
        manifest.summary = result.to_dict()
        manifest.wall_clock_s = time.perf_counter() - start
        _write(out / "manifest.json", manifest.to_json())
        return manifest

    config = load_config(config_path)
    if opts.seed is not None:
        config = dataclasses.replace(config, seed=opts.seed)
    g = derive_geometry(config)

    runner = {
        "fig1b": scenario_fig1b,
        "fig3a": scenario_fig3a,
        "fig3b": scenario_fig3b,
        "fig4": scenario_fig4,
        "sweep": scenario_sweep,
    }[scenario]
    curves, summary = runner(config, g, opts)

    manifest = RunManifest(
        scenario=scenario,
        seed=config.seed,
        config=_digits17(config_to_mapping(config)),
        geometry=_digits17(_geometry_dict(g)),
        summary=_digits17(summary),
    )
    for name, curve in curves.items():
        if isinstance(curve, EfficiencyCurve):
            if not check_bounds(curve.efficiency):
                raise RuntimeError(f"curve {name} has efficiencies outside [0, 1]")
            text = curve.to_csv()
        elif scenario == "fig3b":
            t, depth = curve
            text = "t_us,od\n" + "".join(f"{_fmt(a * 1e6)},{_fmt(b)}\n" for a, b in zip(t, depth))
        else:
            param, values, table = curve
            parts = []
            for label, (eff, err) in table.items():
                if not check_bounds(eff):
                    raise RuntimeError(f"sweep curve {label} has efficiencies outside [0, 1]")
                errs = [0.0] * len(eff) if err is None else err
                body = "".join(f"{_fmt(v)},{_fmt(e)},{_fmt(s)}\n" for v, e, s in zip(values, eff, errs))
                manifest.outputs.append(_write(out / f"{scenario}_{label}.csv", f"{param},efficiency,std_error\n" + body))
            continue
        manifest.outputs.append(_write(out / f"{scenario}_{name}.csv", text))
    manifest.wall_clock_s = time.perf_counter() - start
    _write(out / "manifest.json", manifest.to_json())
    return manifest
