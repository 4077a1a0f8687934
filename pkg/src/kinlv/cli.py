"""Command-line front end: ``kinlv <means|cv|mc|fp|figures|sweep>``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .figures import FigureSpec, figure_checks, figure_data, figure_panels
from .fp import FpConfig, MassDrift, NonPositiveDensity, run_fp
from .integrate import StepUnderflow
from .mc import HIST_HEADER, McConfig, ResampleExhausted, run_mc
from .ode import OdeSolverConfig, integrate_cv, integrate_means
from .outputs import (
    Manifest,
    atomic_write,
    columns_text,
    csv_text,
    sha256_bytes,
    svg_figure,
    write_json,
)
from .params import Config, ConfigError, Risk, ValidationError, load_config

log = logging.getLogger("kinlv")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

MOMENT_COLUMNS = ("t", "m_f", "m_g", "v_f", "v_g", "c_f", "c_g")
MC_COLUMNS = MOMENT_COLUMNS + ("gini_f", "gini_g", "skipped_events")
FP_COLUMNS = MOMENT_COLUMNS + ("mass_f", "mass_g")
SWEEP_EPSILONS = (0.1, 0.05, 0.01)


def max_workers(default: int | None = None) -> int:
    """Worker cap from ``KINLV_THREADS`` (at least 1)."""
    raw = os.environ.get("KINLV_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer KINLV_THREADS=%r", raw)
    return default or min(4, os.cpu_count() or 1)


def _apply_overrides(cfg: Config, args: argparse.Namespace) -> Config:
    run = cfg.run
    changes = {}
    for attr, key in (("t_end", "t_end"), ("seed", "seed"), ("eps", "epsilon"), ("agents", "n_agents"),
                      ("cells", "n_cells"), ("xmax", "x_max"), ("sigma_scale", "sigma_scale")):
        v = getattr(args, attr, None)
        if v is not None:
            changes[key] = v
    if changes:
        run = replace(run, **changes)
    params = cfg.params
    if getattr(args, "risk", None):
        params = params.with_(risk_f=Risk.HALF, risk_g=Risk.HALF if args.risk == "half-half" else Risk.ONE)
    return Config(params, cfg.initial, run, cfg.warnings)


def _ode_cfg(cfg: Config) -> OdeSolverConfig:
    r = cfg.run
    return OdeSolverConfig(t_end=r.t_end, method=r.method, rtol=r.rtol, atol=r.atol, dt=r.dt, output_dt=r.output_dt)


def _finish(manifest: Manifest, outdir: Path, files: list[Path]) -> None:
    for f in files:
        manifest.add(f, outdir)
    manifest.write(outdir)


def cmd_means(cfg: Config, outdir: Path) -> list[Path]:
    tr = integrate_means(cfg.params, cfg.initial, _ode_cfg(cfg))
    path = atomic_write(outdir / "means.csv", columns_text({"t": tr.t, "m_f": tr.m_f, "m_g": tr.m_g}))
    return [path]


def cmd_cv(cfg: Config, outdir: Path) -> list[Path]:
    tr = integrate_cv(cfg.params, cfg.initial, _ode_cfg(cfg))
    return [atomic_write(outdir / "cv.csv", columns_text({k: tr.columns()[k] for k in MOMENT_COLUMNS}))]


def _mc_cfg(cfg: Config, epsilon: float | None = None, snapshots: bool = False) -> McConfig:
    r = cfg.run
    eps = r.epsilon if epsilon is None else epsilon
    stride = r.stride if abs(r.stride / eps - round(r.stride / eps)) < 1e-9 else eps * max(1, round(r.stride / eps))
    return McConfig(n_agents=r.n_agents, epsilon=eps, t_end=r.t_end, stride=stride, seed=r.seed,
                    snapshot_times=(r.snapshot_times or (r.t_end,)) if snapshots else ())


def cmd_mc(cfg: Config, outdir: Path) -> list[Path]:
    res = run_mc(cfg.params, cfg.initial, _mc_cfg(cfg, snapshots=True))
    files = [atomic_write(outdir / "mc.csv", columns_text(res.columns()))]
    for h in res.histograms:
        files.append(atomic_write(outdir / f"hist_t{h.t:g}.csv",
                                  csv_text(HIST_HEADER, h.rows())))
    return files


def cmd_fp(cfg: Config, outdir: Path) -> tuple[list[Path], dict]:
    r = cfg.run
    snaps = r.snapshot_times or (r.t_end,)
    fcfg = FpConfig(n_cells=r.n_cells, x_max=r.x_max, t_end=r.t_end, output_dt=r.output_dt,
                    snapshot_times=tuple(snaps), frame=r.frame)
    res = run_fp(cfg.params, cfg.initial, fcfg)
    files = [atomic_write(outdir / "fp.csv", columns_text(res.columns()))]
    for s in res.snapshots:
        files.append(atomic_write(outdir / f"snapshot_t{s.t:g}.csv", columns_text({"x": s.x, "f": s.f, "g": s.g})))
    meta = res.metadata()
    files.append(write_json(outdir / "fp_meta.json", meta))
    return files, meta


def _figure(which: int, spec: FigureSpec, cfg_doc: dict, outdir: Path) -> tuple[list[Path], dict]:
    cols = figure_data(which, spec)
    data = columns_text(cols)
    digest = sha256_bytes((json.dumps(cfg_doc, sort_keys=True) + data).encode())
    title, panels = figure_panels(which, cols, spec)
    files = [
        atomic_write(outdir / f"fig{which}.csv", data),
        atomic_write(outdir / f"fig{which}.svg", svg_figure(panels, title=title, digest=digest)),
    ]
    checks = figure_checks(which, cols, spec)
    return files, {f"fig{which}": {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in checks.items()}}


def cmd_figures(cfg: Config, outdir: Path, which: Sequence[int], t_end: float | None = None) -> tuple[list[Path], dict]:
    spec = FigureSpec(cfg.params, cfg.initial, t_end or FigureSpec.t_end, sigma_scale=cfg.run.sigma_scale)
    cfg_doc = cfg.to_dict()
    files: list[Path] = []
    checks: dict = {}
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        for f, c in pool.map(lambda w: _figure(w, spec, cfg_doc, outdir), which):
            files += f
            checks.update(c)
    checks["transient"] = spec.transient
    checks["gap_threshold"] = 0.10
    return files, checks


def _sweep_one(cfg: Config, eps: float) -> dict:
    t0 = time.perf_counter()
    res = run_mc(cfg.params, cfg.initial, _mc_cfg(cfg, eps))
    tr = integrate_means(cfg.params, cfg.initial, _ode_cfg(cfg), t_out=res.t)
    err = np.abs(res.m_f - tr.m_f) + np.abs(res.m_g - tr.m_g)
    z = np.maximum(np.abs(res.m_f - tr.m_f) / res.se_m_f, np.abs(res.m_g - tr.m_g) / res.se_m_g)
    return {
        "epsilon": eps,
        "l1_mean_error": float(np.mean(err)),
        "max_se_multiple": float(np.max(z[1:])) if z.size > 1 else 0.0,
        "skipped_events": int(res.skipped_events[-1]),
        "runtime_s": time.perf_counter() - t0,
    }


def cmd_sweep(cfg: Config, outdir: Path, epsilons: Sequence[float] = SWEEP_EPSILONS) -> tuple[list[Path], dict]:
    """Quasi-invariant refinement study of the Monte Carlo means."""
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        rows = list(pool.map(lambda e: _sweep_one(cfg, e), epsilons))
    header = ("epsilon", "l1_mean_error", "max_se_multiple", "skipped_events")
    path = atomic_write(outdir / "sweep.csv", csv_text(header, [[r[h] for h in header] for r in rows]))
    errs = [r["l1_mean_error"] for r in rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    return [path], {"runtimes_s": {str(r["epsilon"]): r["runtime_s"] for r in rows}, "monotone": monotone}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinlv", description="Kinetic Lotka-Volterra deposit-loan simulations.")
    ap.add_argument("command", choices=("means", "cv", "mc", "fp", "figures", "sweep"))
    ap.add_argument("--config", type=Path, help="JSON config with 'params', 'initial', 'run'")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--t-end", dest="t_end", type=float)
    ap.add_argument("--risk", choices=("half-half", "half-one"))
    ap.add_argument("--eps", type=float)
    ap.add_argument("--agents", type=int)
    ap.add_argument("--cells", type=int)
    ap.add_argument("--xmax", type=float)
    ap.add_argument("--which", type=int, choices=(1, 2, 3, 4), action="append")
    ap.add_argument("--sigma-scale", dest="sigma_scale", type=float)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except (ValidationError, ConfigError, ValueError, TypeError) as exc:
        print(f"kinlv: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"kinlv: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    for w in cfg.warnings:
        print(f"kinlv: warning: {w}", file=sys.stderr)

    outdir: Path = args.out
    manifest = Manifest(args.command, cfg.to_dict(), seed=cfg.run.seed)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "means":
            files = cmd_means(cfg, outdir)
        elif args.command == "cv":
            files = cmd_cv(cfg, outdir)
        elif args.command == "mc":
            files = cmd_mc(cfg, outdir)
        elif args.command == "fp":
            files, manifest.extra = cmd_fp(cfg, outdir)
        elif args.command == "figures":
            files, manifest.extra = cmd_figures(cfg, outdir, args.which or (1, 2, 3, 4), args.t_end)
        else:
            files, manifest.extra = cmd_sweep(cfg, outdir)
        _finish(manifest, outdir, files)
    except (ValidationError, ConfigError) as exc:
        print(f"kinlv: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepUnderflow, MassDrift, NonPositiveDensity, ResampleExhausted, FloatingPointError) as exc:
        print(f"kinlv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"kinlv: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"kinlv: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
