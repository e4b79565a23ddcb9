"""Command-line runner.

    tfdmagic {ed,saddle,sff,phase-diagram,verify,fit} [--config PATH] [--out DIR]
             [--workers N] [--seed U64] [--format {csv,json}]

Exit codes: 0 success, 1 invalid configuration, 2 solver non-convergence,
3 verification failure. Failures print one JSON line on stderr with a
machine-readable ``reason``. Every run writes ``run_metadata.json`` (full
configuration, code version, seeds) next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, dynamics, ed, fitkit, persist
from .config import ConfigError, RunConfig, validate
from .saddle import IllConditionedError, SaddleOptions
from .thermal import BranchLossError, ConvergenceError, SolverOptions, free_energy, sff_slope
from .verify import run_checks

log = logging.getLogger("tfdmagic")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
MODES = ("ed", "saddle", "sff", "phase-diagram", "verify", "fit")

SADDLE_COLUMNS = ("t", "m2_sym", "m2_ssb", "m2_dom", "order_param", "lnz_sre_sym", "lnz_sre_ssb")
ORDER_COLUMNS = ("beta", "t", "order_param", "order_param_ssb", "dominant")
SFF_COLUMNS = ("t", "ln_sff_per_mode", "re_f", "im_f", "m2_predicted")
ED_COLUMNS = ("beta", "t", "m2_mean", "m2_stderr", "m2_per_mode_mean", "sff_half_mean", "n_realizations")
ED_RAW_COLUMNS = ("beta", "t", "realization", "m2", "power2", "max_imag", "z_beta", "sff_half")
PHASE_COLUMNS = ("beta_j", "t_star_j", "status")
BOUNDARY_COLUMNS = ("t_star_j", "beta_j_fit")
VERIFY_COLUMNS = ("name", "max_residual", "tolerance", "passed")


class SolverFailure(RuntimeError):
    pass


class VerificationFailure(RuntimeError):
    pass


# ------------------------------------------------------------------ options


def _solver_options(cfg: RunConfig) -> tuple[SaddleOptions, SolverOptions]:
    s = cfg.section("solver")
    saddle = SaddleOptions(
        tol=s["tol"],
        damping=s["damping"],
        damping_floor=s["damping_floor"],
        max_iter=s["max_iter"],
        anderson_depth=s["anderson_depth"],
        growth_tolerance=s["growth_tolerance"],
    )
    thermal = SolverOptions(
        n_freq=s["n_freq"], tol=s["tol"], damping=s["damping"], damping_floor=s["damping_floor"], max_iter=max(s["max_iter"], 5000)
    )
    return saddle, thermal


def dynamics_options(cfg: RunConfig) -> dynamics.DynamicsOptions:
    saddle, thermal = _solver_options(cfg)
    c, s, m = cfg.section("contour"), cfg.section("solver"), cfg.section("model")
    return dynamics.DynamicsOptions(
        q=m["q"],
        j_coupling=m["j_coupling"],
        n_im=c["n_im"],
        n_re=c["n_re"],
        re_step=c["re_step"],
        symmetric_engine=s["symmetric_engine"],
        saddle=saddle,
        thermal=thermal,
        resolution=s["resolution"],
        scan_step=s["scan_step"],
    )


def _beta_label(beta: float) -> str:
    return f"{beta:g}".replace(".", "p")


def _pool_map(fn, tasks, workers: int):
    """Ordered map; results follow ``tasks`` whatever the completion order."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# -------------------------------------------------------------------- modes


def _ed_task(args):
    params, betas, times, realization = args
    return ed.ed_m2_curve(params, betas, times, realization)


def run_ed(cfg: RunConfig, out: Path, workers: int, fmt: str) -> dict:
    m = cfg.section("model")
    params = ed.ModelParams(m["n_majorana"], m["q"], m["j_coupling"], cfg.seed)
    betas, times = cfg.betas(), cfg.times()
    n_real = cfg.section("sweep")["realizations"]
    runs = _pool_map(_ed_task, [(params, betas, times, r) for r in range(n_real)], workers)
    raw = [
        (p.beta, p.t, run.realization, p.m2, p.power2, p.max_imag, p.z_beta, p.sff_half) for run in runs for p in run.points
    ]
    persist.write_table(out / "ed_realizations", ED_RAW_COLUMNS, raw, fmt)
    rows = []
    n_points = len(runs[0].points) if runs else 0
    for k in range(n_points):
        m2 = np.array([run.points[k].m2 for run in runs])
        sff = np.array([run.points[k].sff_half for run in runs])
        err = float(m2.std(ddof=1) / math.sqrt(len(m2))) if len(m2) > 1 else math.nan
        p0 = runs[0].points[k]
        rows.append((p0.beta, p0.t, m2.mean(), err, m2.mean() / params.n_majorana, sff.mean(), len(m2)))
    persist.write_table(out / "ed_m2", ED_COLUMNS, rows, fmt)
    return {"realizations": n_real, "seeds": [[cfg.seed, r] for r in range(n_real)]}


def _saddle_task(args):
    beta, times, opts = args
    return dynamics.m2_curve(beta, times, opts)


def saddle_rows(curve: dynamics.SRECurve) -> list[tuple]:
    return [
        (p.t, p.m2_symmetric, p.m2_ssb, p.m2_dominant, p.order_param, p.lnz_symmetric, p.lnz_ssb) for p in curve.points
    ]


def run_saddle(cfg: RunConfig, out: Path, workers: int, fmt: str) -> dict:
    opts = dynamics_options(cfg)
    curves = _pool_map(_saddle_task, [(b, cfg.times(), opts) for b in cfg.betas()], workers)
    emit_plotdata({"curves": curves}, out, fmt)
    failures = [
        f"beta={c.beta}, t={p.t}: {flag}"
        for c in curves
        for p in c.points
        for flag in p.flags
        if "ConvergenceError" in flag or "IllConditioned" in flag
    ]
    info = {"flags": [f"beta={c.beta}, t={p.t}: {f}" for c in curves for p in c.points for f in p.flags]}
    if failures:
        raise SolverFailure("; ".join(failures[:5]))
    return info


def _sff_task(args):
    beta, times, q, j, thermal = args
    f_beta = free_energy(beta, q, j, thermal).real
    slope = sff_slope(beta, times, q, j, thermal)
    m2p = 2 * math.log(2) - 4 * (slope.ln_sff_per_mode - f_beta)
    return beta, [(t, s, z.real, z.imag, m) for t, s, z, m in zip(times, slope.ln_sff_per_mode, slope.ln_z_complex, m2p)]


def run_sff(cfg: RunConfig, out: Path, workers: int, fmt: str) -> dict:
    _, thermal = _solver_options(cfg)
    m = cfg.section("model")
    results = _pool_map(_sff_task, [(b, cfg.times(), m["q"], m["j_coupling"], thermal) for b in cfg.betas()], workers)
    for beta, rows in results:
        persist.write_table(out / f"sff_beta_{_beta_label(beta)}", SFF_COLUMNS, rows, fmt)
    return {}


def run_phase_diagram(cfg: RunConfig, out: Path, workers: int, fmt: str) -> dict:
    opts = dynamics_options(cfg)
    diagram = dynamics.phase_diagram(cfg.betas(), cfg.section("sweep")["t_max"], opts, workers)
    emit_plotdata({"phase_diagram": diagram}, out, fmt)
    return {"notes": diagram.notes}


def run_verify(cfg: RunConfig, out: Path, workers: int, fmt: str) -> dict:
    results = run_checks()
    rows = [(r.name, r.max_residual, r.tolerance, r.passed) for r in results]
    persist.write_table(out / "verify_report", VERIFY_COLUMNS, rows, fmt)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: max residual {r.max_residual:.3e} (tol {r.tolerance:.0e})")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailure(", ".join(failed))
    return {"checks": [r.name for r in results]}


def run_fit(cfg: RunConfig, out: Path, workers: int, fmt: str) -> dict:
    spec = cfg.section("fit")
    try:
        table = persist.read_table(spec["input"])
    except FileNotFoundError as exc:
        raise ConfigError("fit.input", f"input file not found: {spec['input']}") from exc
    for key in ("x_column", "y_column", "sigma_column"):
        col = spec.get(key)
        if col is not None and col not in table:
            raise ConfigError(f"fit.{key}", f"column {col!r} not in {spec['input']}")
        if col is not None and table[col].dtype == object:
            raise ConfigError(f"fit.{key}", f"column {col!r} is not numeric")
    x, y = table[spec["x_column"]], table[spec["y_column"]]
    keep = np.isfinite(x) & np.isfinite(y)
    if spec.get("x_min") is not None:
        keep &= x >= spec["x_min"]
    sigma = table[spec["sigma_column"]][keep] if spec.get("sigma_column") else None
    points = np.column_stack([x[keep], y[keep]])
    j = cfg.section("model")["j_coupling"]
    try:
        if spec["model"] == "saturation":
            result = fitkit.fit_saturation(points, j, sigma=sigma)
        elif spec["model"] == "lorentzian":
            result = fitkit.fit_lorentzian(points, j, sigma=sigma)
        else:
            result = fitkit.fit_boundary(points, j)
    except fitkit.FitError as exc:
        raise ConfigError("fit.input", str(exc)) from exc
    persist.write_json(out / "fit_result.json", result.to_dict())
    return {"fit": result.model_id}


RUNNERS = {
    "ed": run_ed,
    "saddle": run_saddle,
    "sff": run_sff,
    "phase-diagram": run_phase_diagram,
    "verify": run_verify,
    "fit": run_fit,
}


# ----------------------------------------------------------------- plot data


def emit_plotdata(results: dict, target: str | Path, fmt: str = "csv") -> list[Path]:
    """One table per figure panel: M2 vs t per beta, order parameter vs t,
    phase-boundary points and 100 samples of the fitted boundary.

    ``results`` may hold ``curves`` (list of :class:`~tfdmagic.dynamics.SRECurve`)
    and/or ``phase_diagram``; missing or empty entries give header-only files.
    """
    target = Path(target)
    written = []
    curves = results.get("curves")
    if curves is not None:
        order_rows = []
        for curve in curves:
            written.append(
                persist.write_table(target / f"m2_beta_{_beta_label(curve.beta)}", SADDLE_COLUMNS, saddle_rows(curve), fmt)
            )
            for p, branch in zip(curve.points, curve.dominant_branch()):
                ssb_order = p.order_param if branch == "ssb" else math.nan
                order_rows.append((curve.beta, p.t, p.order_param, ssb_order, branch))
        if not curves:
            written.append(persist.write_table(target / "m2_curve", SADDLE_COLUMNS, [], fmt))
        written.append(persist.write_table(target / "order_parameter", ORDER_COLUMNS, order_rows, fmt))
    if "phase_diagram" in results:
        diagram = results["phase_diagram"]
        points = diagram.points if diagram is not None else []
        rows = [(p.beta_j, p.t_star_j, p.status) for p in points]
        written.append(persist.write_table(target / "phase_points", PHASE_COLUMNS, rows, fmt))
        fit = diagram.boundary_fit if diagram is not None else None
        samples = []
        if fit is not None:
            ts = np.array([p.t_star_j for p in points if p.status == "crossing-found"])
            grid = np.linspace(0.0, 1.2 * ts.max(), 100)
            samples = list(zip(grid, fit.predict(grid)))
            written.append(persist.write_json(target / "boundary_fit.json", fit.to_dict()))
        written.append(persist.write_table(target / "phase_boundary", BOUNDARY_COLUMNS, samples, fmt))
        if diagram is not None:
            written.append(persist.write_json(target / "transition_scans.json", [p.detail for p in points]))
    return written


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfdmagic", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="JSON configuration file (see config_schema.json)")
        p.add_argument("--out", help="output directory (overrides io.out_dir)")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--seed", type=int, help="RNG seed (overrides model.seed)")
        p.add_argument("--format", choices=("csv", "json"), help="table format (overrides io.format)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _error(code: int, reason: str, detail: str, key: str | None = None) -> int:
    payload = {"status": "error", "exit_code": code, "reason": reason, "detail": detail}
    if key:
        payload["key"] = key
    print(json.dumps(payload), file=sys.stderr)
    return code


def _load(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError("", f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"config is not valid JSON: {exc}") from exc
    else:
        raw = {"mode": args.mode, "model": {"q": 4}}
    if not isinstance(raw, dict):
        raise ConfigError("", "configuration must be a JSON object")
    raw.setdefault("mode", args.mode)
    if raw["mode"] != args.mode:
        raise ConfigError("mode", f"config mode {raw['mode']!r} does not match subcommand {args.mode!r}")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("model.seed", "--seed must be an unsigned 64-bit integer")
        if isinstance(raw.get("model"), dict):
            raw["model"]["seed"] = args.seed
    if args.format:
        raw.setdefault("io", {})["format"] = args.format
    if args.out:
        raw.setdefault("io", {})["out_dir"] = args.out
    return validate(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("workers", "--workers must be >= 1")
        cfg = _load(args)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "validation", str(exc), exc.key)

    io = cfg.section("io")
    out = Path(io["out_dir"])
    meta = {
        "mode": cfg.mode,
        "version": __version__,
        "config": cfg.data,
        "seed": cfg.seed,
        "workers": args.workers,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    code = EXIT_OK
    try:
        info = RUNNERS[cfg.mode](cfg, out, args.workers, io["format"])
        meta.update(status="ok", info=info)
    except ConfigError as exc:
        meta.update(status="error", reason="validation", detail=str(exc))
        code = _error(EXIT_CONFIG, "validation", str(exc), exc.key)
    except (ConvergenceError, IllConditionedError, BranchLossError, SolverFailure) as exc:
        meta.update(status="error", reason="non-convergence", detail=str(exc))
        code = _error(EXIT_SOLVER, "non-convergence", str(exc))
    except VerificationFailure as exc:
        meta.update(status="error", reason="verification-failed", detail=str(exc))
        code = _error(EXIT_VERIFY, "verification-failed", str(exc))
    persist.write_json(out / "run_metadata.json", meta)
    return code


if __name__ == "__main__":
    sys.exit(main())
