"""Command-line entry point: ``singlepixel <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 input mismatch,
4 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .forward import MeasurementSet, PathStack, build_paths, simulate
from .io import atomic_write_text, file_digest, read_grid, write_grid, write_history, write_json, write_profile
from .metrics import compare_measurements, rmse, ssim
from .phantom import build_radial_map, embed_profile, reduce_to_profile, voxelize
from .solver import KTransformDataTerm, SolverError, run_dr

log = logging.getLogger("singlepixel")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISMATCH = 3
EXIT_SOLVER = 4

CONFIG_ECHO = "config.json"
MEASUREMENTS = "measurements.csv"


class InputMismatch(ValueError):
    pass


# -- building blocks shared by the commands ------------------------------


def _echo(cfg: ExperimentConfig, out: Path) -> None:
    write_json(out / CONFIG_ECHO, cfg.echo())


def _simulate(cfg: ExperimentConfig, noise_level=None) -> MeasurementSet:
    return simulate(
        cfg.phantom_model(),
        cfg.source_positions(),
        cfg.detector_spec(),
        cfg.grid.n,
        noise_level=cfg.noise_level if noise_level is None else noise_level,
        seed=cfg.seed,
        n_sim=cfg.grid.n_sim,
    )


def _progress(every: int = 100):
    def callback(state):
        if state.iteration % every == 0:
            h = state.history[-1]
            log.info("iter %d  J=%.6e  F=%.6e  G=%.6e  step=%.3e", h.iter, h.J, h.F, h.G, h.step_norm)

    return callback


def _reconstruct(cfg: ExperimentConfig, meas: MeasurementSet, alpha=None):
    params = cfg.dr_params()
    if alpha is not None:
        params = dataclasses.replace(params, alpha=alpha)
    rmap = build_radial_map(cfg.grid.n)
    paths = PathStack(build_paths(meas.positions, cfg.detector_spec(), rmap))
    state = run_dr(KTransformDataTerm(meas.noisy, paths), params, callback=_progress())
    return rmap, state


def _write_reconstruction(out: Path, rmap, state) -> None:
    write_profile(out / "profile.csv", state.f, rmap)
    write_history(out / "history.csv", state.history)
    write_grid(out / "grid.txt", embed_profile(state.f, rmap))


def _check_geometry(cfg: ExperimentConfig, meas: MeasurementSet, meas_path: Path) -> None:
    echo_path = meas_path.parent / CONFIG_ECHO
    if echo_path.exists():
        recorded = json.loads(echo_path.read_text()).get("geometry_digest")
        if recorded is not None and recorded != cfg.geometry_digest():
            raise InputMismatch(
                f"{meas_path} was simulated with a different geometry (digest {recorded[:12]}..., "
                f"config has {cfg.geometry_digest()[:12]}...)"
            )
    expected = cfg.source_positions()
    if len(expected) != len(meas):
        raise InputMismatch(f"{meas_path} has {len(meas)} sources, config expects {len(expected)}")
    if np.max(np.abs(expected - meas.positions)) > 1e-9:
        raise InputMismatch(f"{meas_path}: source positions do not match the configured geometry")


def _read_measurements(path) -> MeasurementSet:
    try:
        return MeasurementSet.read_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputMismatch(f"cannot read measurements: {exc}") from None


# -- commands ---------------------------------------------------------------


def cmd_phantom(cfg: ExperimentConfig, out: Path, args) -> None:
    rmap = build_radial_map(cfg.grid.n)
    grid = voxelize(cfg.phantom_model(), cfg.grid.n)
    write_grid(out / "phantom_grid.txt", grid)
    write_profile(out / "phantom_profile.csv", reduce_to_profile(grid, rmap), rmap)
    _echo(cfg, out)


def cmd_simulate(cfg: ExperimentConfig, out: Path, args) -> None:
    meas = _simulate(cfg)
    atomic_write_text(out / MEASUREMENTS, meas.to_csv())
    _echo(cfg, out)


def cmd_reconstruct(cfg: ExperimentConfig, out: Path, args) -> None:
    meas_path = Path(args.measurements) if args.measurements else out / MEASUREMENTS
    meas = _read_measurements(meas_path)
    _check_geometry(cfg, meas, meas_path)
    rmap, state = _reconstruct(cfg, meas)
    _write_reconstruction(out, rmap, state)
    _echo(cfg, out)


def _sweep_cell(cfg_dict: dict, noise: float, alpha: float, cell_dir: str):
    # runs in a worker process; common random numbers: every cell uses the config seed
    cfg = config_from_dict(cfg_dict)
    meas = _simulate(cfg, noise_level=noise)
    rmap, state = _reconstruct(cfg, meas, alpha=alpha)
    truth = voxelize(cfg.phantom_model(), cfg.grid.n)
    recon = embed_profile(state.f, rmap)
    cell = Path(cell_dir)
    atomic_write_text(cell / MEASUREMENTS, meas.to_csv())
    _write_reconstruction(cell, rmap, state)
    return ssim(truth, recon, cfg.ssim_params()), rmse(truth, recon)


def _parse_floats(text: str | None, default: list[float]) -> list[float]:
    if text is None:
        return list(default)
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not values or any(not (v >= 0 and math.isfinite(v)) for v in values):
        raise ConfigError(f"list values must be finite and >= 0, got {text!r}")
    return values


def _sweep_table(cells, results) -> str:
    rows = ["noise,alpha,ssim,rmse"]
    for (noise, alpha, _), res in zip(cells, results):
        if res is not None:
            rows.append(f"{noise!r},{alpha!r},{res[0]:.17g},{res[1]:.17g}")
    return "\n".join(rows) + "\n"


def cmd_sweep(cfg: ExperimentConfig, out: Path, args) -> None:
    noises = _parse_floats(args.noise, cfg.sweep.noise_levels)
    alphas = _parse_floats(args.alpha, cfg.sweep.alphas)
    cfg.sweep.noise_levels, cfg.sweep.alphas = noises, alphas
    _echo(cfg, out)
    cells = [
        (noise, alpha, str(out / "cells" / f"noise={noise:g}_alpha={alpha:g}"))
        for noise in noises
        for alpha in alphas
    ]
    workers = args.threads or cfg.sweep.workers or os.cpu_count() or 1
    workers = min(workers, len(cells))
    results: list = [None] * len(cells)
    cfg_dict = cfg.resolved_dict()

    def flush():
        atomic_write_text(out / "sweep.csv", _sweep_table(cells, results))

    if workers == 1:
        for i, (noise, alpha, cell_dir) in enumerate(cells):
            results[i] = _sweep_cell(cfg_dict, noise, alpha, cell_dir)
            flush()
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_cell, cfg_dict, *cell) for cell in cells]
            for i, fut in enumerate(futures):
                results[i] = fut.result()
                flush()


def cmd_evaluate(cfg: ExperimentConfig, out: Path, args) -> None:
    try:
        ref = read_grid(args.reference)
        cand = read_grid(args.candidate)
    except (OSError, ValueError) as exc:
        raise InputMismatch(str(exc)) from None
    if ref.shape != cand.shape:
        raise InputMismatch(f"grid sizes differ: {ref.shape[0]} vs {cand.shape[0]}")
    params = cfg.ssim_params().resolved(ref)
    try:
        report = {
            "ssim": ssim(ref, cand, params),
            "rmse": rmse(ref, cand),
        }
    except ValueError as exc:
        raise InputMismatch(str(exc)) from None
    report.update(
        ssim_params=params.as_dict(),
        reference={"path": str(args.reference), "sha256": file_digest(args.reference)},
        candidate={"path": str(args.candidate), "sha256": file_digest(args.candidate)},
    )
    write_json(out / "metrics.json", report)


def cmd_verify(cfg: ExperimentConfig, out: Path, args) -> None:
    a = _read_measurements(args.template)
    b = _read_measurements(args.candidate)
    tol = cfg.verify.tol if args.tol is None else args.tol
    try:
        verdict = compare_measurements(a, b, tol)
    except ValueError as exc:
        raise InputMismatch(str(exc)) from None
    report = verdict.as_dict()
    report["tol"] = tol if math.isfinite(tol) else "inf"
    report.update(
        template={"path": str(args.template), "sha256": file_digest(args.template)},
        candidate={"path": str(args.candidate), "sha256": file_digest(args.candidate)},
    )
    write_json(out / "verdict.json", report)
    print("accept" if verdict.accept else "reject")


COMMANDS = {
    "phantom": (cmd_phantom, "voxelize the configured phantom"),
    "simulate": (cmd_simulate, "write synthetic measurements"),
    "reconstruct": (cmd_reconstruct, "reconstruct a radial profile from measurements"),
    "sweep": (cmd_sweep, "noise x alpha SSIM sweep"),
    "evaluate": (cmd_evaluate, "SSIM/RMSE between two grid files"),
    "verify": (cmd_verify, "template-vs-candidate tolerance check"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON experiment config")
    common.add_argument("--out", help="output directory (overrides config 'output')")
    common.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
    common.add_argument("--threads", type=int, help="BLAS threads per process; sweep worker count")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    parser = argparse.ArgumentParser(prog="singlepixel", description="Single-pixel transform simulation and reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {name: sub.add_parser(name, parents=[common], help=text) for name, (_, text) in COMMANDS.items()}
    subs["reconstruct"].add_argument("measurements", nargs="?", help=f"measurement CSV (default <out>/{MEASUREMENTS})")
    subs["sweep"].add_argument("--noise", help="comma-separated noise levels")
    subs["sweep"].add_argument("--alpha", help="comma-separated regularization weights")
    subs["evaluate"].add_argument("reference")
    subs["evaluate"].add_argument("candidate")
    subs["verify"].add_argument("template")
    subs["verify"].add_argument("candidate")
    subs["verify"].add_argument("--tol", type=float, help="acceptance tolerance ('inf' accepts everything)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output={args.out}")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    func = COMMANDS[args.command][0]
    try:
        with threadpool_limits(limits=args.threads):
            func(cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputMismatch as exc:
        print(f"input mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
