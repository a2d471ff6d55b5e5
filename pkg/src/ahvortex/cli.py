"""Command-line entry point: ``ahvortex {profile,modes,evolve,scan,analyze}``."""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


@contextmanager
def _staging(out: Path):
    """Write into a scratch directory and move files into ``out`` only on success."""
    out.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        yield tmp
        for p in sorted(tmp.rglob("*")):
            if p.is_file():
                dest = out / p.relative_to(tmp)
                dest.parent.mkdir(parents=True, exist_ok=True)
                p.replace(dest)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _metadata(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "code_version": __version__, "config": cfg.echo()}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_profile(cfg: RunConfig, out: Path) -> dict:
    from .profile import fit_tails, solve_profile

    prof = solve_profile(cfg.N, cfg.lam, cfg.radial_grid)
    tails = fit_tails(prof)
    with _staging(out) as tmp:
        prof.to_csv(tmp / "profile.csv")
        info = tails.to_json(cfg.N, cfg.lam) | {"energy": prof.energy(), "residual": prof.residual}
        _json(tmp / "tails.json", info)
        _json(tmp / "metadata.json", _metadata(cfg, "profile"))
    return info


def cmd_modes(cfg: RunConfig, out: Path) -> dict:
    from .modes import NoBoundMode, assemble_operator, solve_shape_mode
    from .profile import solve_profile

    if cfg.N != 1:
        raise ConfigError("the shape mode is implemented for N = 1 only")
    prof = solve_profile(1, cfg.lam, cfg.radial_grid)
    with _staging(out) as tmp:
        try:
            mode = solve_shape_mode(assemble_operator(prof))
        except NoBoundMode as exc:
            info = {"lambda": cfg.lam, "bound_mode": False, "omega2": None, "message": str(exc)}
        else:
            mode.to_csv(tmp / "mode.csv")
            info = mode.to_json() | {"bound_mode": True}
        _json(tmp / "mode.json", info)
        _json(tmp / "metadata.json", _metadata(cfg, "modes"))
    return info


def _analyze_record(rec, n_vortices: int, omega: float | None, d_close: float) -> dict:
    from .analysis import NOMINAL_OMEGA, count_bounces, mode_amplitude_series, separation_series

    res: dict = {
        "t_end": rec.times[-1] if rec.times else None,
        "energy_start": rec.energy[0] if rec.energy else None,
        "energy_end": rec.energy[-1] if rec.energy else None,
        "flux_over_2pi_range": [min(rec.flux) / (2 * np.pi), max(rec.flux) / (2 * np.pi)] if rec.flux else None,
    }
    if n_vortices == 2:
        try:
            s = separation_series(rec)
        except ValueError as exc:
            res["bounces"] = {"error": str(exc)}
        else:
            b = count_bounces(s, d_close)
            res["bounces"] = {
                "n_bounces": b.n_bounces,
                "escape": b.escape_label,
                "v_out": b.v_out,
                "v_out_method": "line fit of d(t)/2 over the final monotone escape segment",
                "times_of_closest_approach": b.times_of_closest_approach,
                "min_separation": b.min_separation,
            }
    try:
        tc, env = mode_amplitude_series(rec, omega or NOMINAL_OMEGA, n_vortices=max(1, n_vortices))
        res["envelope"] = {"t0": float(tc[0]), "initial": float(env[0]), "final": float(env[-1]), "per_vortex": True}
    except ValueError as exc:
        res["envelope"] = {"error": str(exc)}
    return res


def cmd_evolve(cfg: RunConfig, out: Path) -> dict:
    from dataclasses import replace

    from .evolution import evolve
    from .initial import superpose
    from .lattice import write_plane_csv, write_plane_pgm, write_vxl1
    from .modes import assemble_operator, solve_shape_mode
    from .profile import solve_profile

    degrees = {v.N for v in cfg.vortices}
    if len(degrees) != 1:
        raise ConfigError("all vortices must share one degree")
    prof = solve_profile(degrees.pop(), cfg.lam, cfg.radial_grid)
    need_mode = any(v.excitation == "linear" for v in cfg.vortices) or (
        cfg.phase_method == "shift" and any(v.sigma0 for v in cfg.vortices))
    mode = solve_shape_mode(assemble_operator(prof)) if need_mode else None
    ic = cfg.initial_config()
    with _staging(out) as tmp:
        ev = cfg.evolution
        if ev.snapshot_cadence:
            ev = replace(ev, snapshot_dir=str(tmp / "snapshots"))
        state = superpose(ic, prof, mode, cfg.evolution)
        rec = evolve(state, ev, cfg.params, expected_zeros=len(cfg.vortices))
        rec.to_csv(tmp / "diagnostics.csv")
        if "vxl1" in cfg.output.formats:
            write_vxl1(rec.final_state, tmp / "final.vxl1")
        if "csv" in cfg.output.formats:
            write_plane_csv(rec.final_state, "energy_density", tmp / "final_energy_density.csv", cfg.params)
        if "pgm" in cfg.output.formats:
            write_plane_pgm(rec.final_state, "energy_density", tmp / "final_energy_density.pgm", cfg.params)
        summary = _analyze_record(rec, len(cfg.vortices), mode.omega if mode else None, cfg.scan.d_close)
        summary |= {"steps": rec.steps, "wall_time": rec.wall_time,
                    "stopped_early": rec.stopped_early, "stop_reason": rec.stop_reason}
        _json(tmp / "summary.json", summary)
        _json(tmp / "metadata.json", _metadata(cfg, "evolve"))
    return summary


def cmd_scan(cfg: RunConfig, out: Path, workers: int | None = None, resume: bool = False) -> dict:
    from .analysis import run_scan

    setup = cfg.pair_setup()
    out.mkdir(parents=True, exist_ok=True)
    _json(out / "metadata.json", _metadata(cfg, "scan"))
    res = run_scan(cfg.scan.v_list, cfg.scan.sigma_list, setup, out / "scan.csv",
                   workers=workers or cfg.scan.workers, resume=resume)
    failed = [p.index for p in res.points if p.status != "ok"]
    return {"points": len(res.points), "failed": failed}


def cmd_analyze(cfg: RunConfig, out: Path, records: list[Path]) -> dict:
    from .evolution import RunRecord

    if not records:
        records = [out / "diagnostics.csv"]
    results = {}
    for path in records:
        if not path.is_file():
            raise FileNotFoundError(f"record {path} not found")
    with _staging(out) as tmp:
        for path in records:
            rec = RunRecord.from_csv(path)
            results[str(path)] = _analyze_record(rec, len(cfg.vortices), None, cfg.scan.d_close)
        _json(tmp / "analysis.json", results)
    return results


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ahvortex", description="Abelian-Higgs vortex solver and scattering scans.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("profile", "solve the radial vortex profile and fit its tails"),
        ("modes", "solve the radial shape mode"),
        ("evolve", "evolve the configured vortices"),
        ("scan", "run a (v_in, sigma0) phase-space scan"),
        ("analyze", "re-run the analysis on stored diagnostics"),
    ]:
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        sp.add_argument("--out", type=Path, default=None, help="output directory (overrides output.directory)")
        sp.add_argument("--workers", type=int, default=None, help="scan worker processes")
        sp.add_argument("--resume", action="store_true", help="reuse completed scan points")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the resolved plan")
        if name == "analyze":
            sp.add_argument("records", nargs="*", type=Path, help="diagnostics CSV files")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.command == "scan":
            cfg.pair_setup()
    except ConfigError as exc:
        print(f"ahvortex: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg.output.directory)

    if args.dry_run:
        plan = {"command": args.command, "output_directory": str(out), "config": cfg.echo()}
        if args.command == "scan":
            plan["points"] = len(cfg.scan.v_list) * len(cfg.scan.sigma_list)
        print(json.dumps(plan, indent=2, default=_jsonable))
        return 0

    try:
        if args.command == "profile":
            res = cmd_profile(cfg, out)
        elif args.command == "modes":
            res = cmd_modes(cfg, out)
        elif args.command == "evolve":
            res = cmd_evolve(cfg, out)
        elif args.command == "scan":
            res = cmd_scan(cfg, out, args.workers, args.resume)
        else:
            res = cmd_analyze(cfg, out, args.records)
    except ConfigError as exc:
        print(f"ahvortex: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"ahvortex: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(res, indent=2, default=_jsonable))
    if args.command == "scan" and res["failed"]:
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
