"""Command-line entry point: ``spde-tumor {run,ensemble,sweep,verify}``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 failed
verification checks.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import postproc, verify
from .config import ConfigError, RunConfig, parse_config
from .ensemble import run_ensemble, run_nu_sweep
from .noise import write_noise_dump
from .stepper import SimulationError, State, StepOperators, Trajectory, default_qois, run_simulation

log = logging.getLogger("spde_tumor")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with dotted configuration keys")
    common.add_argument("--nx", type=int)
    common.add_argument("--ny", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output root (default: $SPDE_TUMOR_OUT or ./output)")
    common.add_argument("--name", help="run name; outputs go to OUT/NAME")
    common.add_argument("--snapshot-times", type=_floats)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spde-tumor", description="Stochastic tumor growth simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="single trajectory")
    p.add_argument("--nu", type=float)
    p.add_argument("--log-noise", action="store_true", help="write the raw Gaussian draws")
    p = sub.add_parser("ensemble", parents=[common], help="Monte Carlo ensemble")
    p.add_argument("--nu", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--threads", type=int, help="worker processes (does not change results)")
    p = sub.add_parser("sweep", parents=[common], help="fixed-seed sweep over tumor noise amplitude")
    p.add_argument("--nu", type=_floats, help="comma-separated amplitudes")
    p.add_argument("--log-noise", action="store_true", help="write the raw Gaussian draws")
    p = sub.add_parser("verify", parents=[common], help="verification suite")
    p.add_argument("--quick", action="store_true", help="smaller runs, skips the convergence study")
    return parser


def config_from_args(args) -> RunConfig:
    flags = {"mode": args.command}
    mapping = {
        "nx": "grid.nx", "ny": "grid.ny", "dt": "time.dt", "t_end": "time.t_end",
        "seed": "ensemble.base_seed", "name": "name", "snapshot_times": "output.snapshot_times",
        "samples": "ensemble.n_samples", "log_noise": "output.log_noise",
    }
    for attr, key in mapping.items():
        val = getattr(args, attr, None)
        if val is not None and val is not False:
            flags[key] = val
    nu = getattr(args, "nu", None)
    if nu is not None:
        flags["sweep.nu_list" if args.command == "sweep" else "noise.nu"] = nu
    return parse_config(args.config, flags)


def output_dir(args, cfg: RunConfig) -> Path:
    root = args.out or os.environ.get("SPDE_TUMOR_OUT") or "output"
    out = Path(root) / (cfg["name"] or cfg["mode"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tag(t: float) -> str:
    return f"{t:.6f}".rstrip("0").rstrip(".").replace(".", "p")


def write_state(out: Path, grid, state: State, t: float) -> None:
    tag = _tag(t)
    postproc.write_vtk_field(out / f"fields_t{tag}.vtk", grid,
                             {"phi": state.phi, "mu": state.mu, "sigma": state.sigma})
    postproc.write_contour_csv(out / f"contour_t{tag}.csv",
                               postproc.extract_contour(grid, state.phi, 0.5))


def write_trajectory(out: Path, grid, traj: Trajectory) -> None:
    postproc.write_csv_timeseries(out / "qoi.csv", traj.times,
                                  {n: traj.qoi[:, k] for k, n in enumerate(traj.qoi_names)})
    for t, s in sorted(traj.snapshots.items()):
        write_state(out, grid, s, t)


def _snapshot_times(cfg: RunConfig) -> list[float]:
    times = list(cfg["output.snapshot_times"])
    t_end = cfg["time.t_end"]
    if not any(abs(t - t_end) < 1e-12 for t in times):
        times.append(t_end)
    for t in times:
        if t < 0 or t > t_end + 1e-12:
            raise ConfigError(f"snapshot time {t} outside [0, {t_end}]")
    return times


def cmd_run(cfg: RunConfig, out: Path) -> int:
    grid, params = cfg.grid(), cfg.params()
    ops = StepOperators.build(grid, params)
    qois = _qois_with_energy(grid, params, ops)
    traj = run_simulation(grid, params, seed=cfg["ensemble.base_seed"], ops=ops, qois=qois,
                          qoi_every=cfg["output.qoi_every"], snapshot_times=_snapshot_times(cfg),
                          record_noise=cfg["output.log_noise"])
    write_trajectory(out, grid, traj)
    if traj.noise_records is not None:
        write_noise_dump(out / "noise.csv", traj.noise_records)
    print(f"final tumor volume {traj.qoi[-1, 0]:.10g}; outputs in {out}")
    return EXIT_OK


def _qois_with_energy(grid, params, ops):
    q = default_qois(grid, ops)
    q["energy"] = lambda s: postproc.energy(grid, s.phi, s.sigma, params)
    return q


def cmd_ensemble(cfg: RunConfig, out: Path, threads: int | None) -> int:
    grid, params = cfg.grid(), cfg.params()
    res = run_ensemble(grid, params, cfg["ensemble.n_samples"], cfg["ensemble.base_seed"],
                       threads=threads, qoi_every=cfg["output.qoi_every"])
    cols = {}
    for k, name in enumerate(res.qoi_names):
        cols[f"mean_{name}"] = res.mean[:, k]
        cols[f"std_{name}"] = res.std[:, k]
    postproc.write_csv_timeseries(out / "stats.csv", res.times, cols)
    with open(out / "samples.csv", "w", newline="\n") as fh:
        fh.write(",".join(["sample", "seed", "time", *res.qoi_names]) + "\n")
        for i, seed in enumerate(res.seeds):
            for j, t in enumerate(res.times):
                vals = ",".join("%.17g" % v for v in res.samples[i, j])
                fh.write(f"{i},{seed},{t:.17g},{vals}\n")
    k = res.qoi_names.index("tumor_volume")
    print(f"{len(res.seeds)} samples; tumor volume at t={res.times[-1]:g}: "
          f"mean {res.mean[-1, k]:.6g} std {res.std[-1, k]:.6g}; outputs in {out}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    grid, params = cfg.grid(), cfg.params()
    seed = cfg["ensemble.base_seed"]
    times = _snapshot_times(cfg)
    res = run_nu_sweep(grid, params, cfg["sweep.nu_list"], seed=seed, snapshot_times=times,
                       record_noise=cfg["output.log_noise"])
    rows = []
    for nu, traj in zip(res.nu, res.trajectories):
        sub = out / f"nu_{_tag(nu)}"
        sub.mkdir(exist_ok=True)
        write_trajectory(sub, grid, traj)
        if traj.noise_records is not None:
            write_noise_dump(sub / "noise.csv", traj.noise_records)
        perim = postproc.contour_perimeter(grid, traj.final.phi, 0.5)
        rows.append((nu, perim, traj.qoi[-1, 0], traj.noise_digest))
    with open(out / "sweep.csv", "w", newline="\n") as fh:
        fh.write("nu,perimeter,tumor_volume,noise_sha256\n")
        for nu, perim, vol, dig in rows:
            fh.write(f"{nu:.17g},{perim:.17g},{vol:.17g},{dig}\n")
    (out / "noise_check.txt").write_text(
        f"seed {seed}\nshared noise across {len(rows)} runs: {'yes' if res.same_noise else 'no'}\n"
        f"sha256 {rows[0][3]}\n")
    for nu, perim, vol, _ in rows:
        print(f"nu={nu:g}: perimeter {perim:.6g}, tumor volume {vol:.6g}")
    print(f"shared noise verified; outputs in {out}")
    return EXIT_OK


def cmd_verify(out: Path, quick: bool) -> int:
    reports = verify.run_all(quick=quick)
    print(verify.format_table(reports))
    with open(out / "verify.csv", "w", newline="\n") as fh:
        fh.write("check,status,measured,bound,details\n")
        for r in reports:
            fh.write(",".join(f'"{c}"' if "," in c else c for c in r.row()) + "\n")
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        out = output_dir(args, cfg)
        (out / "config.json").write_text(cfg.to_json())
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "ensemble":
            return cmd_ensemble(cfg, out, args.threads)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        return cmd_verify(out, args.quick)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
