"""Command-line interface: mesh reports, single runs, convergence sweeps.

Subcommands:
  mesh    build the mesh, validate it, write the cell CSV + validation report
  run     march one case to steady state and write its artifacts
  sweep   run a density sweep plus a fine self-reference, emit the error and
          observed-order table
  report  recompute profile/metric artifacts from a saved field (no solve)

All artifacts are plain CSV (comma, dot decimal, header, LF) or flat
key=value text.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .config import CaseConfig
from .mesh import build_semicircle_mesh, mesh_report_csv, validate_mesh
from .postprocess import (
    ProbeSet,
    compute_error_and_order,
    extract_profiles,
    field_csv,
    marked_cell_table,
    metrics_text,
    profiles_csv,
    reference_errors,
    stream_function,
    vortex_metrics,
)
from .solver import march_to_steady

CELL_ORDER_VARS = ("uA", "vA", "uB", "vB", "u14", "v14")
FACE_ORDER_VARS = ("u_y", "v_y", "u_x", "v_x", "dudx_y", "dvdx_y", "dudy_x", "dvdy_x")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutcavity",
                                description="cut-cell semicircular cavity solver")
    p.add_argument("--config", help="flat key=value case file")
    p.add_argument("--re", type=float, help="Reynolds number U*D/nu")
    p.add_argument("--n", type=int, help="cells along the lid")
    p.add_argument("--sweep", help="comma-separated density list")
    p.add_argument("--out", help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("command", choices=["mesh", "run", "sweep", "report"])
    return p


def load_config(args) -> CaseConfig:
    if args.config:
        with open(args.config) as f:
            cfg = CaseConfig.from_text(f.read())
    else:
        cfg = CaseConfig()
    if args.re is not None:
        cfg.re = args.re
        cfg.nu = None
    if args.n is not None:
        cfg.n = args.n
    if args.sweep:
        cfg.sweep = tuple(int(x) for x in args.sweep.split(","))
    if args.out:
        cfg.out_dir = args.out
    if args.quiet:
        cfg.quiet = True
    if cfg.re is None and cfg.nu is None:
        cfg.re = 100.0
    return cfg.finalize()


def _say(cfg, msg):
    if not cfg.quiet:
        print(msg, flush=True)


def cmd_mesh(cfg: CaseConfig) -> int:
    mesh = build_semicircle_mesh(cfg.D, cfg.n)
    rep = validate_mesh(mesh)
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "mesh.csv"), "w", newline="\n") as f:
        f.write(mesh_report_csv(mesh))
    with open(os.path.join(cfg.out_dir, "mesh_validation.txt"), "w", newline="\n") as f:
        f.write(rep.text())
    area = mesh.total_volume()
    _say(cfg, f"mesh n={cfg.n}: {mesh.n_cells} cells, area {area:.12f} "
              f"(half-disc {math.pi * cfg.D**2 / 8:.12f}), "
              f"{'valid' if rep.ok else 'INVALID'}")
    return 0 if rep.ok else 1


def run_case(cfg: CaseConfig, tag: str = "") -> tuple:
    """Solve one case and write its artifacts; returns (fields, state)."""
    mesh = build_semicircle_mesh(cfg.D, cfg.n)
    out = os.path.join(cfg.out_dir, tag) if tag else cfg.out_dir
    os.makedirs(out, exist_ok=True)
    log = os.path.join(out, "residuals.csv") if cfg.emit_residuals else None
    fields, state = march_to_steady(cfg, mesh, log_path=log)
    _say(cfg, f"n={cfg.n} Re={cfg.re}: converged={state.converged} "
              f"steps={state.n_steps} outer={state.n_outer} "
              f"wall={state.wall_seconds:.1f}s")
    _write_artifacts(cfg, fields, out)
    _save_state(fields, os.path.join(out, "state.npz"))
    return fields, state


def _write_artifacts(cfg: CaseConfig, fields, out: str) -> None:
    if cfg.emit_profiles:
        vrec, hrec = extract_profiles(fields)
        with open(os.path.join(out, "profiles_x.csv"), "w", newline="\n") as f:
            f.write(profiles_csv(vrec))
        with open(os.path.join(out, "profiles_y.csv"), "w", newline="\n") as f:
            f.write(profiles_csv(hrec))
    with open(os.path.join(out, "cells_marked.csv"), "w", newline="\n") as f:
        f.write(marked_cell_table(fields))
    if cfg.emit_metrics:
        psi = stream_function(fields)
        vm = vortex_metrics(fields, psi)
        with open(os.path.join(out, "metrics.txt"), "w", newline="\n") as f:
            f.write(metrics_text(fields, vm))
    if cfg.emit_fields:
        with open(os.path.join(out, "field.csv"), "w", newline="\n") as f:
            f.write(field_csv(fields))
    with open(os.path.join(out, "case.cfg"), "w", newline="\n") as f:
        f.write(cfg.to_text())


def _save_state(fields, path: str) -> None:
    np.savez_compressed(path, u=fields.u, v=fields.v, p=fields.p,
                        uy=fields.uy, vx=fields.vx, n=fields.config.n,
                        re=fields.config.re, d=fields.config.D,
                        uu=fields.config.U)


def load_state(path: str):
    """Rehydrate a saved field (with reconstructions) for reporting."""
    from .assembly import CavitySolver

    data = np.load(path)
    cfg = CaseConfig(re=float(data["re"]), n=int(data["n"]), D=float(data["d"]),
                     U=float(data["uu"])).finalize()
    mesh = build_semicircle_mesh(cfg.D, cfg.n)
    sim = CavitySolver(cfg, mesh)
    sim.u = data["u"]
    sim.v = data["v"]
    sim.p = data["p"]
    sim.uy = data["uy"]
    sim.vx = data["vx"]
    for _ in range(3):  # settle the lagged estimates for the reconstruction
        sim._ru = sim.rec.full(sim.u, sim.bc_u, sim.est_u)
        sim._rv = sim.rec.full(sim.v, sim.bc_v, sim.est_v)
        sim._rp = sim.rec.full(sim.p, sim.bc_p, sim.est_p)
        sim.est_u, sim.est_v, sim.est_p = sim._ru.est, sim._rv.est, sim._rp.est
    return sim.fields()


def cmd_run(cfg: CaseConfig) -> int:
    try:
        fields, state = run_case(cfg)
    except Exception as e:
        dump = os.path.join(cfg.out_dir, "diagnostic.txt")
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(dump, "w") as f:
            f.write(f"solver failure: {e}\n")
        print(f"solver failure: {e} (diagnostic at {dump})", file=sys.stderr)
        return 2
    return 0 if state.converged else 1


def sweep_report(results: dict[int, dict[str, float]], ns: list[int]) -> str:
    """Error/observed-order table in the benchmark layout."""
    lines = ["variable," + ",".join(
        [f"err_n{n}" for n in ns] + [f"order_{a}to{b}" for a, b in zip(ns, ns[1:])])]
    for var in FACE_ORDER_VARS + CELL_ORDER_VARS:
        row = [var]
        for n in ns:
            row.append(f"{results[n][var]:.6e}")
        for a, b in zip(ns, ns[1:]):
            o = compute_error_and_order(results[a][var], a, results[b][var], b)
            row.append("exact" if isinstance(o, str) else f"{o:.2f}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg: CaseConfig) -> int:
    ns = sorted(cfg.sweep or (cfg.n,))
    n_ref = 2 * ns[-1]
    os.makedirs(cfg.out_dir, exist_ok=True)
    states = {}
    failures = []
    for n in list(ns) + [n_ref]:
        sub = CaseConfig.from_text(cfg.to_text())
        sub.n = n
        from .solver import stable_params
        sub.dt, sub.alpha_p = stable_params(sub.re if sub.re else 100.0, n, sub.D, sub.U)
        sub.nu = None if sub.re is not None else sub.nu
        sub.finalize()
        try:
            states[n], _ = run_case(sub, tag=f"n{n}")
        except Exception as e:
            failures.append((n, str(e)))
            _say(cfg, f"n={n} FAILED: {e}")
    if n_ref not in states:
        print("reference run failed; no order table", file=sys.stderr)
        return 2
    results = {}
    for n in ns:
        if n in states:
            results[n] = reference_errors(states[n], states[n_ref])
    ok_ns = [n for n in ns if n in results]
    table = sweep_report(results, ok_ns) if len(ok_ns) >= 1 else "no results\n"
    if failures:
        table += "".join(f"# FAILED n={n}: {msg}\n" for n, msg in failures)
    with open(os.path.join(cfg.out_dir, "sweep.csv"), "w", newline="\n") as f:
        f.write(table)
    _say(cfg, table)
    return 0 if not failures else 1


def cmd_report(cfg: CaseConfig) -> int:
    path = os.path.join(cfg.out_dir, "state.npz")
    if not os.path.exists(path):
        print(f"no saved state at {path}", file=sys.stderr)
        return 2
    fields = load_state(path)
    _write_artifacts(cfg, fields, cfg.out_dir)
    _say(cfg, f"report rewritten from {path}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cfg = load_config(args)
    if args.command == "mesh":
        return cmd_mesh(cfg)
    if args.command == "run":
        return cmd_run(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg)
    return cmd_report(cfg)


if __name__ == "__main__":
    sys.exit(main())
