"""Command line: solve | sweep | verify | inspect.

Exit codes: 0 success, 1 divergence or failed checks, 2 usage error or
corrupted checkpoint.  CNSWAVE_THREADS caps the BLAS/OpenMP thread count
(effective when set before numpy is first imported).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

THREAD_ENV = "CNSWAVE_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("cnswave")


def _apply_threads():
    n = os.environ.get(THREAD_ENV)
    if n:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cnswave", description="Forced viscous compressible traveling waves.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="INI run configuration")
        sp.add_argument("--out", help="output directory (overrides [output] directory)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("solve", help="solve for one wave speed")
    common(sp)
    sp.add_argument("--resume", help="checkpoint to warm start from (Newton)")
    sp = sub.add_parser("sweep", help="continuation over the wave speed list")
    common(sp)
    sp.add_argument("--resume", help="checkpoint to warm start the first speed from")
    sp = sub.add_parser("verify", help="run the quick self-checks")
    common(sp, config_required=False)
    sp.add_argument("family", nargs="?", default="all", choices=["all", "identities", "linear", "engine"])
    sp = sub.add_parser("inspect", help="print a checkpoint header and its residual")
    sp.add_argument("checkpoint")
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


# ------------------------------------------------------------------- solve
def _stopping(cfg):
    from .nashmoser import Stopping

    return Stopping(cfg.max_steps, cfg.residual_tol, monitor_index=cfg.monitor_index)


def _solve_one(cfg, model, gamma, initial=None, method=None):
    from .solver import solve_traveling_wave

    method = method or cfg.method
    if initial is not None and method != "newton":
        method = "newton"
    center = cfg.forcing_center if cfg.gauge == "whole-line" else None
    return solve_traveling_wave(
        model, cfg.forcing(gamma), method, _stopping(cfg), initial=initial, gauge_center=center
    )


def _write_run(outdir: Path, cfg, model, sol, extra=None):
    from . import diagnostics as dg
    from .persistence import profile_hash, save_checkpoint, write_manifest, write_surface_csv

    outdir.mkdir(parents=True, exist_ok=True)
    forcing = cfg.forcing(sol.gamma)
    entries = dict(cfg.descriptor())
    entries["run.gamma"] = sol.gamma
    entries["run.method"] = sol.method
    entries["run.converged"] = sol.converged
    entries["run.steps"] = sol.report.steps
    entries["run.residual"] = sol.residual
    entries["run.residual_history"] = [float(r) for r in sol.report.residuals]
    entries["run.message"] = sol.report.message or "ok"
    entries["run.profile_hash"] = profile_hash(model)
    if extra:
        entries.update(extra)
    try:
        bal = dg.power_balance(model, sol.state, forcing)
        for k, v in bal.as_dict().items():
            entries[f"balance.{k}"] = v
        san = dg.sanity_suite(model, sol.state, forcing, cfg.forcing_center)
        for k, v in san.items():
            entries[f"sanity.{k}"] = v
    except (ValueError, ArithmeticError) as exc:
        entries["diagnostics.error"] = str(exc)
    write_manifest(outdir / "manifest.txt", entries)
    (outdir / "log.jsonl").write_text("\n".join(sol.report.to_lines()) + "\n")
    write_surface_csv(outdir / "surface.csv", model.grid, sol.state.eta)
    meta = {
        "gamma": sol.gamma,
        "grid": {"L": model.grid.L, "nx": model.grid.nx, "nz": model.grid.nz, "b": model.grid.b},
        "config": {k: (v if isinstance(v, (int, float, str)) else str(v)) for k, v in cfg.descriptor().items()},
        "profile_hash": profile_hash(model),
        "solver": {"method": sol.method, "steps": sol.report.steps, "residual": sol.residual},
    }
    save_checkpoint(outdir / "checkpoint.bin", sol.state, meta)
    return entries


def _load_resume(path, model):
    from .persistence import ConfigError, load_checkpoint, profile_hash

    state, meta = load_checkpoint(path)
    g = model.grid
    if state.q.shape != (g.nx, g.nz):
        raise ConfigError("checkpoint grid does not match the configuration")
    if meta.get("profile_hash") != profile_hash(model):
        log.warning("checkpoint profile hash differs from the configured physics")
    return state


def cmd_solve(args, cfg) -> int:
    model = cfg.model()
    initial = _load_resume(args.resume, model) if args.resume else None
    if len(cfg.gammas) != 1:
        log.warning("solve uses the first wave speed; use sweep for lists")
    sol = _solve_one(cfg, model, cfg.gammas[0], initial)
    out = Path(args.out or cfg.out)
    _write_run(out, cfg, model, sol)
    print(f"gamma={sol.gamma!r} method={sol.method} converged={sol.converged} "
          f"steps={sol.report.steps} residual={sol.residual:.3e}")
    if not sol.converged:
        print(f"divergence: {sol.report.message}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args, cfg) -> int:
    from .persistence import write_comparison_csv, write_manifest

    model = cfg.model()
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    prev = _load_resume(args.resume, model) if args.resume else None
    profiles, summary, failed = {}, {}, 0
    for i, gamma in enumerate(cfg.gammas):
        try:
            sol = _solve_one(cfg, model, gamma, prev)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            summary[f"gamma[{i}].error"] = str(exc)
            failed += 1
            continue
        sub = out / f"gamma_{i:02d}"
        _write_run(sub, cfg, model, sol, {"run.warm_start": prev is not None})
        summary[f"gamma[{i}].value"] = gamma
        summary[f"gamma[{i}].converged"] = sol.converged
        summary[f"gamma[{i}].steps"] = sol.report.steps
        summary[f"gamma[{i}].residual"] = sol.residual
        summary[f"gamma[{i}].warm_start"] = prev is not None
        print(f"gamma={gamma!r} converged={sol.converged} steps={sol.report.steps} residual={sol.residual:.3e}")
        if sol.converged:
            profiles[gamma] = sol.state.eta
            prev = sol.state
        else:
            failed += 1
    if profiles:
        write_comparison_csv(out / "comparison.csv", model.grid, profiles)
    write_manifest(out / "sweep.txt", summary)
    return 1 if failed else 0


# ------------------------------------------------------------------ verify
def cmd_verify(args, cfg) -> int:
    from .selfcheck import run_checks

    results = run_checks(args.family, seed=args.seed)
    bad = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        bad += not ok
    return 1 if bad else 0


# ----------------------------------------------------------------- inspect
def cmd_inspect(args) -> int:
    import json

    from .operators import evaluate
    from .persistence import config_from_descriptor, load_checkpoint
    from .solver import data_norm

    state, meta = load_checkpoint(args.checkpoint)
    print(json.dumps(meta, indent=2, sort_keys=True))
    print(f"q {state.q.shape} u {state.u.shape} eta {state.eta.shape}")
    print(f"max |eta| = {abs(state.eta).max():.6e}")
    cfg = config_from_descriptor(meta["config"])
    model = cfg.model()
    F = evaluate(model, state, cfg.forcing(meta["gamma"]))["F"]
    print(f"residual = {data_norm(model.grid, F, cfg.monitor_index):.6e}")
    return 0


def main(argv=None) -> int:
    _apply_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    from .persistence import CheckpointError, ConfigError, load_config

    try:
        if args.verb == "inspect":
            return cmd_inspect(args)
        cfg = load_config(args.config) if getattr(args, "config", None) else None
        if args.verb == "solve":
            return cmd_solve(args, cfg)
        if args.verb == "sweep":
            return cmd_sweep(args, cfg)
        return cmd_verify(args, cfg)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
