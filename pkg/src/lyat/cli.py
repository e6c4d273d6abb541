"""Command-line entry point: single runs, seed sweeps, gradient checks,
dimension audits.

Exit codes: 0 success, 2 config error, 3 numeric abort, 4 gradient check
failure.  Errors are printed as a single machine-parseable line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigError, IntegratorStateError, NumericError, RankError
from .jacobian import fd_jacobian, jacobian
from .manifest import (RunManifest, build_components, config_hash,
                       load_config_file, resolve_config)
from .params import ArchConfig, dim_of, group_dims, init_theta
from .sim import run_episode, summary_dict, write_summary_json, write_trace_csv
from .transformer import WindowState, positional_encoding

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECK = 4

# small architecture for gradient checks: p = 488, cheap enough for a full
# central-difference sweep
GRADCHECK_ARCH = dict(
    n=2, m=2, s=1, tau=2, layers=1, heads=1, d_f=3,
    theta_bar=10.0, init_gain=0.6,
)


def _fail(kind: str, message: str, code: int) -> int:
    message = " ".join(str(message).split())
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def _resolve(args) -> dict:
    resolved = load_config_file(args.config) if args.config else resolve_config(None)
    if getattr(args, "seed", None) is not None:
        resolved["sim"]["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        resolved["sim"]["duration"] = args.duration
    if getattr(args, "baseline", False):
        resolved["sim"]["baseline"] = True
    if getattr(args, "no_saturation", False):
        resolved["ctrl"]["saturate"] = False
    return resolved


def _out_dir(args) -> Path:
    out = os.environ.get("LYAT_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _run_one(resolved: dict, out_dir: Path) -> dict:
    """Execute one episode described by a fully resolved tree and write its
    trace and summary; returns the summary."""
    arch, adapt, ctrl, plant, ref, sim = build_components(resolved)
    mode = "baseline" if sim.baseline else "adaptive"
    seed = sim.seed
    trace_name = f"trace_{mode}_seed{seed}.csv"
    summary_name = f"summary_{mode}_seed{seed}.json"
    cut = sim.transient_cutoff
    try:
        trace = run_episode(arch, adapt, ctrl, plant, ref, sim)
    except NumericError as err:
        if err.trace is not None:
            write_trace_csv(err.trace, out_dir / trace_name)
        raise
    write_trace_csv(trace, out_dir / trace_name)
    files = [trace_name, summary_name]
    if sim.checkpoint_path:
        files.append(sim.checkpoint_path)
    summary = summary_dict(trace, config_hash(resolved), seed,
                           files=files, baseline=sim.baseline, cutoff=cut)
    write_summary_json(summary, out_dir / summary_name)
    return summary


def cmd_run(args) -> int:
    resolved = _resolve(args)
    out_dir = _out_dir(args)
    summary = _run_one(resolved, out_dir)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _sweep_worker(payload):
    resolved, out_dir = payload
    return _run_one(resolved, Path(out_dir))


def cmd_sweep(args) -> int:
    resolved = _resolve(args)
    out_dir = _out_dir(args)
    manifest = RunManifest(config=resolved, seeds=list(range(args.seeds)),
                           out_dir=out_dir, jobs=args.jobs)
    payloads = [(manifest.for_seed(s), str(out_dir)) for s in manifest.seeds]
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            summaries = list(pool.map(_sweep_worker, payloads))
    else:
        summaries = [_sweep_worker(p) for p in payloads]
    mode = "baseline" if resolved["sim"]["baseline"] else "adaptive"
    sweep_name = f"sweep_{mode}.json"
    files = sorted(set(f for s in summaries for f in s["files"])) + [sweep_name]
    aggregate = {
        "config_hash": manifest.hash,
        "seeds": manifest.seeds,
        "baseline": resolved["sim"]["baseline"],
        "episodes": summaries,
        "files": files,
    }
    write_summary_json(aggregate, out_dir / sweep_name)
    print(json.dumps({"episodes": len(summaries), "out": str(out_dir)}))
    return EXIT_OK


GRADCHECK_RTOL = 1e-5
# absolute floor at the roundoff level of central differences on O(1)
# outputs: eps * |phi| / h ~ 2e-10 at h = 1e-6
GRADCHECK_ATOL = 1e-9


def gradcheck_report(arch: ArchConfig, seed: int, h: float) -> dict:
    """Analytic Jacobian vs central differences on one random instance.

    Per-column comparison with tolerance ``rtol * |column| + atol``; the
    absolute term absorbs finite-difference roundoff on columns that are
    themselves at the noise floor.
    """
    rng = np.random.default_rng(seed)
    theta = init_theta(arch, seed=seed)
    window = WindowState.initial(arch, decoder_noise_scale=0.0)
    window.zeta_enc = rng.standard_normal(arch.enc_width)
    window.phi_hist = 0.5 * rng.standard_normal(arch.dec_width)
    pe = positional_encoding(arch)

    J = jacobian(window, theta, pe, arch)
    J_fd, excluded = fd_jacobian(window, theta, pe, arch, h=h)

    diff = np.linalg.norm(J - J_fd, axis=0)
    denom = np.maximum(np.linalg.norm(J, axis=0), np.linalg.norm(J_fd, axis=0))
    rel = diff / np.maximum(denom, GRADCHECK_ATOL / GRADCHECK_RTOL)
    rel[excluded] = 0.0
    return {
        "p": int(theta.layout.p),
        "h": h,
        "max_rel_error": float(rel.max()),
        "excluded_kink_coordinates": int(excluded.sum()),
        "checked_coordinates": int((~excluded).sum()),
        "rtol": GRADCHECK_RTOL,
        "atol": GRADCHECK_ATOL,
        "pass": bool(rel.max() <= GRADCHECK_RTOL),
    }


def cmd_gradcheck(args) -> int:
    if args.config:
        resolved = load_config_file(args.config)
        arch = build_components(resolved)[0]
    else:
        arch = ArchConfig(**GRADCHECK_ARCH)
    report = gradcheck_report(arch, seed=args.seed if args.seed is not None else 0,
                              h=args.h)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if report["pass"] else EXIT_CHECK


def cmd_dims(args) -> int:
    resolved = _resolve(args)
    arch = build_components(resolved)[0]
    print(f"p = {dim_of(arch)}")
    for kind, size in group_dims(arch).items():
        print(f"  {kind}: {size}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lyat",
        description="Adaptive-transformer tracking controller: closed-loop "
                    "stochastic simulation and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--out", type=str, default="lyat_out",
                       help="output directory (env LYAT_OUT overrides)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--baseline", action="store_true",
                       help="freeze the estimate and zero the network output")
        p.add_argument("--duration", type=float, default=None, help="episode length [s]")
        p.add_argument("--no-saturation", action="store_true",
                       help="disable command clamping")

    p_run = sub.add_parser("run", help="run a single episode")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a multi-seed sweep")
    common(p_sweep)
    p_sweep.add_argument("--seeds", type=int, required=True, help="number of seeds (0..k-1)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel episodes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_grad = sub.add_parser("gradcheck",
                            help="compare the analytic Jacobian against finite differences")
    p_grad.add_argument("--config", type=str, default=None,
                        help="use this config's architecture instead of the built-in tiny one")
    p_grad.add_argument("--seed", type=int, default=None)
    p_grad.add_argument("--h", type=float, default=1e-6, help="finite-difference step")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_dims = sub.add_parser("dims", help="print the parameter dimension and group sizes")
    p_dims.add_argument("--config", type=str, default=None)
    p_dims.set_defaults(func=cmd_dims)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        return _fail("config", err, EXIT_CONFIG)
    except (NumericError, RankError, IntegratorStateError) as err:
        return _fail("numeric", err, EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
