"""Command-line front end: simulate / couple / ode / bounds / bench /
fastsum-bench, with JSON configs, CSV/PBM/JSON emission and a run
manifest capturing content digests of every output file.
"""

import argparse
import hashlib
import json
import os
import platform
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import fastsum
from .coupling import (bench_speedup, couple_run, fit_delta,
                       normalized_error_experiment)
from .models import ConfigError, IsingKac2DModel, load_model
from .ode import BoundReport, solve_error_field, solve_rho
from .simulate import (InitSpec, SimConfig, simulate_euler, simulate_exact,
                       simulate_independent_sites, simulate_midpoint,
                       simulate_poisson_tau_leap)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


# ---------------------------------------------------------------------------
# output helpers

def fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_pbm(path, bits):
    """P4 (binary) bitmap; bits is a 2-d {0,1} array, row-major."""
    bits = np.asarray(bits, dtype=np.uint8)
    h, w = bits.shape
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode())
        fh.write(packed.tobytes())


def read_pbm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P4"):
        raise ValueError(f"{path}: not a P4 bitmap")
    parts = data.split(b"\n", 2)
    w, h = (int(v) for v in parts[1].split())
    row_bytes = (w + 7) // 8
    raw = np.frombuffer(parts[2][: row_bytes * h], dtype=np.uint8)
    bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w]
    return bits


def _snapshot_shape(model, state):
    side = getattr(model, "side", None)
    if side is not None:
        return state.reshape(side, side)
    return state.reshape(1, -1)


class _Run:
    """Collects outputs and writes the manifest last."""

    def __init__(self, out_dir, config_echo):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config_echo
        self.files = []
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def finish(self, status="ok", error=None):
        outputs = []
        for p in self.files:
            if p.exists():
                digest = hashlib.sha256(p.read_bytes()).hexdigest()
                outputs.append({"path": p.name, "sha256": digest})
        try:
            git = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                capture_output=True, text=True, timeout=5,
                cwd=os.path.dirname(__file__)).stdout.strip() or None
        except Exception:
            git = None
        manifest = {
            "config": self.config,
            "status": status,
            "error": error,
            "git_describe": git,
            "host": {"node": platform.node(),
                     "python": platform.python_version(),
                     "machine": platform.machine()},
            "started": self.started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": outputs,
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")


# ---------------------------------------------------------------------------
# config plumbing

def _resolve_delta(args, n):
    """--delta accepts a number or 'n^-0.5' style power expressions."""
    if args.delta is None:
        return None
    text = str(args.delta)
    if text.startswith("n^"):
        d = float(n) ** float(text[2:])
    else:
        d = float(text)
    if args.fit_delta:
        d = fit_delta(args.t_end, d)
    return d


def load_config(args):
    """Load the model and build a validated SimConfig from CLI flags."""
    model = load_model(args.model)
    delta = _resolve_delta(args, model.size())
    method = getattr(args, "method", None)
    if method in ("euler", "midpoint", "independent", "tau-leap") \
            and delta is None:
        raise ConfigError(f"method {method!r} requires --delta")
    sample_every = args.sample_every
    if sample_every is None:
        sample_every = 10 * delta if delta is not None else args.t_end / 50
    cfg = SimConfig(
        model=model, t_end=args.t_end, delta=delta, seed=args.seed,
        sample_every=sample_every,
        init=InitSpec.parse(args.init),
        record_snapshots=getattr(args, "snapshots", "none") == "pbm")
    return model, cfg


def _add_common(p, with_method=False):
    p.add_argument("--model", required=True, help="model config JSON path")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--delta", default=None,
                   help="step size; accepts e.g. 0.02 or n^-0.5")
    p.add_argument("--fit-delta", action="store_true",
                   help="shrink delta so the grid lands exactly on t-end")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-every", type=float, default=None)
    p.add_argument("--init", default="bernoulli:0.5",
                   help="bernoulli:P or fraction:P")
    p.add_argument("--snapshots", choices=("none", "pbm"), default="none")
    p.add_argument("--out", default="run-out", help="output directory")
    if with_method:
        p.add_argument("--method", required=True,
                       choices=("exact", "euler", "midpoint", "independent",
                                "tau-leap"))


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, run):
    model, cfg = load_config(args)
    sims = {"exact": simulate_exact, "euler": simulate_euler,
            "midpoint": simulate_midpoint,
            "tau-leap": simulate_poisson_tau_leap}
    if args.method == "independent":
        rho = solve_rho(model, cfg.initial_state().astype(float),
                        cfg.t_end, cfg.delta)
        rec = simulate_independent_sites(cfg, rho)
    else:
        rec = sims[args.method](cfg)
    write_csv(run.path("trajectory.csv"), ["t", "occupancy", "events_cum"],
              zip(rec.times, rec.occupancy, rec.events_cum))
    if rec.snapshots is not None:
        for k, snap in enumerate(rec.snapshots):
            write_pbm(run.path(f"state_{k:06d}.pbm"),
                      _snapshot_shape(model, snap))
    if args.method == "tau-leap":
        with open(run.path("tau_leap.json"), "w") as fh:
            json.dump({"invalid_state_count": rec.invalid_state_count,
                       "event_count": rec.event_count}, fh, indent=2)
            fh.write("\n")


def cmd_couple(args, run):
    model, cfg = load_config(args)
    methods = tuple(m.strip() for m in args.methods.split(","))
    deltas = {}
    for m in methods:
        if m != "exact":
            deltas[m] = cfg.delta
    if args.delta_midpoint is not None and "midpoint" in methods:
        deltas["midpoint"] = float(args.delta_midpoint)
    series, records = couple_run(cfg, methods=methods, deltas=deltas)
    approx = [m for m in methods if m != "exact"]
    header = ["t"]
    cols = [series.times]
    for m in approx:
        header += [f"frac_diff_{m}", f"cummax_{m}"]
        cols += [series.frac_diff[m], series.cummax_frac_diff[m]]
    write_csv(run.path("errors.csv"), header, zip(*cols))
    if cfg.record_snapshots:
        for m, rec in records.items():
            for k, snap in enumerate(rec.snapshots):
                write_pbm(run.path(f"{m}_{k:06d}.pbm"),
                          _snapshot_shape(model, snap))
            if m != "exact":
                for k in range(rec.snapshots.shape[0]):
                    diff = rec.snapshots[k] ^ records["exact"].snapshots[k]
                    write_pbm(run.path(f"diff_{m}_{k:06d}.pbm"),
                              _snapshot_shape(model, diff))
    if args.replicates > 1:
        workers = int(os.environ.get("SPINSIM_THREADS", "1"))
        t, mean, se, pred = normalized_error_experiment(
            cfg, args.replicates, workers=workers)
        write_csv(run.path("normerr.csv"),
                  ["t", "observed_mean", "observed_stderr", "predicted"],
                  zip(t, mean, se, pred))


def cmd_ode(args, run):
    model, cfg = load_config(args)
    h = args.h if args.h is not None else \
        min(cfg.delta or np.inf, cfg.t_end / 2000)
    rho = solve_rho(model, cfg.initial_state().astype(float), cfg.t_end, h)
    write_csv(run.path("rho.csv"), ["t", "mean_rho", "min", "max"],
              ((t, s.mean(), s.min(), s.max())
               for t, s in zip(rho.times, rho.states)))
    efield = solve_error_field(model, rho, cfg.t_end, h)
    write_csv(run.path("efield.csv"), ["t", "mean_E", "sup_abs_E"],
              ((t, s.mean(), np.abs(s).max())
               for t, s in zip(efield.times, efield.states)))


def cmd_bounds(args, run):
    model = load_model(args.model)
    delta = _resolve_delta(args, model.size())
    if delta is None:
        raise ConfigError("bounds requires --delta")
    report = BoundReport.evaluate(model.norm_constants(), model.size(),
                                  delta, args.t_end)
    with open(run.path("bounds.json"), "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")


def cmd_bench(args, run):
    with open(args.model) as fh:
        base = json.load(fh)
    if base.get("type") != "ising-kac-2d":
        raise ConfigError("bench expects an ising-kac-2d model config")
    sides = [int(s) for s in args.sides.split(",")]

    def model_for_side(side):
        cfg = dict(base)
        cfg["side"] = side
        return load_model(cfg)

    rows = bench_speedup(model_for_side, sides, t_end=args.t_end,
                         reps=args.reps, seed=args.seed)
    write_csv(run.path("bench.csv"),
              ["m", "n", "side", "method", "delta", "mean_wall_ns",
               "stderr_wall_ns", "speedup_vs_exact"],
              ([r[k] for k in ("m", "n", "side", "method", "delta",
                               "mean_wall_ns", "stderr_wall_ns",
                               "speedup_vs_exact")] for r in rows))


def cmd_fastsum_bench(args, run):
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    rng = np.random.default_rng(args.seed)
    for n in sizes:
        kernel = fastsum.KernelSpec.gaussian(
            (n,), a=(args.sigma / n) ** 2,
            normalization=2 * args.sigma / (n * np.sqrt(np.pi)))
        x = rng.random(n)
        dense = kernel.dense_matrix()
        t0 = time.perf_counter_ns()
        ref = fastsum.sum_dense(dense, x)
        rows.append((n, "dense", time.perf_counter_ns() - t0, 0.0))
        kernel.matvec(x)                      # warm the cached FFT plan
        t0 = time.perf_counter_ns()
        v = fastsum.convolve_fft(kernel, x)
        rows.append((n, "fft", time.perf_counter_ns() - t0,
                     float(np.abs(v - ref).max())))
        pts = np.arange(n, dtype=float) / n
        cfgt = fastsum.TreeConfig(opening_angle=args.opening_angle)
        t0 = time.perf_counter_ns()
        v = (2 * args.sigma / (n * np.sqrt(np.pi))
             * fastsum.sum_tree(pts, args.sigma ** 2, x, cfgt))
        rows.append((n, "tree", time.perf_counter_ns() - t0,
                     float(np.abs(v - ref).max())))
    write_csv(run.path("fastsum_bench.csv"),
              ["n", "strategy", "wall_ns", "max_abs_err_vs_dense"], rows)


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(
        prog="spinsim",
        description="Simulation toolkit for finite long-range spin systems")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one sampler")
    _add_common(p, with_method=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("couple", help="coupled error measurement")
    _add_common(p)
    p.add_argument("--methods", default="exact,euler,midpoint")
    p.add_argument("--delta-midpoint", default=None)
    p.add_argument("--replicates", type=int, default=1)
    p.set_defaults(fn=cmd_couple)

    p = sub.add_parser("ode", help="deterministic companions")
    _add_common(p)
    p.add_argument("--h", type=float, default=None, help="solver step")
    p.set_defaults(fn=cmd_ode)

    p = sub.add_parser("bounds", help="evaluate analytic error bounds")
    p.add_argument("--model", required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--fit-delta", action="store_true")
    p.add_argument("--out", default="run-out")
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("bench", help="wall-time speedup experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--sides", default="32,64,128")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run-out")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("fastsum-bench", help="potential summation benchmark")
    p.add_argument("--sizes", default="256,1024,4096")
    p.add_argument("--sigma", type=float, default=20.0)
    p.add_argument("--opening-angle", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run-out")
    p.set_defaults(fn=cmd_fastsum_bench)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    echo = {k: v for k, v in vars(args).items() if k != "fn"}
    run = _Run(args.out, echo)
    try:
        args.fn(args, run)
    except ConfigError as exc:
        run.finish(status="failed", error=str(exc))
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        run.finish(status="failed", error=f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    run.finish()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
