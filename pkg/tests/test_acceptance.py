"""End-to-end acceptance checks for the whole toolkit.

Each test exercises one headline guarantee at desk scale and prints a
single ``[ACCEPTANCE] PASS/FAIL`` line with the measured numbers; run

    pytest tests/test_acceptance.py -v -s

to see the per-criterion report.  The statistical experiments use fixed
seeds, so every run is reproducible bit for bit.
"""

import json
import os
import time

import numpy as np
import pytest
from scipy.linalg import expm

from spinsim.cli import EXIT_OK, main as cli_main
from spinsim.coupling import (bench_speedup, couple_run, fit_delta,
                              normalized_error_experiment)
from spinsim.models import GaussConv1DModel, IsingKac2DModel
from spinsim.ode import (e_growth_bound, euler_bound, solve_error_field,
                         solve_rho)
from spinsim.simulate import (InitSpec, SimConfig, simulate_euler,
                              simulate_exact, simulate_midpoint,
                              simulate_poisson_tau_leap,
                              transition_probability)

WORKERS = min(8, os.cpu_count() or 1)


def _report(name, ok, detail):
    print(f"[ACCEPTANCE] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _pool_map(fn, jobs):
    if WORKERS > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=WORKERS) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------------------
# 1. two-state transition probability vs matrix exponential

def test_01_two_state_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        q_up, q_down = rng.uniform(0.0, 3.0, 2)
        delta = rng.uniform(0.0, 2.0)
        gen = np.array([[-q_up, q_up], [q_down, -q_down]])
        p = expm(gen * delta)
        for eta in (0, 1):
            got = transition_probability(q_up, q_down, eta, delta)
            worst = max(worst, abs(got - p[eta, 1]))
    dt = time.perf_counter() - t0
    _report("two-state oracle", worst < 1e-12 and dt < 1.0,
            f"max |err| = {worst:.2e} over 100 triples, {dt:.2f} s")


# ---------------------------------------------------------------------------
# 2. FFT potentials vs dense oracle

def test_02_fastsum_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (256, 1024, 4096):
        for periodic in (False, True):
            model = GaussConv1DModel(n, sigma=20.0, periodic=periodic)
            x = rng.random(n)
            zero = model.potentials(np.zeros(n))
            got = model.potentials(x) - zero
            want = model.dense_weights() @ x
            worst = max(worst, np.abs(got - want).max())
    dt = time.perf_counter() - t0
    _report("fast-sum exactness", worst < 1e-10 and dt < 5.0,
            f"max |fft - dense| = {worst:.2e} "
            f"(n in 256/1024/4096, both modes), {dt:.2f} s")


# ---------------------------------------------------------------------------
# 3. binary validity across simulators + tau-leap failure mode

def test_03_validity_and_tau_leap():
    from conftest import ConstantRateModel
    t0 = time.perf_counter()
    model = GaussConv1DModel(100, sigma=4.0)
    total = 0
    for sim in (simulate_exact, simulate_euler, simulate_midpoint,
                simulate_poisson_tau_leap):
        cfg = SimConfig(model=model, t_end=25.0, delta=0.01, seed=7,
                        sample_every=0.01, init=InitSpec("fraction", 0.2),
                        record_snapshots=True)
        rec = sim(cfg)
        assert set(np.unique(rec.snapshots)) <= {0, 1}
        total += rec.snapshots.shape[0]
    assert total >= 10_000

    big = ConstantRateModel(10_000, 1.0, 1.0)
    cfg = SimConfig(model=big, t_end=1.0, delta=0.05, seed=0,
                    sample_every=0.25, init=InitSpec("bernoulli", 0.5))
    invalid = simulate_poisson_tau_leap(cfg).invalid_state_count
    dt = time.perf_counter() - t0
    _report("validity invariant", invalid > 0 and dt < 30.0,
            f"{total} sampled states all binary; tau-leap "
            f"invalid_state_count = {invalid} at n=1e4, delta=0.05, "
            f"{dt:.1f} s")


# ---------------------------------------------------------------------------
# 4. Theorem-1 style dominance and first-order scaling

THM1_N = 512
THM1_D = fit_delta(1.0, THM1_N ** -0.5)


def _thm1_one(seed):
    model = GaussConv1DModel(THM1_N, sigma=20.0)
    out = []
    for d in (THM1_D, THM1_D / 2):
        cfg = SimConfig(model=model, t_end=1.0, delta=d, seed=seed,
                        sample_every=1.0, init=InitSpec("fraction", 0.1),
                        align_samples=False)
        series, _ = couple_run(cfg, methods=("exact", "euler"))
        out.append(series.frac_diff["euler"][-1] * THM1_N)
    return out


def test_04_dominance_and_scaling():
    t0 = time.perf_counter()
    sums = np.array(_pool_map(_thm1_one, [1000 + r for r in range(200)]))
    mean_d, mean_half = sums.mean(axis=0)
    nc = GaussConv1DModel(THM1_N, sigma=20.0).norm_constants()
    bound_d = euler_bound(nc, THM1_N, THM1_D, 1.0)
    bound_half = euler_bound(nc, THM1_N, THM1_D / 2, 1.0)
    factor = mean_d / mean_half
    dt = time.perf_counter() - t0
    ok = (mean_d <= bound_d and mean_half <= bound_half
          and 1.5 <= factor <= 2.8 and dt < 300.0)
    _report("theorem-1 dominance/scaling", ok,
            f"mean sum|diff| = {mean_d:.2f} (bound {bound_d:.2e}), "
            f"halving delta scales by {factor:.2f} in [1.5, 2.8], {dt:.0f} s")


# ---------------------------------------------------------------------------
# 5. transient vs near-stationary cummax comparison

FIG12_N = 2000
FIG12_T = 3.0
FIG12_D3 = fit_delta(FIG12_T, FIG12_N ** (-1.0 / 3.0))
FIG12_D2 = fit_delta(FIG12_T, FIG12_N ** -0.5)


def _fig12_one(args):
    seed, kind, delta = args
    model = GaussConv1DModel(FIG12_N, sigma=20.0)
    init = InitSpec("fraction", 0.1) if kind == "transient" \
        else InitSpec("bernoulli", 0.5)
    cfg = SimConfig(model=model, t_end=FIG12_T, delta=delta, seed=seed,
                    sample_every=0.25, init=init, align_samples=False)
    series, _ = couple_run(cfg, methods=("exact", "euler", "midpoint"),
                           deltas={"euler": delta, "midpoint": delta})
    return (series.cummax_frac_diff["euler"][-1],
            series.cummax_frac_diff["midpoint"][-1])


def test_05_transient_and_stationary_cummax():
    t0 = time.perf_counter()
    res = np.array(_pool_map(
        _fig12_one, [(2000 + r, "transient", FIG12_D3) for r in range(20)]))
    med_e3, med_m3 = np.median(res, axis=0)

    res = np.array(_pool_map(
        _fig12_one, [(3000 + r, "stationary", FIG12_D2) for r in range(20)]))
    med_e2, med_m2 = np.median(res, axis=0)
    ratio = med_e2 / med_m2
    dt = time.perf_counter() - t0
    ok = (med_m3 < med_e3 and 1.0 / 1.5 <= ratio <= 1.5 and dt < 600.0)
    _report("transient/stationary cummax", ok,
            f"transient d=n^-1/3: midpoint {med_m3:.4f} < euler {med_e3:.4f}; "
            f"stationary d=n^-1/2: euler/midpoint = {ratio:.2f} "
            f"in [0.67, 1.5], {dt:.0f} s")


# ---------------------------------------------------------------------------
# 6. replicate-averaged normalized error vs first-order prediction

FIG3_N = 10_000
FIG3_T = 0.5
FIG3_GRID = FIG3_T / 30
FIG3_D = fit_delta(FIG3_GRID, FIG3_N ** -0.5)


def test_06_normalized_error_prediction():
    t0 = time.perf_counter()
    model = GaussConv1DModel(FIG3_N, sigma=20.0)
    cfg = SimConfig(model=model, t_end=FIG3_T, delta=FIG3_D, seed=31,
                    sample_every=FIG3_GRID, init=InitSpec("fraction", 0.1))
    times, mean, se, pred = normalized_error_experiment(
        cfg, replicates=50, workers=WORKERS)
    z = (mean[1:] - pred[1:]) / se[1:]
    worst = np.abs(z).max()

    # equilibrium start: zero drift, so the predicted curve stays at zero
    rho = np.full(FIG3_N, 0.5)
    for _ in range(200):
        up = model.rates_up(rho)
        rho = up / (up + 1.0)
    assert np.abs(model.drift(rho)).max() < 1e-12
    sol = solve_rho(model, rho, FIG3_T, FIG3_GRID / 4)
    efield = solve_error_field(model, sol, FIG3_T, FIG3_GRID / 4)
    flat = np.abs(efield.states).max()
    dt = time.perf_counter() - t0
    ok = worst <= 3.0 and flat < 1e-10 and dt < 1200.0
    _report("normalized-error prediction", ok,
            f"max |z| = {worst:.2f} over 30 grid times (50 reps, n=1e4); "
            f"equilibrium-init prediction sup = {flat:.1e}, {dt:.0f} s")


# ---------------------------------------------------------------------------
# 7. Gronwall envelope on every solved instance

def test_07_gronwall_envelope():
    t0 = time.perf_counter()
    cases = [
        (GaussConv1DModel(512, sigma=20.0), InitSpec("fraction", 0.1)),
        (GaussConv1DModel(64, sigma=6.0), InitSpec("bernoulli", 0.5)),
        (IsingKac2DModel(8, beta=1.0, a_scale=40.0), InitSpec("fraction", 0.25)),
        (IsingKac2DModel(6, beta=2.0, a=1.5), InitSpec("fraction", 0.5)),
    ]
    margins = []
    for model, init in cases:
        rho0 = init.sample(model.size(), 0).astype(float)
        rho = solve_rho(model, rho0, 1.0, 0.01)
        efield = solve_error_field(model, rho, 1.0, 0.01)
        sup = np.abs(efield.states).max()
        bound = e_growth_bound(model.norm_constants(), 1.0)
        margins.append(sup / bound)
    dt = time.perf_counter() - t0
    worst = max(margins)
    _report("gronwall envelope", worst <= 1.05 and dt < 60.0,
            f"max sup|E| / e_growth_bound = {worst:.3f} over "
            f"{len(cases)} instances (5% slack), {dt:.1f} s")


# ---------------------------------------------------------------------------
# 8. RK4 convergence order on the logistic closed form

def test_08_ode_order():
    from spinsim.models import DenseModel
    t0 = time.perf_counter()
    model = DenseModel(np.array([[1.0]]), link_up="linear-with-floor",
                       link_down="constant", link_down_params={"value": 0.0})
    p0, t_end = 0.1, 2.0
    truth = p0 * np.exp(t_end) / (1 - p0 + p0 * np.exp(t_end))
    errs = [abs(solve_rho(model, np.array([p0]), t_end, h)(t_end)[0] - truth)
            for h in (0.2, 0.1, 0.05)]
    order = min(np.log2(e1 / e2) for e1, e2 in zip(errs, errs[1:]))
    dt = time.perf_counter() - t0
    _report("ode order", order >= 3.5 and dt < 10.0,
            f"observed RK4 order = {order:.2f} >= 3.5, {dt:.2f} s")


# ---------------------------------------------------------------------------
# 9. wall-time comparison on the 2-d lattice family

def test_09_lattice_speedup():
    t0 = time.perf_counter()
    rows = bench_speedup(
        lambda side: IsingKac2DModel(side, beta=1.0, a_scale=40.0),
        sides=[32, 64, 128], t_end=1.0, reps=3, seed=0)
    wall = {(r["side"], r["method"]): r["mean_wall_ns"] for r in rows}
    speed = {(r["side"], r["method"]): r["speedup_vs_exact"] for r in rows}
    for side in (32, 64):
        print(f"[ACCEPTANCE]   side {side}: euler speedup "
              f"{speed[(side, 'euler')]:.1f}x, midpoint "
              f"{speed[(side, 'midpoint')]:.1f}x (reported, not asserted)")
    ok_e = wall[(128, "euler")] < wall[(128, "exact")]
    ok_m = wall[(128, "midpoint")] < wall[(128, "exact")]
    dt = time.perf_counter() - t0
    _report("lattice speedup", ok_e and ok_m and dt < 900.0,
            f"side 128: euler {speed[(128, 'euler')]:.1f}x, midpoint "
            f"{speed[(128, 'midpoint')]:.1f}x faster than exact, {dt:.0f} s")


# ---------------------------------------------------------------------------
# 10. byte-identical reruns of every subcommand

def _mask_timing(text):
    """Blank out measured-time columns, which no rerun can reproduce."""
    lines = text.strip().split("\n")
    cols = lines[0].split(",")
    drop = [i for i, c in enumerate(cols)
            if "wall" in c or "speedup" in c]
    out = []
    for line in lines:
        parts = line.split(",")
        for i in drop:
            parts[i] = ""
        out.append(",".join(parts))
    return "\n".join(out)


def test_10_determinism(tmp_path):
    gauss = tmp_path / "gauss.json"
    gauss.write_text(json.dumps({"type": "gauss-conv-1d", "n": 40,
                                 "sigma": 4.0}))
    ising = tmp_path / "ising.json"
    ising.write_text(json.dumps({"type": "ising-kac-2d", "side": 6,
                                 "beta": 1.0, "a_scale": 40.0}))
    plans = {
        "simulate": ["simulate", "--model", str(gauss), "--method", "exact",
                     "--t-end", "0.5", "--seed", "5", "--sample-every", "0.1",
                     "--init", "bernoulli:0.5"],
        "couple": ["couple", "--model", str(gauss), "--t-end", "0.5",
                   "--delta", "0.1", "--seed", "1", "--sample-every", "0.1",
                   "--init", "fraction:0.2", "--replicates", "2"],
        "ode": ["ode", "--model", str(gauss), "--t-end", "0.5",
                "--h", "0.01", "--init", "fraction:0.3"],
        "bounds": ["bounds", "--model", str(gauss), "--delta", "n^-0.5",
                   "--t-end", "1.0"],
        "bench": ["bench", "--model", str(ising), "--sides", "4,6",
                  "--t-end", "0.1", "--reps", "1"],
        "fastsum-bench": ["fastsum-bench", "--sizes", "64,128"],
    }
    timed = {"bench", "fastsum-bench"}
    checked = 0
    for name, argv in plans.items():
        contents = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}-{tag}"
            assert cli_main(argv + ["--out", str(out)]) == EXIT_OK
            files = {}
            for p in sorted(out.iterdir()):
                if p.name == "manifest.json":
                    continue
                if p.suffix == ".csv" and name in timed:
                    files[p.name] = _mask_timing(p.read_text())
                else:
                    files[p.name] = p.read_bytes()
            contents.append(files)
        assert contents[0].keys() == contents[1].keys()
        for fname in contents[0]:
            assert contents[0][fname] == contents[1][fname], \
                f"{name}/{fname} differs between reruns"
            checked += 1
    _report("determinism", checked > 0,
            f"{checked} outputs byte-identical across reruns of all "
            f"6 subcommands (timing columns excluded in bench CSVs)")
