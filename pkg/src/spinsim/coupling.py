"""Pathwise coupling of exact and approximate samplers.

All coupled processes are driven by one bank of per-(site, direction)
unit-rate Poisson arrival streams through the random time-change
construction: a process jumps when its integrated intensity reaches the
next arrival of the corresponding stream.  Each process owns its cursors,
so the marginal law of every coupled path equals its standalone law.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .models import ConfigError
from .ode import solve_error_field, solve_rho
from .rng import TAG_BANK, make_generator
from .simulate import (SimConfig, TrajectoryRecord, _Recorder,
                       check_midpoint_delta, midpoint_predictor)


def fit_delta(t_end, delta):
    """Largest step <= delta for which the grid lands exactly on t_end."""
    return t_end / int(np.ceil(t_end / delta - 1e-9))


class PoissonStreamBank:
    """Lazily extended unit-exponential gap sequences, one per stream.

    Gap block b is a pure function of (master_seed, b); regeneration yields
    identical values.  Consumers keep their own cursors, the bank only
    stores the shared gaps.
    """

    def __init__(self, master_seed, n_streams, block=16):
        self.master_seed = int(master_seed)
        self.n_streams = int(n_streams)
        self.block = int(block)
        self._gaps = np.empty((self.n_streams, 0))
        self._nblocks = 0

    def _ensure(self, upto):
        while self._gaps.shape[1] <= upto:
            g = make_generator(self.master_seed, TAG_BANK, self._nblocks)
            fresh = g.standard_exponential((self.n_streams, self.block))
            self._gaps = np.concatenate([self._gaps, fresh], axis=1)
            self._nblocks += 1

    def gap(self, stream, index):
        self._ensure(index)
        return float(self._gaps[stream, index])

    def gaps(self, streams, indices):
        indices = np.asarray(indices)
        self._ensure(int(indices.max(initial=0)))
        return self._gaps[streams, indices]


class _StreamState:
    """Per-consumer view of the bank: remaining unit time to the next
    arrival, current intensity, and the anchor time of that pair."""

    def __init__(self, bank: PoissonStreamBank):
        self.bank = bank
        m = bank.n_streams
        self.rate = np.zeros(m)
        self.anchor = np.zeros(m)
        self.tau = bank.gaps(np.arange(m), np.zeros(m, dtype=np.int64))
        self.cursor = np.zeros(m, dtype=np.int64)

    def candidates(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self.anchor + self.tau / self.rate
        return np.where(self.rate > 0, c, np.inf)

    def reprice(self, mask, new_rate, t_now):
        """Consume elapsed unit time on ``mask`` streams, then switch them
        to ``new_rate`` anchored at t_now."""
        if not np.any(mask):
            return
        elapsed = self.rate[mask] * (t_now - self.anchor[mask])
        self.tau[mask] = np.maximum(self.tau[mask] - elapsed, 0.0)
        self.anchor[mask] = t_now
        self.rate[mask] = new_rate[mask]

    def fire(self, streams, t_now):
        """Consume the pending arrival of ``streams`` at t_now and load the
        next gap (exact, no accumulated round-off)."""
        self.cursor[streams] += 1
        self.tau[streams] = self.bank.gaps(streams, self.cursor[streams])
        self.anchor[streams] = t_now


def _stream_rates(eta, up, down):
    """Intensities of the 2n streams: (1-eta)q+ on even, eta q- on odd."""
    r = np.empty(2 * eta.size)
    r[0::2] = (1 - eta) * up
    r[1::2] = eta * down
    return r


def run_exact_with_bank(cfg: SimConfig, bank: PoissonStreamBank):
    """Exact chain driven by the shared streams; O(n) work per event."""
    t0 = time.perf_counter_ns()
    model = cfg.model
    n = model.size()
    eta = cfg.initial_state()
    rec = _Recorder(cfg)
    st = _StreamState(bank)

    v = model.potentials(eta.astype(float))

    def rates_from(v):
        sv = v + model.offset
        return model.link_up.value(sv), model.link_down.value(sv)

    up, down = rates_from(v)
    st.rate = _stream_rates(eta, up, down)
    events = 0
    flip_t, flip_s = [], []
    while True:
        cand = st.candidates()
        s = int(np.argmin(cand))
        t_next = float(cand[s])
        if not np.isfinite(t_next) or t_next > cfg.t_end:
            break
        rec.advance(t_next, eta, events, strict=True)
        j = s // 2
        delta_x = 1 - 2 * int(eta[j])
        eta[j] += delta_x
        st.fire(np.array([s]), t_next)
        sib = np.zeros(2 * n, dtype=bool)
        sib[s ^ 1] = True
        st.reprice(sib, st.rate, t_next)
        v += delta_x * model.weight_column(j)
        up, down = rates_from(v)
        new_r = _stream_rates(eta, up, down)
        changed = new_r != st.rate
        changed[s] = changed[s ^ 1] = False
        st.reprice(changed, new_r, t_next)
        st.rate[s] = new_r[s]
        st.rate[s ^ 1] = new_r[s ^ 1]
        events += 1
        flip_t.append(t_next)
        flip_s.append(j)
        rec.advance(t_next, eta, events)
    record = rec.finish(eta, events, time.perf_counter_ns() - t0)
    return record, np.array(flip_t), np.array(flip_s, dtype=np.int64)


def run_grid_with_bank(cfg: SimConfig, method, bank: PoissonStreamBank):
    """Euler or midpoint approximation driven by the shared streams.

    Rates are frozen per interval, so sites evolve independently inside an
    interval; all pending site events are advanced in vectorized passes.
    """
    t0 = time.perf_counter_ns()
    model = cfg.model
    delta = cfg.require_delta()
    n = model.size()
    eta = cfg.initial_state()
    rec = _Recorder(cfg)
    rec.advance(0.0, eta, 0)
    st = _StreamState(bank)
    steps = int(round(cfg.t_end / delta))
    events = 0
    flip_t, flip_s = [], []
    even = 2 * np.arange(n)
    for k in range(steps):
        t_k = k * delta
        t_k1 = (k + 1) * delta
        z = eta.astype(float) if method == "euler" else \
            midpoint_predictor(model, eta, delta)
        fu, fd = model.rates(z)
        new_r = _stream_rates(eta, fu, fd)
        changed = new_r != st.rate
        st.reprice(changed, new_r, t_k)
        while True:
            active = even + eta                 # the stream that can fire
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = st.anchor[active] + st.tau[active] / st.rate[active]
            cand = np.where(st.rate[active] > 0, cand, np.inf)
            firing = np.nonzero(cand < t_k1)[0]
            if firing.size == 0:
                break
            t_f = cand[firing]
            streams = active[firing]
            st.fire(streams, t_f)
            sibs = streams ^ 1
            st.anchor[sibs] = t_f               # rate was 0: nothing elapsed
            eta[firing] ^= 1
            # indicator swap: fired stream goes idle, sibling activates
            st.rate[streams] = 0.0
            st.rate[sibs] = np.where(eta[firing] == 1, fd[firing],
                                     fu[firing])
            events += firing.size
            flip_t.extend(t_f.tolist())
            flip_s.extend(firing.tolist())
        rec.advance(t_k1, eta, events)
    record = rec.finish(eta, events, time.perf_counter_ns() - t0)
    order = np.argsort(np.array(flip_t), kind="stable")
    return (record, np.array(flip_t)[order],
            np.array(flip_s, dtype=np.int64)[order])


# ---------------------------------------------------------------------------
# error series

@dataclass
class CoupledErrorSeries:
    times: np.ndarray
    frac_diff: dict            # method -> series, n^-1 sum |eta - eta_hat|
    cummax_frac_diff: dict     # running sup of frac_diff, exact over events
    normalized_error: dict     # (n delta)^-1 sum (eta - eta_hat), signed
    predicted_error: np.ndarray = None   # n^-1 sum E_i(t)

    def __post_init__(self):
        for m, series in self.cummax_frac_diff.items():
            if np.any(np.diff(series) < -1e-15):
                raise ValueError(f"cummax series for {m} not nondecreasing")


def _diff_sweep(n, exact_flips, approx_flips, grid_times, delta):
    """Walk the merged event sequence of two coupled paths started from the
    same state, tracking the site-discrepancy count and its running max.

    Events sharing one timestamp are applied together before the max is
    updated, so simultaneous identical flips never register.
    """
    te, se = exact_flips
    ta, sa = approx_flips
    t_all = np.concatenate([te, ta])
    s_all = np.concatenate([se, sa])
    who = np.concatenate([np.zeros(te.size, dtype=np.int8),
                          np.ones(ta.size, dtype=np.int8)])
    order = np.argsort(t_all, kind="stable")
    t_all, s_all, who = t_all[order], s_all[order], who[order]

    state = np.zeros((2, n), dtype=np.int8)   # relative to the shared init
    diff = 0
    signed = 0
    run_max = 0
    frac = np.zeros(grid_times.size)
    cmax = np.zeros(grid_times.size)
    norm = np.zeros(grid_times.size)
    g = 0
    m = t_all.size
    i = 0
    while i < m:
        t_ev = t_all[i]
        while g < grid_times.size and grid_times[g] < t_ev - 1e-15:
            frac[g] = diff / n
            cmax[g] = run_max / n
            norm[g] = signed / (n * delta)
            g += 1
        while i < m and t_all[i] == t_ev:
            w, site = who[i], s_all[i]
            pre = int(state[0, site]) - int(state[1, site])
            state[w, site] ^= 1
            post = int(state[0, site]) - int(state[1, site])
            diff += abs(post) - abs(pre)
            signed += post - pre
            i += 1
        run_max = max(run_max, diff)
    while g < grid_times.size:
        frac[g] = diff / n
        cmax[g] = run_max / n
        norm[g] = signed / (n * delta)
        g += 1
    return frac, cmax, norm


def couple_run(cfg: SimConfig, methods=("exact", "euler", "midpoint"),
               deltas=None, bank=None, with_predicted=False,
               predicted_h=None):
    """Run the requested methods on one shared stream bank and compute the
    discrepancy series of each approximation against the exact path."""
    methods = tuple(methods)
    if "exact" not in methods:
        raise ConfigError("couple_run needs the exact method as reference")
    deltas = dict(deltas or {})
    model = cfg.model
    n = model.size()
    if bank is None:
        bank = PoissonStreamBank(cfg.seed, 2 * n)

    records = {}
    flips = {}
    rec, ft, fs = run_exact_with_bank(cfg, bank)
    records["exact"] = rec
    flips["exact"] = (ft, fs)
    used_delta = {}
    for method in methods:
        if method == "exact":
            continue
        if method not in ("euler", "midpoint"):
            raise ConfigError(f"cannot couple method {method!r}")
        d = deltas.get(method, cfg.delta)
        if d is None:
            raise ConfigError(f"no delta given for coupled {method}")
        mcfg = replace(cfg, delta=d, align_samples=False)
        if method == "midpoint":
            check_midpoint_delta(mcfg)
        rec, ft, fs = run_grid_with_bank(mcfg, method, bank)
        records[method] = rec
        flips[method] = (ft, fs)
        used_delta[method] = d

    grid = cfg.sample_times()
    frac, cmax, norm = {}, {}, {}
    for method, d in used_delta.items():
        f, c, s = _diff_sweep(n, flips["exact"], flips[method], grid, d)
        frac[method], cmax[method], norm[method] = f, c, s

    predicted = None
    if with_predicted:
        h = predicted_h or min(d for d in used_delta.values())
        rho0 = cfg.initial_state().astype(float)
        rho = solve_rho(model, rho0, cfg.t_end, h)
        efield = solve_error_field(model, rho, cfg.t_end, h)
        predicted = np.array([efield(t).mean() for t in grid])

    series = CoupledErrorSeries(times=grid, frac_diff=frac,
                                cummax_frac_diff=cmax,
                                normalized_error=norm,
                                predicted_error=predicted)
    return series, records


def _normalized_error_one(args):
    cfg, method, delta, rep_seed = args
    rcfg = replace(cfg, seed=rep_seed)
    series, _ = couple_run(rcfg, methods=("exact", method),
                           deltas={method: delta})
    return series.normalized_error[method]


def normalized_error_experiment(cfg: SimConfig, replicates, method="euler",
                                predicted_h=None, workers=1):
    """Replicate-averaged signed normalized error against the first-order
    prediction from the error-field ODE.

    Returns (times, observed_mean, observed_stderr, predicted).
    """
    delta = cfg.require_delta()
    grid = cfg.sample_times()
    jobs = [(cfg, method, delta, cfg.seed + 7919 * (r + 1))
            for r in range(replicates)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_normalized_error_one, jobs))
    else:
        results = [_normalized_error_one(j) for j in jobs]
    obs = np.array(results)
    mean = obs.mean(axis=0)
    stderr = obs.std(axis=0, ddof=1) / np.sqrt(replicates) \
        if replicates > 1 else np.zeros_like(mean)

    h = predicted_h or min(delta, cfg.t_end / 400)
    rho0 = cfg.initial_state().astype(float)
    rho = solve_rho(cfg.model, rho0, cfg.t_end, h)
    efield = solve_error_field(cfg.model, rho, cfg.t_end, h)
    predicted = np.array([efield(t).mean() for t in grid])
    return grid, mean, stderr, predicted


def bench_speedup(model_for_side, sides, t_end=1.0, reps=3, seed=0):
    """Wall-time comparison of exact vs Euler (delta ~ n^-1/2) vs midpoint
    (delta ~ n^-1/4) over lattice sides; returns a list of result rows.

    ``model_for_side`` maps a side length to a model instance.
    """
    from .simulate import (InitSpec, simulate_euler, simulate_exact,
                           simulate_midpoint)
    rows = []
    for side in sides:
        model = model_for_side(side)
        n = model.size()
        plans = [
            ("exact", simulate_exact, None),
            ("euler", simulate_euler, fit_delta(t_end, n ** -0.5)),
            ("midpoint", simulate_midpoint, fit_delta(t_end, n ** -0.25)),
        ]
        walls = {}
        for name, fn, d in plans:
            samples = []
            for r in range(reps):
                cfg = SimConfig(model=model, t_end=t_end, delta=d,
                                seed=seed + 31 * r,
                                sample_every=t_end,
                                init=InitSpec("bernoulli", 0.5),
                                align_samples=False)
                samples.append(fn(cfg).wall_ns)
            walls[name] = samples
            mean = float(np.mean(samples))
            rows.append({
                "m": int(np.log2(side)), "n": n, "side": side,
                "method": name, "delta": d if d is not None else "",
                "mean_wall_ns": mean,
                "stderr_wall_ns": float(np.std(samples, ddof=1)
                                        / np.sqrt(reps)) if reps > 1 else 0.0,
                "speedup_vs_exact": float(np.mean(walls["exact"]) / mean),
            })
    return rows
