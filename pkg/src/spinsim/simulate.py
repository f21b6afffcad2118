"""Samplers for finite spin systems.

Five methods: the exact Doob-Gillespie chain, the Euler and midpoint
site-decoupling approximations on a fixed time grid, the independent-site
approximation driven by a deterministic trajectory, and a naive Poisson
tau-leaping demonstrator (which leaves {0,1}^n and exists to show why).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .models import ConfigError, RateModel
from .rng import TAG_EXACT, TAG_GRID, TAG_INIT, TAG_TAU, make_generator


@dataclass
class InitSpec:
    """Initial configuration: bernoulli(p), fraction(p) or explicit bits."""

    kind: str = "bernoulli"
    p: float = 0.5
    bits: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("bernoulli", "fraction", "explicit"):
            raise ConfigError(f"unknown init kind {self.kind!r}")
        if self.kind != "explicit" and not (0.0 <= self.p <= 1.0):
            raise ConfigError("init probability p must lie in [0, 1]")

    def sample(self, n, seed):
        if self.kind == "explicit":
            bits = np.asarray(self.bits)
            if bits.size != n or not np.isin(bits, (0, 1)).all():
                raise ConfigError("explicit init must be n bits in {0,1}")
            return bits.astype(np.int8)
        if self.kind == "fraction":
            k = int(np.floor(self.p * n))
            eta = np.zeros(n, dtype=np.int8)
            if k > 0:
                eta[(np.arange(k) * n // k)] = 1
            return eta
        u = make_generator(seed, TAG_INIT).random(n)
        return (u < self.p).astype(np.int8)

    @classmethod
    def parse(cls, text):
        """Parse 'bernoulli:0.5' / 'fraction:0.1' style init strings."""
        kind, _, arg = text.partition(":")
        if kind in ("bernoulli", "fraction"):
            return cls(kind=kind, p=float(arg) if arg else 0.5)
        raise ConfigError(f"cannot parse init spec {text!r}")


@dataclass
class SimConfig:
    model: RateModel
    t_end: float
    delta: float = None
    seed: int = 0
    sample_every: float = None
    init: InitSpec = field(default_factory=InitSpec)
    record_snapshots: bool = False
    # coupled runs sample several step sizes on one common grid, in which
    # case the divisibility rule below is waived
    align_samples: bool = True

    def __post_init__(self):
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.sample_every is None:
            self.sample_every = (10 * self.delta if self.delta is not None
                                 else self.t_end / 50)
        if self.sample_every <= 0:
            raise ConfigError("sample_every must be positive")
        if self.delta is not None and self.align_samples:
            ratio = self.sample_every / self.delta
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(
                    "sample_every must be an integer multiple of delta")

    def require_delta(self):
        if self.delta is None:
            raise ConfigError("this method requires 'delta'")
        return self.delta

    def sample_times(self):
        k = int(np.floor(self.t_end / self.sample_every + 1e-9))
        return np.arange(k + 1) * self.sample_every

    def initial_state(self):
        return self.init.sample(self.model.size(), self.seed)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    occupancy: np.ndarray
    events_cum: np.ndarray
    event_count: int
    wall_ns: int
    snapshots: np.ndarray = None        # (samples, n) int8, optional
    final_state: np.ndarray = None
    invalid_state_count: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")


def transition_probability(q_up, q_down, eta_i, delta):
    """P(eta_i(t + delta) = 1) for a frozen two-state chain.

    With Q = q_up + q_down: (q_up/Q)(1 - exp(-delta*Q)) from state 0 and
    1 - (q_down/Q)(1 - exp(-delta*Q)) from state 1; expm1 keeps the decay
    factor accurate near zero.
    """
    q_up = np.asarray(q_up, dtype=float)
    q_down = np.asarray(q_down, dtype=float)
    eta_i = np.asarray(eta_i)
    if np.any(q_up < 0) or np.any(q_down < 0) or np.any(np.asarray(delta) < 0):
        raise ValueError("rates and delta must be nonnegative")
    q_tot = q_up + q_down
    safe = np.where(q_tot > 0, q_tot, 1.0)
    decay = -np.expm1(-delta * safe)
    from_zero = (q_up / safe) * decay
    from_one = 1.0 - (q_down / safe) * decay
    p = np.where(eta_i == 0, from_zero, from_one)
    p = np.where(q_tot > 0, p, eta_i)
    if p.ndim == 0:
        return float(p)
    return p


class _Recorder:
    """Accumulates cadence samples of a cadlag path."""

    def __init__(self, cfg: SimConfig):
        self.times = cfg.sample_times()
        self.n = cfg.model.size()
        self.occ = np.empty(self.times.size)
        self.events = np.zeros(self.times.size, dtype=np.int64)
        self.snaps = (np.empty((self.times.size, self.n), dtype=np.int8)
                      if cfg.record_snapshots else None)
        self.cursor = 0

    def advance(self, t_now, eta, n_events, strict=False):
        """Record every pending sample time <= t_now (or < t_now when
        strict) with the current state."""
        eps = -1e-12 if strict else 1e-12
        while (self.cursor < self.times.size
               and self.times[self.cursor] <= t_now + eps):
            self.occ[self.cursor] = eta.mean()
            self.events[self.cursor] = n_events
            if self.snaps is not None:
                self.snaps[self.cursor] = eta
            self.cursor += 1

    def finish(self, eta, n_events, wall_ns, invalid=0):
        self.advance(np.inf, eta, n_events)
        return TrajectoryRecord(
            times=self.times, occupancy=self.occ, events_cum=self.events,
            event_count=int(n_events), wall_ns=wall_ns,
            snapshots=self.snaps, final_state=eta.copy(),
            invalid_state_count=invalid)


def simulate_exact(cfg: SimConfig, bank=None) -> TrajectoryRecord:
    """Doob-Gillespie simulation, statistically exact.

    Potentials are maintained incrementally (a flip at j shifts v by the
    j-th weight column, O(n) per event).  When ``bank`` is given the path
    is driven by the shared Poisson streams of the random time-change
    construction instead of the method's private generator.
    """
    if bank is not None:
        from .coupling import run_exact_with_bank
        rec, _, _ = run_exact_with_bank(cfg, bank)
        return rec
    t0 = time.perf_counter_ns()
    model = cfg.model
    n = model.size()
    eta = cfg.initial_state()
    rng = make_generator(cfg.seed, TAG_EXACT)
    rec = _Recorder(cfg)

    v = model.potentials(eta.astype(float))
    t = 0.0
    events = 0
    while True:
        sv = v + model.offset
        up = model.link_up.value(sv)
        down = model.link_down.value(sv)
        intens = np.where(eta == 1, down, up)
        total = float(intens.sum())
        if total <= 0.0:
            break                      # absorbing: fast-forward to t_end
        t_next = t + rng.exponential(1.0 / total)
        if t_next > cfg.t_end:
            break
        rec.advance(t_next, eta, events, strict=True)  # samples before event
        j = int(np.searchsorted(np.cumsum(intens), rng.random() * total))
        j = min(j, n - 1)
        delta_x = 1 - 2 * int(eta[j])
        eta[j] += delta_x
        v += delta_x * model.weight_column(j)
        t = t_next
        events += 1
        rec.advance(t, eta, events)
    return rec.finish(eta, events, time.perf_counter_ns() - t0)


def _check_binary(eta):
    if not np.isin(eta, (0, 1)).all():
        raise RuntimeError("simulator produced a state outside {0,1}^n")


def _grid_loop(cfg: SimConfig, prob_fn, tag_extra=0):
    """Shared driver for the grid-based {0,1}-valued samplers.

    ``prob_fn(eta, k)`` returns the per-site success probabilities for the
    step from k*delta to (k+1)*delta.
    """
    t0 = time.perf_counter_ns()
    delta = cfg.require_delta()
    eta = cfg.initial_state()
    rec = _Recorder(cfg)
    rec.advance(0.0, eta, 0)
    steps = int(round(cfg.t_end / delta))
    flips = 0
    for k in range(steps):
        p = prob_fn(eta, k)
        u = make_generator(cfg.seed, TAG_GRID, k, tag_extra).random(eta.size)
        new = (u < p).astype(np.int8)
        flips += int(np.count_nonzero(new != eta))
        eta = new
        _check_binary(eta)
        rec.advance((k + 1) * delta, eta, flips)
    return rec.finish(eta, flips, time.perf_counter_ns() - t0)


def simulate_euler(cfg: SimConfig, bank=None) -> TrajectoryRecord:
    """Euler site-decoupling approximation: rates frozen at the last grid
    point, each site advanced as an independent two-state chain."""
    if bank is not None:
        from .coupling import run_grid_with_bank
        rec, _, _ = run_grid_with_bank(cfg, "euler", bank)
        return rec
    model = cfg.model
    delta = cfg.require_delta()

    def prob(eta, k):
        up, down = model.rates(eta.astype(float))
        return transition_probability(up, down, eta, delta)

    return _grid_loop(cfg, prob, tag_extra=0)


def midpoint_predictor(model, eta, delta):
    """Half-step predictor p(z) = z + (delta/2) * drift(z), clamped to
    [0,1]; round-off excursions beyond 1e-9 are a hard error."""
    z = eta.astype(float)
    p = z + 0.5 * delta * model.drift(z)
    excess = max(float((-p).max(initial=0.0)), float((p - 1.0).max(initial=0.0)))
    if excess > 1e-9:
        raise RuntimeError(
            f"midpoint predictor left [0,1] by {excess:.3e}; reduce delta")
    return np.clip(p, 0.0, 1.0)


def check_midpoint_delta(cfg: SimConfig):
    q_inf = cfg.model.norm_constants().q_inf
    if q_inf > 0 and cfg.delta > 2.0 / q_inf + 1e-12:
        raise ConfigError(
            f"midpoint requires delta <= 2/||q||_inf = {2.0 / q_inf:.6g}, "
            f"got {cfg.delta}")


def simulate_midpoint(cfg: SimConfig, bank=None) -> TrajectoryRecord:
    """Midpoint site-decoupling approximation: rates evaluated at the
    half-step predictor, two rate evaluations per step."""
    check_midpoint_delta(cfg)
    if bank is not None:
        from .coupling import run_grid_with_bank
        rec, _, _ = run_grid_with_bank(cfg, "midpoint", bank)
        return rec
    model = cfg.model
    delta = cfg.require_delta()

    def prob(eta, k):
        z = midpoint_predictor(model, eta, delta)
        up, down = model.rates(z)
        return transition_probability(up, down, eta, delta)

    return _grid_loop(cfg, prob, tag_extra=1)


def simulate_independent_sites(cfg: SimConfig, rho) -> TrajectoryRecord:
    """Independent two-state chains with rates q_i(+/-)(rho(t)), rho frozen
    at grid points.  ``rho`` is a callable t -> state vector."""
    model = cfg.model
    delta = cfg.require_delta()

    def prob(eta, k):
        up, down = model.rates(np.asarray(rho(k * delta), dtype=float))
        return transition_probability(up, down, eta, delta)

    return _grid_loop(cfg, prob, tag_extra=2)


def simulate_poisson_tau_leap(cfg: SimConfig) -> TrajectoryRecord:
    """Naive Poisson tau-leaping demonstrator.

    Updates eta_i += Pois(delta*(1-eta_i)*q+) - Pois(delta*eta_i*q-); any
    excursion outside {0,1} is counted and clamped.  The count makes the
    failure mode of plain tau leaping on spin systems measurable.
    """
    t0 = time.perf_counter_ns()
    model = cfg.model
    delta = cfg.require_delta()
    eta = cfg.initial_state()
    rec = _Recorder(cfg)
    rec.advance(0.0, eta, 0)
    steps = int(round(cfg.t_end / delta))
    invalid = 0
    flips = 0
    for k in range(steps):
        x = eta.astype(float)
        up, down = model.rates(x)
        rng = make_generator(cfg.seed, TAG_TAU, k)
        lam_up = rng.poisson(delta * (1.0 - x) * up)
        lam_down = rng.poisson(delta * x * down)
        raw = eta + lam_up - lam_down
        bad = (raw < 0) | (raw > 1)
        invalid += int(np.count_nonzero(bad))
        new = np.clip(raw, 0, 1).astype(np.int8)
        flips += int(np.count_nonzero(new != eta))
        eta = new
        rec.advance((k + 1) * delta, eta, flips)
    return rec.finish(eta, flips, time.perf_counter_ns() - t0,
                      invalid=invalid)
