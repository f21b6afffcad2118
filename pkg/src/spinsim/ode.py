"""Deterministic companions and analytic error bounds.

Solves the mean occupancy system rho(t), its rate-frozen variant
rho_delta(t), and the first-order error field E(t) driven along rho, and
evaluates the closed-form strong-error and Gronwall bounds.
"""

from dataclasses import dataclass

import numpy as np

from .models import ConfigError, NormConstants, RateModel


class SolverError(RuntimeError):
    """Integration left the admissible region; the step is too large."""


@dataclass
class OdeSolution:
    times: np.ndarray
    states: np.ndarray          # (len(times), n)
    solver_step: float

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("solution times must be increasing")

    def __call__(self, t):
        """Piecewise-linear evaluation at time t (clamped to the range)."""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), self.times.size - 2)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1.0 - w) * self.states[k] + w * self.states[k + 1]


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _grid(t_end, h):
    steps = max(1, int(np.ceil(t_end / h - 1e-9)))
    return np.linspace(0.0, t_end, steps + 1), t_end / steps


def solve_rho(model: RateModel, rho0, t_end, h) -> OdeSolution:
    """Fixed-step RK4 for d rho/dt = (1-rho) q+(rho) - rho q-(rho).

    States are clamped to [0,1] after each step; an excursion beyond 1e-6
    raises SolverError.
    """
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.min() < 0.0 or rho0.max() > 1.0:
        raise ConfigError("rho0 must lie in [0,1]^n")
    if h <= 0 or t_end <= 0:
        raise ConfigError("t_end and h must be positive")
    times, h = _grid(t_end, h)
    out = np.empty((times.size, rho0.size))
    out[0] = rho0
    y = rho0.copy()
    fn = lambda t, z: model.drift(z)
    for k in range(1, times.size):
        y = _rk4_step(fn, times[k - 1], y, h)
        excess = max(float((-y).max(initial=0.0)),
                     float((y - 1.0).max(initial=0.0)))
        if excess > 1e-6:
            raise SolverError(
                f"rho left [0,1] by {excess:.3e} at t={times[k]:.6g}")
        y = np.clip(y, 0.0, 1.0)
        out[k] = y
    return OdeSolution(times, out, h)


def solve_rho_delta(model: RateModel, rho0, delta, t_end, h) -> OdeSolution:
    """Rate-frozen companion: rates held at the last grid point.

    On each interval every coordinate obeys a scalar linear constant-
    coefficient ODE, solved exactly: rho(t_k+s) = r_inf + (rho_k - r_inf)
    exp(-Q s) with r_inf = q+/Q.
    """
    rho0 = np.asarray(rho0, dtype=float)
    if delta <= 0 or h <= 0 or h > delta + 1e-12:
        raise ConfigError("need 0 < h <= delta")
    sub = max(1, int(round(delta / h)))
    steps = int(np.ceil(t_end / delta - 1e-9))
    times = [0.0]
    states = [rho0.copy()]
    y = rho0.copy()
    for k in range(steps):
        t_k = k * delta
        up, down = model.rates(y)
        q_tot = up + down
        r_inf = np.where(q_tot > 0, up / np.where(q_tot > 0, q_tot, 1.0), y)
        seg_end = min(delta, t_end - t_k)
        for j in range(1, sub + 1):
            s = seg_end * j / sub
            state = r_inf + (y - r_inf) * np.exp(-q_tot * s)
            times.append(t_k + s)
            states.append(state)
        y = states[-1].copy()
    return OdeSolution(np.array(times), np.array(states), delta / sub)


def solve_error_field(model: RateModel, rho_solution: OdeSolution,
                      t_end, h) -> OdeSolution:
    """First-order error field of the Euler scheme.

    Integrates dE/dt = J(rho(t)) E + 0.5 J*(rho(t)) q(rho(t)) with
    E(0) = 0, where J is the drift Jacobian, J* its off-diagonal part and
    q the drift; rho is taken from ``rho_solution``.  This is the exact
    delta -> 0 limit of (rho - rho_delta)/delta: over one frozen-rate
    interval the scheme's mean drifts with rates held at the interval
    start, so the leading bias is the drift sensitivity to the lag
    (s - t_k) q(rho), averaged to delta/2 per interval.
    """
    if rho_solution.times[-1] < t_end - 1e-9:
        raise ConfigError("rho_solution does not cover [0, t_end]")
    n = rho_solution.states.shape[1]
    times, h = _grid(t_end, h)

    def fn(t, e):
        rho = rho_solution(t)
        forcing = 0.5 * model.jacobian_apply(
            rho, model.drift(rho), off_diagonal=True)
        return model.jacobian_apply(rho, e) + forcing

    out = np.empty((times.size, n))
    out[0] = 0.0
    y = np.zeros(n)
    for k in range(1, times.size):
        y = _rk4_step(fn, times[k - 1], y, h)
        out[k] = y
    return OdeSolution(times, out, h)


# ---------------------------------------------------------------------------
# closed-form bound evaluators

def _check_nonneg(**kw):
    for name, v in kw.items():
        if v < 0:
            raise ValueError(f"{name} must be nonnegative")


def euler_bound(norms: NormConstants, n, delta, t_end):
    """Strong-error bound for the Euler scheme:
    4 n delta T ||q||inf ||D*q||_1 exp(2T(||q||inf + ||D*q||_1))."""
    _check_nonneg(n=n, delta=delta, t_end=t_end)
    return (4.0 * n * delta * t_end * norms.q_inf * norms.dstar_q_1
            * np.exp(2.0 * t_end * (norms.q_inf + norms.dstar_q_1)))


def midpoint_bound(norms: NormConstants, n, delta, t_end):
    """Strong-error bound for the midpoint scheme; returns (alpha, bound)
    with bound = 10 alpha (T+1) exp(2T(||q||inf + ||D*q||_1))."""
    _check_nonneg(n=n, delta=delta, t_end=t_end)
    alpha = (n * delta ** 2 * norms.q_inf * (1.0 + norms.q_inf)
             * (1.0 + norms.dstar_q_1) * (norms.big_gamma_n + norms.dstar_q_1)
             + delta * norms.q_inf * norms.gamma_n
             + np.sqrt(delta) * np.sqrt(norms.q_inf) * norms.dstar_q_21)
    bound = (10.0 * alpha * (t_end + 1.0)
             * np.exp(2.0 * t_end * (norms.q_inf + norms.dstar_q_1)))
    return float(alpha), float(bound)


def e_growth_bound(norms: NormConstants, t_end):
    """Gronwall envelope for the error field:
    0.5 ||q||inf ||D*q||_1 T exp(T ||Dq||_1)."""
    _check_nonneg(t_end=t_end)
    return float(0.5 * norms.q_inf * norms.dstar_q_1 * t_end
                 * np.exp(t_end * norms.d_q_1))


@dataclass
class BoundReport:
    n: int
    delta: float
    t_end: float
    norms: NormConstants
    euler: float
    midpoint_alpha: float
    midpoint: float
    e_growth: float

    @classmethod
    def evaluate(cls, norms, n, delta, t_end):
        alpha, mid = midpoint_bound(norms, n, delta, t_end)
        return cls(n=int(n), delta=float(delta), t_end=float(t_end),
                   norms=norms,
                   euler=float(euler_bound(norms, n, delta, t_end)),
                   midpoint_alpha=alpha, midpoint=mid,
                   e_growth=e_growth_bound(norms, t_end))

    def as_dict(self):
        return {
            "n": self.n, "delta": self.delta, "t_end": self.t_end,
            "norm_constants": self.norms.as_dict(),
            "euler_bound": self.euler,
            "midpoint_alpha": self.midpoint_alpha,
            "midpoint_bound": self.midpoint,
            "e_growth_bound": self.e_growth,
        }
