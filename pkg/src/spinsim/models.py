"""Concrete spin-system rate models and their regularity constants.

Every model here has rates of potential form: q_i^+/-(x) = f_i(v_i + b_i)
with v = S x, where S is either a lattice kernel (FFT-accelerated) or a
dense matrix.  The drift, Jacobian-transpose products and norm constants
all derive from that structure.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .fastsum import KernelSpec, sum_dense

TANH2_MAX = 0.7699  # global bound on |d^2/dx^2 tanh(x)|


class ConfigError(ValueError):
    """Invalid model or run configuration."""


@dataclass
class NormConstants:
    """Regularity constants feeding the analytic error bounds.

    All entries are valid upper bounds for the corresponding suprema over
    x in [0,1]^n; for the lattice models they are analytic.
    """

    q_inf: float
    dstar_q_1: float
    d_q_1: float
    dstar_q_inf: float
    dstar_q_21: float
    gamma_n: float
    big_gamma_n: float
    exact: bool = True

    def __post_init__(self):
        vals = [self.q_inf, self.dstar_q_1, self.d_q_1, self.dstar_q_inf,
                self.dstar_q_21, self.gamma_n, self.big_gamma_n]
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise ValueError("norm constants must be finite and nonnegative")
        if self.dstar_q_1 > self.d_q_1 + 1e-12:
            raise ValueError("||D*q||_1 cannot exceed ||Dq||_1")

    def as_dict(self):
        return {
            "q_inf": self.q_inf, "dstar_q_1": self.dstar_q_1,
            "d_q_1": self.d_q_1, "dstar_q_inf": self.dstar_q_inf,
            "dstar_q_21": self.dstar_q_21, "gamma_n": self.gamma_n,
            "big_gamma_n": self.big_gamma_n, "exact": self.exact,
        }


# ---------------------------------------------------------------------------
# link functions (dense models)

class LinearWithFloor:
    """f(v) = max(gain*v + bias, 0)."""

    name = "linear-with-floor"

    def __init__(self, gain=1.0, bias=0.0):
        self.gain = float(gain)
        self.bias = float(bias)

    def value(self, v):
        return np.maximum(self.gain * v + self.bias, 0.0)

    def deriv(self, v):
        return np.where(self.gain * v + self.bias > 0.0, self.gain, 0.0)

    def deriv_bound(self):
        return abs(self.gain)

    def deriv2_bound(self):
        return 0.0


class TanhIsing:
    """f(v) = 0.5*(1 + sign*tanh(v))."""

    name = "tanh-ising"

    def __init__(self, sign=1.0):
        self.sign = float(sign)

    def value(self, v):
        return 0.5 * (1.0 + self.sign * np.tanh(v))

    def deriv(self, v):
        return 0.5 * self.sign / np.cosh(v) ** 2

    def deriv_bound(self):
        return 0.5

    def deriv2_bound(self):
        return 0.5 * TANH2_MAX


class Constant:
    """f(v) = c, independent of the potential."""

    name = "constant"

    def __init__(self, value=1.0):
        self.c = float(value)
        if self.c < 0:
            raise ConfigError("constant link must be nonnegative")

    def value(self, v):
        return np.full_like(np.asarray(v, dtype=float), self.c)

    def deriv(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def deriv_bound(self):
        return 0.0

    def deriv2_bound(self):
        return 0.0


_LINKS = {c.name: c for c in (LinearWithFloor, TanhIsing, Constant)}


def make_link(name, **params):
    if name not in _LINKS:
        raise ConfigError(f"unsupported link function {name!r}")
    return _LINKS[name](**params)


# ---------------------------------------------------------------------------
# weight backends

class _KernelWeights:
    def __init__(self, kernel: KernelSpec):
        self.kernel = kernel

    @property
    def n(self):
        return self.kernel.n

    def matvec(self, x, transpose=False):
        return self.kernel.matvec(x, transpose=transpose)

    def column(self, j):
        return self.kernel.column(j)

    def dense(self):
        return self.kernel.dense_matrix()


class _DenseWeights:
    def __init__(self, s):
        self.s = np.asarray(s, dtype=float)
        if self.s.ndim != 2 or self.s.shape[0] != self.s.shape[1]:
            raise ConfigError("s_matrix must be square")

    @property
    def n(self):
        return self.s.shape[0]

    def matvec(self, x, transpose=False):
        m = self.s.T if transpose else self.s
        return m @ np.asarray(x, dtype=float)

    def column(self, j):
        return self.s[:, j].copy()

    def dense(self):
        return self.s


# ---------------------------------------------------------------------------
# models

class RateModel:
    """Potential-form spin-system model: rates f(S x + b).

    Immutable after construction; all evaluation methods are pure and safe
    to share across concurrent replicates.
    """

    def __init__(self, weights, offset, link_up, link_down):
        self._w = weights
        self.offset = np.broadcast_to(np.asarray(offset, dtype=float),
                                      (weights.n,))
        self.link_up = link_up
        self.link_down = link_down

    def size(self):
        return self._w.n

    # -- potentials and rates

    def potentials(self, x):
        x = np.asarray(x, dtype=float)
        if x.size != self.size():
            raise ConfigError(
                f"state length {x.size} != model size {self.size()}")
        return self._w.matvec(x)

    def _shifted(self, x):
        return self.potentials(x) + self.offset

    def rates_up(self, x):
        return self.link_up.value(self._shifted(x))

    def rates_down(self, x):
        return self.link_down.value(self._shifted(x))

    def rates(self, x):
        v = self._shifted(x)
        return self.link_up.value(v), self.link_down.value(v)

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        up, down = self.rates(x)
        return (1.0 - x) * up - x * down

    def weight_column(self, j):
        return self._w.column(j)

    def dense_weights(self):
        return self._w.dense()

    # -- derivative structure

    def jacobian_transpose_apply(self, x, w, off_diagonal=False):
        """(J^T w)_i = sum_j d(drift_j)/d(x_i) * w_j.

        With drift_j = (1-x_j) f+(v_j) - x_j f-(v_j) and v = S x + b:
        d(drift_j)/d(x_i) = g_j s_ji + delta_ij * (-(f+ + f-)_j), where
        g_j = (1-x_j) f+'(v_j) - x_j f-'(v_j).  The off-diagonal variant
        drops every j = i term.
        """
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        v = self._shifted(x)
        g = (1.0 - x) * self.link_up.deriv(v) - x * self.link_down.deriv(v)
        out = self._w.matvec(g * w, transpose=True)
        sdiag = self._weight_diag()
        if off_diagonal:
            return out - g * sdiag * w
        up = self.link_up.value(v)
        down = self.link_down.value(v)
        return out - (up + down) * w

    def jacobian_apply(self, x, w, off_diagonal=False):
        """(J w)_i = sum_j d(drift_i)/d(x_j) * w_j.

        Same derivative structure as jacobian_transpose_apply:
        d(drift_i)/d(x_j) = g_i s_ij + delta_ij * (-(f+ + f-)_i).  The
        off-diagonal variant drops every j = i term.
        """
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        v = self._shifted(x)
        g = (1.0 - x) * self.link_up.deriv(v) - x * self.link_down.deriv(v)
        out = g * self._w.matvec(w)
        sdiag = self._weight_diag()
        if off_diagonal:
            return out - g * sdiag * w
        up = self.link_up.value(v)
        down = self.link_down.value(v)
        return out - (up + down) * w

    def _weight_diag(self):
        if isinstance(self._w, _DenseWeights):
            return np.diag(self._w.s)
        k = self._w.kernel
        center = tuple(s - 1 for s in k.shape)
        return np.full(self.size(), k.normalization * k.taps[center])

    def norm_constants(self) -> NormConstants:
        raise NotImplementedError


def rate_function(model: RateModel, eta, i):
    """Flip intensity q(eta, i) of site i in configuration eta."""
    eta = np.asarray(eta)
    up, down = model.rates(eta)
    return float(down[i]) if eta[i] else float(up[i])


def _kernel_norms(kernel: KernelSpec, deriv_bound, deriv2_bound,
                  q_sup, diag_extra_sup):
    """Shared norm-constant computation for kernel-backed models.

    sup |d q_i / d x_j| <= deriv_bound * |s_ij| for i != j; column/row sums
    of |s| and s^2 come from exact kernel convolutions with all-ones.
    """
    col = kernel.column_sums(offdiag=True)           # sum_{i != j} s_ij
    col_sq = kernel.column_sums(offdiag=True, squared=True)
    full = kernel.column_sums(offdiag=False)
    dstar_1 = deriv_bound * float(col.max())
    dstar_inf = deriv_bound * float(col.max())       # symmetric kernels
    dstar_21 = deriv_bound * float(np.sqrt(col_sq).sum())
    # drift Jacobian column sums: off-diagonal part plus the diagonal sup
    d_1 = float((deriv_bound * col + diag_extra_sup).max())
    gamma = deriv2_bound * float(col_sq.sum())
    big_gamma = deriv2_bound * float((col ** 2).max())
    return col, full, NormConstants(
        q_inf=q_sup, dstar_q_1=dstar_1, d_q_1=max(d_1, dstar_1),
        dstar_q_inf=dstar_inf, dstar_q_21=dstar_21,
        gamma_n=gamma, big_gamma_n=big_gamma)


class GaussConv1DModel(RateModel):
    """1-d lattice model with a Gaussian convolutional birth kernel.

    q_i^+(x) = (2 sigma)/(n sqrt(pi)) * sum_j exp(-(sigma (i-j)/n)^2) x_j,
    q_i^-(x) = death_rate.  Rates are linear in x, so both second-order
    constants vanish.
    """

    def __init__(self, n, sigma, death_rate=1.0, periodic=False):
        if n < 1 or sigma <= 0 or death_rate < 0:
            raise ConfigError("need n >= 1, sigma > 0, death_rate >= 0")
        self.n = int(n)
        self.sigma = float(sigma)
        self.death_rate = float(death_rate)
        self.periodic = bool(periodic)
        norm = 2.0 * self.sigma / (self.n * math.sqrt(math.pi))
        kernel = KernelSpec.gaussian(
            (self.n,), a=(self.sigma / self.n) ** 2,
            periodic=self.periodic, normalization=norm)
        super().__init__(_KernelWeights(kernel), 0.0,
                         LinearWithFloor(), Constant(self.death_rate))

    def norm_constants(self):
        kernel = self._w.kernel
        full = kernel.column_sums()
        q_plus_sup = float(full.max())               # attained at x = 1
        mu = self.death_rate
        # diagonal drift derivative: |-(q+ + q-) + (1-x_i) s_ii| <= sup + mu
        _, _, nc = _kernel_norms(
            kernel, 1.0, 0.0, max(q_plus_sup, mu),
            diag_extra_sup=full + mu)
        return nc


class IsingKac2DModel(RateModel):
    """2-d Ising model with Gaussian Kac potentials on an m x m lattice.

    q_i^+/-(x) = 0.5*[1 +/- tanh((beta/n) sum_j exp(-a ||z_i-z_j||^2)
    (2 x_j - 1))], with z on a lattice mapped into [-1,1]^2.  Satisfies
    q_i^+ + q_i^- = 1 identically.
    """

    def __init__(self, side, beta, a=None, a_scale=None, periodic=False):
        side = int(side)
        if side < 2:
            raise ConfigError("side must be >= 2")
        n = side * side
        if (a is None) == (a_scale is None):
            raise ConfigError("specify exactly one of 'a' and 'a_scale'")
        if a is None:
            a = float(a_scale) / n
        if a <= 0 or beta < 0:
            raise ConfigError("need a > 0 and beta >= 0")
        self.side = side
        self.beta = float(beta)
        self.a = float(a)
        self.periodic = bool(periodic)
        spacing = 2.0 / (side - 1)                   # grid step in [-1,1]
        kernel = KernelSpec.gaussian(
            (side, side), a=self.a, spacing=spacing, periodic=self.periodic,
            normalization=2.0 * self.beta / n)
        row = kernel.column_sums()                   # (2 beta/n) sum_j kappa
        super().__init__(_KernelWeights(kernel), -0.5 * row,
                         TanhIsing(+1.0), TanhIsing(-1.0))

    def norm_constants(self):
        kernel = self._w.kernel
        # kappa row sums: shifted weights already carry the 2 beta/n factor
        row_kappa = kernel.column_sums() / kernel.normalization
        arg_max = (self.beta / self.size()) * float(row_kappa.max())
        q_sup = 0.5 * (1.0 + math.tanh(arg_max))
        # diagonal drift derivative: g_i s_ii - (f+ + f-) = g s_ii - 1
        diag = self._weight_diag()
        _, _, nc = _kernel_norms(
            kernel, 0.5, 0.5 * TANH2_MAX, q_sup,
            diag_extra_sup=0.5 * diag + 1.0)
        return nc


class DenseModel(RateModel):
    """General dense-weight model with named scalar link functions.

    Norm constants are upper bounds obtained from global link-derivative
    bounds and a documented sample of corner points, not exact suprema.
    """

    def __init__(self, s_matrix, link_up="linear-with-floor",
                 link_down="constant", link_up_params=None,
                 link_down_params=None, offset=0.0):
        lu = link_up if not isinstance(link_up, str) else \
            make_link(link_up, **(link_up_params or {}))
        ld = link_down if not isinstance(link_down, str) else \
            make_link(link_down, **(link_down_params or {}))
        super().__init__(_DenseWeights(s_matrix), offset, lu, ld)

    def norm_constants(self, corner_samples=64, seed=0):
        n = self.size()
        s = self._w.s
        rng = np.random.default_rng(seed)
        corners = [np.zeros(n), np.ones(n)]
        corners += [rng.integers(0, 2, size=n).astype(float)
                    for _ in range(corner_samples)]
        q_sup = 0.0
        for x in corners:
            up, down = self.rates(x)
            q_sup = max(q_sup, float(up.max()), float(down.max()))
        db = max(self.link_up.deriv_bound(), self.link_down.deriv_bound())
        d2b = max(self.link_up.deriv2_bound(), self.link_down.deriv2_bound())
        absS = np.abs(s)
        off = absS - np.diag(np.diag(absS))
        col = off.sum(axis=0)
        dstar_1 = db * float(col.max())
        dstar_inf = db * float(off.sum(axis=1).max())
        dstar_21 = db * float(np.sqrt((off ** 2).sum(axis=1)).sum())
        sum_updown = 0.0
        for x in corners:
            up, down = self.rates(x)
            sum_updown = max(sum_updown, float((up + down).max()))
        d_1 = float((db * absS.sum(axis=0) + sum_updown).max())
        gamma = d2b * float((off ** 2).sum())
        big_gamma = d2b * float((off.sum(axis=1) ** 2).max())
        return NormConstants(
            q_inf=q_sup, dstar_q_1=dstar_1, d_q_1=max(d_1, dstar_1),
            dstar_q_inf=dstar_inf, dstar_q_21=dstar_21,
            gamma_n=gamma, big_gamma_n=big_gamma, exact=False)


# ---------------------------------------------------------------------------
# configuration loading

def load_model(config):
    """Build a model from a configuration dict or a JSON file path."""
    if isinstance(config, (str, bytes)):
        with open(config) as fh:
            config = json.load(fh)
    if not isinstance(config, dict) or "type" not in config:
        raise ConfigError("model config must be a JSON object with a 'type'")
    cfg = dict(config)
    mtype = cfg.pop("type")
    try:
        if mtype == "gauss-conv-1d":
            return GaussConv1DModel(**cfg)
        if mtype == "ising-kac-2d":
            return IsingKac2DModel(**cfg)
        if mtype == "dense":
            if "s_matrix_file" in cfg:
                s = np.loadtxt(cfg.pop("s_matrix_file"), delimiter=",",
                               ndmin=2)
            else:
                s = np.asarray(cfg.pop("s_matrix"), dtype=float)
            params = cfg.pop("params", {})
            return DenseModel(
                s, link_up=cfg.pop("link_up", "linear-with-floor"),
                link_down=cfg.pop("link_down", "constant"),
                link_up_params=params.get("link_up"),
                link_down_params=params.get("link_down"),
                offset=cfg.pop("offset", 0.0))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {mtype!r}: {exc}") from exc
    raise ConfigError(f"unknown model type {mtype!r}")
