"""Fast evaluation of potentials v_i = sum_j s_ij x_j.

Three strategies: exact FFT convolution for translation-invariant lattice
kernels (circular or zero-padded), a Barnes-Hut single tree for scattered
sites with a Gaussian kernel, and a dense double-loop oracle.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft


class ShapeError(ValueError):
    """Input length does not match the declared lattice shape."""


@dataclass
class KernelSpec:
    """Translation-invariant kernel on a 1-d or 2-d regular lattice.

    ``taps`` holds k(offset) on the full extent: axis length 2*L-1 for a
    lattice of extent L, center index L-1.  Full extent means no truncation,
    so the FFT path reproduces the dense sum exactly in both boundary modes.
    """

    shape: tuple
    taps: np.ndarray
    periodic: bool = False
    normalization: float = 1.0
    _plan: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.taps = np.asarray(self.taps, dtype=float)
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("kernel taps must be finite")
        expect = tuple(2 * s - 1 for s in self.shape)
        if self.taps.shape != expect:
            raise ShapeError(f"taps shape {self.taps.shape} != full extent {expect}")

    @property
    def dims(self):
        return len(self.shape)

    @property
    def n(self):
        return int(np.prod(self.shape))

    @classmethod
    def gaussian(cls, shape, a, spacing=1.0, periodic=False, normalization=1.0):
        """Gaussian taps k(d) = exp(-a * ||spacing*d||^2) on the full extent."""
        shape = tuple(int(s) for s in shape)
        grids = np.meshgrid(
            *[np.arange(-(s - 1), s, dtype=float) for s in shape], indexing="ij"
        )
        r2 = sum((spacing * g) ** 2 for g in grids)
        return cls(shape=shape, taps=np.exp(-a * r2), periodic=periodic,
                   normalization=normalization)

    def _ring(self):
        """Fold full-extent taps onto the lattice torus (circular mode)."""
        ring = np.zeros(self.shape)
        idx = np.meshgrid(
            *[np.arange(-(s - 1), s) % s for s in self.shape], indexing="ij"
        )
        np.add.at(ring, tuple(idx), self.taps)
        return ring

    def _get_plan(self, transpose=False):
        key = ("t" if transpose else "f", self.periodic)
        if key not in self._plan:
            taps = self.taps
            if transpose:
                taps = taps[tuple(slice(None, None, -1) for _ in self.shape)]
            if self.periodic:
                ring = np.zeros(self.shape)
                idx = np.meshgrid(
                    *[np.arange(-(s - 1), s) % s for s in self.shape],
                    indexing="ij")
                np.add.at(ring, tuple(idx), taps)
                self._plan[key] = ("circ", sfft.rfftn(ring), self.shape)
            else:
                pad = tuple(sfft.next_fast_len(2 * s - 1) for s in self.shape)
                self._plan[key] = ("pad", sfft.rfftn(taps, s=pad), pad)
        return self._plan[key]

    def matvec(self, x, transpose=False):
        """Compute normalization * sum_j k(i-j) x_j for all i, in O(n log n)."""
        x = np.asarray(x, dtype=float)
        if x.size != self.n:
            raise ShapeError(f"input length {x.size} != lattice size {self.n}")
        xg = x.reshape(self.shape)
        mode, kf, pad = self._get_plan(transpose)
        if mode == "circ":
            v = sfft.irfftn(kf * sfft.rfftn(xg), s=self.shape)
        else:
            full = sfft.irfftn(kf * sfft.rfftn(xg, s=pad), s=pad)
            sl = tuple(slice(s - 1, 2 * s - 1) for s in self.shape)
            v = full[sl]
        return self.normalization * v.reshape(-1)

    def column(self, j):
        """Column j of the weight matrix, s_ij over all i, as a flat vector."""
        if self.periodic:
            ring = self._get_ring_cached()
            idx = np.unravel_index(j, self.shape)
            col = ring
            for ax, (jj, s) in enumerate(zip(idx, self.shape)):
                col = np.roll(col, jj, axis=ax)
            return self.normalization * col.reshape(-1)
        idx = np.unravel_index(j, self.shape)
        sl = tuple(slice(s - 1 - jj, 2 * s - 1 - jj)
                   for jj, s in zip(idx, self.shape))
        return self.normalization * self.taps[sl].reshape(-1)

    def _get_ring_cached(self):
        if "ring" not in self._plan:
            self._plan["ring"] = self._ring()
        return self._plan["ring"]

    def dense_matrix(self):
        """Materialize the n x n weight matrix (oracle / small n only)."""
        return np.stack([self.column(j) for j in range(self.n)], axis=1)

    def column_sums(self, offdiag=False, squared=False):
        """Per-column sums sum_i s_ij (optionally excluding i=j, or of s_ij^2).

        Computed by convolving the (squared) kernel with all-ones, exact in
        both boundary modes.
        """
        norm = self.normalization ** 2 if squared else self.normalization
        if self.periodic:
            # fold first: colliding offsets add up before any squaring
            ring = self._get_ring_cached()
            base = ring ** 2 if squared else ring
            s = np.full(self.n, norm * float(base.sum()))
            if offdiag:
                s = s - norm * float(base.reshape(-1)[0])
            return s
        taps = self.taps ** 2 if squared else self.taps
        spec = KernelSpec(self.shape, taps, periodic=False,
                          normalization=norm)
        # columns of a symmetric-extent kernel sum like rows of the transpose
        s = spec.matvec(np.ones(self.n), transpose=True)
        if offdiag:
            center = tuple(sh - 1 for sh in self.shape)
            s = s - norm * taps[center]
        return s


def convolve_fft(kernel: KernelSpec, x):
    """FFT lattice convolution; exact linear convolution when non-periodic."""
    return kernel.matvec(x)


def sum_dense(weights, x):
    """Exact dense summation, the oracle for all fast paths."""
    weights = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    n = x.size
    if weights.shape != (n, n):
        raise ShapeError(f"weights shape {weights.shape} incompatible with n={n}")
    out = np.empty(n)
    for i in range(n):
        out[i] = np.dot(weights[i], x)
    return out


@dataclass
class TreeConfig:
    leaf_size: int = 8
    opening_angle: float = 0.5

    def __post_init__(self):
        if self.leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        if not (0 < self.opening_angle <= 1.0):
            raise ValueError("opening_angle must lie in (0, 1]")


class _Node:
    __slots__ = ("center", "half", "indices", "children", "centroid")

    def __init__(self, center, half, indices):
        self.center = center
        self.half = half
        self.indices = indices
        self.children = None
        self.centroid = None


def _build_tree(points, indices, center, half, leaf_size):
    node = _Node(center, half, indices)
    node.centroid = points[indices].mean(axis=0)
    if len(indices) > leaf_size and half > 1e-12:
        d = points.shape[1]
        pts = points[indices]
        octant = np.zeros(len(indices), dtype=int)
        for ax in range(d):
            octant |= (pts[:, ax] >= center[ax]).astype(int) << ax
        children = []
        for o in range(1 << d):
            sub = indices[octant == o]
            if len(sub) == 0:
                continue
            offs = np.array([(0.5 if (o >> ax) & 1 else -0.5) * half
                             for ax in range(d)])
            children.append(_build_tree(points, sub, center + offs,
                                        half / 2, leaf_size))
        if len(children) > 1:
            node.children = children
    return node


def sum_tree(points, a, x, cfg: TreeConfig):
    """Barnes-Hut potentials for the Gaussian kernel exp(-a r^2).

    Monopole (cell-sum at centroid) approximation; converges to the dense
    oracle as opening_angle -> 0.  Falls back to dense evaluation on
    degenerate geometry.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    x = np.asarray(x, dtype=float)
    n, d = points.shape
    if d not in (1, 2, 3):
        raise ValueError("sum_tree supports d in {1, 2, 3}")
    if x.size != n:
        raise ShapeError("points/x length mismatch")
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = float((hi - lo).max())
    if n == 1 or extent == 0.0:
        diff = points[:, None, :] - points[None, :, :]
        w = np.exp(-a * (diff ** 2).sum(axis=2))
        return w @ x

    center = (lo + hi) / 2
    root = _build_tree(points, np.arange(n), center, extent / 2,
                       cfg.leaf_size)
    theta = cfg.opening_angle

    # per-node mass sums for this x, gathered once
    def mass(node):
        m = float(x[node.indices].sum())
        masses[id(node)] = m
        if node.children:
            for c in node.children:
                mass(c)

    masses = {}
    mass(root)

    out = np.empty(n)
    for i in range(n):
        q = points[i]
        acc = 0.0
        stack = [root]
        while stack:
            node = stack.pop()
            dist = float(np.sqrt(((q - node.centroid) ** 2).sum()))
            size = 2.0 * node.half
            if node.children is None:
                idx = node.indices
                diff = points[idx] - q
                acc += float(np.exp(-a * (diff ** 2).sum(axis=1)) @ x[idx])
            elif dist > 0 and size / dist < theta:
                acc += np.exp(-a * dist * dist) * masses[id(node)]
            else:
                stack.extend(node.children)
        out[i] = acc
    return out
