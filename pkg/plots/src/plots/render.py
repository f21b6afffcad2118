"""Figure rendering: four figure types from simulation output files.

- raster:  PBM snapshot sequence -> site-index x time panel(s), black =
  occupied, white = empty; optional error-location panel, errors in black.
  The raster pixel grid is exactly (n_sites x n_samples): one pixel per
  site per sampled time, no resampling.
- cummax:  errors.csv -> running-maximum error curves per method.
- normerr: normerr.csv -> replicate-averaged normalized error with
  standard-error bars against the predicted curve.
- speedup: bench.csv -> grouped bars of speedup vs lattice exponent m.
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .io import ParseError, read_csv, read_pbm  # noqa: E402

FIGURES = ("raster", "cummax", "normerr", "speedup")

# fixed style so rendering is a pure function of the inputs
_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
_META = {"Software": "plots"}


@dataclass
class FigureSpec:
    """One figure to render: type, input paths, output path, labels."""

    figure: str
    inputs: dict
    out: str
    labels: dict = field(default_factory=dict)

    _INPUT_KEYS = {
        "raster": ("snapshots", "errors"),
        "cummax": ("errors_csv",),
        "normerr": ("normerr_csv",),
        "speedup": ("bench_csv",),
    }

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise ParseError(f"unknown figure type {self.figure!r}; "
                             f"expected one of {FIGURES}")
        allowed = self._INPUT_KEYS[self.figure]
        for key in self.inputs:
            if key not in allowed:
                raise ParseError(
                    f"figure {self.figure!r} does not take input {key!r}")
        if not self.inputs.get(allowed[0]):
            raise ParseError(
                f"figure {self.figure!r} requires input {allowed[0]!r}")
        for key, value in self.inputs.items():
            paths = value if isinstance(value, list) else [value]
            for p in paths:
                if not os.path.exists(p):
                    raise FileNotFoundError(f"input file not found: {p}")

    @classmethod
    def from_json(cls, path):
        with open(path, "r") as fh:
            raw = json.load(fh)
        known = {"figure", "out", "labels"}
        inputs = {k: v for k, v in raw.items() if k not in known}
        for key in ("figure", "out"):
            if key not in raw:
                raise ParseError(f"{path}: missing required key {key!r}")
        base = os.path.dirname(os.path.abspath(path))

        def absolutize(v):
            if isinstance(v, list):
                return [absolutize(x) for x in v]
            return v if os.path.isabs(v) else os.path.join(base, v)

        inputs = {k: absolutize(v) for k, v in inputs.items()}
        return cls(figure=raw["figure"], inputs=inputs,
                   out=absolutize(raw["out"]),
                   labels=raw.get("labels", {}))


# ---------------------------------------------------------------------------
# minimal deterministic PNG writer (8-bit grayscale, no ancillary chunks)

def write_png_gray(path, img):
    """Write a uint8 grayscale image; pixel grid is exactly img.shape."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("expected a 2-d grayscale image")
    h, w = img.shape

    def chunk(tag, data):
        body = tag + data
        return (struct.pack(">I", len(data)) + body
                + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF))

    raw = b"".join(b"\x00" + img[r].tobytes() for r in range(h))
    png = (b"\x89PNG\r\n\x1a\n"
           + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0))
           + chunk(b"IDAT", zlib.compress(raw, 9))
           + chunk(b"IEND", b""))
    with open(path, "wb") as fh:
        fh.write(png)


def png_dimensions(path):
    """Return (height, width) from a PNG's IHDR chunk."""
    with open(path, "rb") as fh:
        head = fh.read(24)
    if head[:8] != b"\x89PNG\r\n\x1a\n" or head[12:16] != b"IHDR":
        raise ParseError(f"{path}:1: not a PNG file")
    w, h = struct.unpack(">II", head[16:24])
    return h, w


# ---------------------------------------------------------------------------
# renderers

def _stack_snapshots(paths):
    """Flatten each PBM snapshot and stack as time columns: (n_sites, n_t)."""
    cols = []
    for p in paths:
        bits = read_pbm(p).reshape(-1)
        if cols and bits.size != cols[0].size:
            raise ParseError(f"{p}:1: snapshot size {bits.size} differs "
                             f"from first snapshot {cols[0].size}")
        cols.append(bits)
    return np.stack(cols, axis=1)


def _render_raster(spec):
    occ = _stack_snapshots(spec.inputs["snapshots"])
    # black/white convention: occupied (1) -> black pixel
    write_png_gray(spec.out, np.where(occ > 0, 0, 255))
    written = [spec.out]
    if spec.inputs.get("errors"):
        diff = _stack_snapshots(spec.inputs["errors"])
        root, ext = os.path.splitext(spec.out)
        err_path = root + "_errors" + (ext or ".png")
        write_png_gray(err_path, np.where(diff > 0, 0, 255))
        written.append(err_path)
    return written


def _finish_axes(ax, spec, xlabel, ylabel):
    ax.set_xlabel(spec.labels.get("xlabel", xlabel))
    ax.set_ylabel(spec.labels.get("ylabel", ylabel))
    if spec.labels.get("title"):
        ax.set_title(spec.labels["title"])


def _save(fig, out):
    fig.savefig(out, metadata=_META)
    plt.close(fig)
    return [out]


def _render_cummax(spec):
    cols = read_csv(spec.inputs["errors_csv"])
    if "t" not in cols:
        raise ParseError(f"{spec.inputs['errors_csv']}:1: no 't' column")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        styles = {"euler": ("k-", "Euler"), "midpoint": ("k--", "midpoint")}
        for method, (style, label) in styles.items():
            key = f"cummax_{method}"
            if key in cols and len(cols["t"]):
                ax.plot(cols["t"], cols[key], style, label=label)
        if ax.lines:
            ax.legend(loc="best")
        _finish_axes(ax, spec, "t", "running max error fraction")
        fig.tight_layout()
        return _save(fig, spec.out)


def _render_normerr(spec):
    cols = read_csv(spec.inputs["normerr_csv"])
    for key in ("t", "observed_mean", "observed_stderr", "predicted"):
        if key not in cols:
            raise ParseError(
                f"{spec.inputs['normerr_csv']}:1: no {key!r} column")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        if len(cols["t"]):
            ax.errorbar(cols["t"], cols["observed_mean"],
                        yerr=cols["observed_stderr"], fmt="ko",
                        markersize=3, capsize=2, label="observed")
            ax.plot(cols["t"], cols["predicted"], "k--", label="predicted")
            ax.legend(loc="best")
        _finish_axes(ax, spec, "t", "normalized error")
        fig.tight_layout()
        return _save(fig, spec.out)


def _render_speedup(spec):
    cols = read_csv(spec.inputs["bench_csv"])
    for key in ("m", "method", "speedup_vs_exact"):
        if key not in cols:
            raise ParseError(f"{spec.inputs['bench_csv']}:1: "
                             f"no {key!r} column")
    methods = ("euler", "midpoint")
    ms = sorted({int(m) for m in cols["m"]})
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        width = 0.35
        shades = {"euler": "0.2", "midpoint": "0.6"}
        for k, method in enumerate(methods):
            vals = []
            for m in ms:
                sel = [i for i in range(len(cols["m"]))
                       if int(cols["m"][i]) == m
                       and cols["method"][i] == method]
                vals.append(float(cols["speedup_vs_exact"][sel[0]])
                            if sel else 0.0)
            pos = [m + (k - 0.5) * width for m in ms]
            ax.bar(pos, vals, width, color=shades[method], label=method)
        ax.set_xticks(ms)
        ax.axhline(1.0, color="k", linewidth=0.8)
        if ms:
            ax.legend(loc="best")
        _finish_axes(ax, spec, "m (side = 2^m)", "speedup vs exact")
        fig.tight_layout()
        return _save(fig, spec.out)


_RENDERERS = {
    "raster": _render_raster,
    "cummax": _render_cummax,
    "normerr": _render_normerr,
    "speedup": _render_speedup,
}


def render(spec: FigureSpec):
    """Render one figure; returns the list of files written."""
    out_dir = os.path.dirname(os.path.abspath(spec.out))
    os.makedirs(out_dir, exist_ok=True)
    return _RENDERERS[spec.figure](spec)
