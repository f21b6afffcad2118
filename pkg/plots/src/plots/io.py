"""Readers for the simulation CLI's file formats (CSV series, PBM P4)."""

import numpy as np


class ParseError(ValueError):
    """Raised when an input file cannot be parsed; names file and line."""


def read_csv(path):
    """Parse a headed CSV of floats into {column: ndarray}.

    Non-numeric cells are kept as strings (e.g. the ``method`` column of
    bench.csv).  Malformed rows raise ParseError naming the line.
    """
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ParseError(f"{path}:1: empty file, expected a header row")
    header = lines[0].split(",")
    columns = {name: [] for name in header}
    if len(set(header)) != len(header):
        raise ParseError(f"{path}:1: duplicate column names in header")
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(
                f"{path}:{lineno}: expected {len(header)} cells, "
                f"got {len(cells)}")
        for name, cell in zip(header, cells):
            columns[name].append(cell)
    out = {}
    for name, cells in columns.items():
        try:
            out[name] = np.array([float(c) for c in cells])
        except ValueError:
            out[name] = np.array(cells, dtype=object)
    return out


def read_pbm(path):
    """Read a binary P4 PBM into a {0,1} uint8 array of shape (h, w)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 3 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) != 3 or tokens[0] != b"P4":
        raise ParseError(f"{path}:1: not a binary P4 PBM")
    try:
        w, h = int(tokens[1]), int(tokens[2])
    except ValueError:
        raise ParseError(f"{path}:1: bad PBM dimensions") from None
    pos += 1                                  # single whitespace after header
    row_bytes = (w + 7) // 8
    raw = np.frombuffer(data, dtype=np.uint8, count=h * row_bytes, offset=pos)
    bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w]
    return bits.astype(np.uint8)
