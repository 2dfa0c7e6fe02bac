"""CSV and PGM emitters.

CSV floats are written with ``repr`` so they round-trip exactly. PGM files are
binary 16-bit grayscale (``P5``, maxval 65535, big-endian samples), one pixel
per ROI cell, row 0 shallowest.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .forward import MeasurementSet

MEASUREMENT_HEADER = ["pair", "src_x_mm", "det_x_mm", "phi_noisy", "phi_clean"]
MAP_HEADER = ["cell", "x_mm", "y_mm", "delta_mu_a"]
TRACE_HEADER = ["temp", "energy", "best_energy", "accept_rate"]


def _f(v):
    return repr(float(v))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _read_rows(path, header):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        got = next(r, None)
        if got != header:
            raise ValueError(f"{path}: expected header {','.join(header)}, got {got}")
        return [row for row in r if row]


def write_measurements(path, ms):
    rows = (
        [p, _f(sx), _f(dx), _f(a), _f(b)]
        for p, (sx, dx, a, b) in enumerate(zip(ms.src_x, ms.det_x, ms.phi, ms.phi_clean))
    )
    return _write_rows(path, MEASUREMENT_HEADER, rows)


def read_measurements(path, sd=None):
    """Load a measurement CSV; with ``sd`` given, check pair positions match it."""
    rows = _read_rows(path, MEASUREMENT_HEADER)
    data = np.array([[float(v) for v in row[1:]] for row in rows]).reshape(-1, 4)
    idx = np.array([int(row[0]) for row in rows])
    if not np.array_equal(idx, np.arange(idx.size)):
        raise ValueError(f"{path}: pair indices must run 0..{idx.size - 1} in order")
    src_x, det_x, phi, clean = data.T
    pairs = None
    if sd is not None:
        if len(rows) != sd.n_pairs:
            raise ValueError(f"{path}: {len(rows)} pairs, geometry has {sd.n_pairs}")
        exp_s, exp_d = sd.pair_positions()
        if not (np.allclose(src_x, exp_s) and np.allclose(det_x, exp_d)):
            raise ValueError(f"{path}: source/detector positions do not match the configured array")
        pairs = sd.pairs
    if pairs is None:
        pairs = np.column_stack([idx, idx])
    return MeasurementSet(phi=phi, phi_clean=clean, pairs=pairs, src_x=src_x, det_x=det_x)


def write_map(path, grid, values):
    c = grid.centers
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_cells,):
        raise ValueError(f"expected {grid.n_cells} values, got {values.shape}")
    rows = ([i, _f(x), _f(y), _f(v)] for i, ((x, y), v) in enumerate(zip(c, values)))
    return _write_rows(path, MAP_HEADER, rows)


def read_map(path):
    """Returns ``(centers (N, 2), values (N,))``."""
    rows = _read_rows(path, MAP_HEADER)
    data = np.array([[float(v) for v in row[1:]] for row in rows]).reshape(-1, 3)
    return data[:, :2], data[:, 2]


def write_trace(path, trace):
    rows = ([_f(v) for v in rec] for rec in trace)
    return _write_rows(path, TRACE_HEADER, rows)


def read_trace(path):
    rows = _read_rows(path, TRACE_HEADER)
    return np.array([[float(v) for v in row] for row in rows]).reshape(-1, 4)


def write_pgm(path, image, vmax, vmin=0.0):
    """Map ``[vmin, vmax]`` linearly onto ``[0, 65535]``.

    Out-of-range pixels are clamped; in that case a ``<path>.txt`` sidecar
    records the true minimum and maximum. Returns True when clamping occurred.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if not vmax > vmin:
        raise ValueError("vmax must exceed vmin")
    scaled = np.rint((image - vmin) / (vmax - vmin) * 65535.0)
    clamped = bool(np.any(scaled < 0) or np.any(scaled > 65535))
    pix = np.clip(scaled, 0, 65535).astype(">u2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())
    sidecar = path.with_name(path.name + ".txt")
    if clamped:
        sidecar.write_text(
            f"clamped to [{vmin!r}, {vmax!r}]\nmin {float(image.min())!r}\nmax {float(image.max())!r}\n"
        )
    elif sidecar.exists():
        sidecar.unlink()
    return clamped


def read_pgm(path):
    """Read a binary 16-bit PGM written by :func:`write_pgm`; returns uint16 array."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM, maxval {maxval}")
    pix = np.frombuffer(raw[pos:pos + 2 * width * height], dtype=">u2")
    return pix.reshape(height, width).astype(np.uint16)
