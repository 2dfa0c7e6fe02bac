"""Synthetic measurements.

Finite-difference solution of

    -D0 lap u + (mu_a_bar + dmu) u = g0 delta(x - x_s),   -D0 du/dx2 + u / zeta = 0 on x2 = 0,

on a truncated box with homogeneous Dirichlet data on the artificial edges,
plus the Born terms ``v1``, ``v2`` and Rytov data built from the analytic
Green's function.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .greens import QuadratureSpec, green_offsets, green_table

__all__ = [
    "Disk",
    "Phantom",
    "CellField",
    "FdGrid",
    "FdSolver",
    "FdSolveError",
    "MeasurementSet",
    "solve_fd",
    "born_terms",
    "rytov_data",
    "measure",
    "cell_green_matrix",
    "detector_fields",
]

LOGGER = logging.getLogger(__name__)


class FdSolveError(RuntimeError):
    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual


# --------------------------------------------------------------------------
# absorption fields


@dataclass(frozen=True)
class Disk:
    x: float
    y: float
    radius: float
    dmu: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")
        if not self.dmu >= 0:
            raise ValueError(f"disk absorption must be non-negative, got {self.dmu}")


@dataclass(frozen=True)
class Phantom:
    """Sum of disks of constant absorption perturbation."""

    disks: tuple = ()

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for d in self.disks:
            out = out + np.where((x - d.x) ** 2 + (y - d.y) ** 2 <= d.radius**2, d.dmu, 0.0)
        return out

    def scaled(self, factor):
        return Phantom(tuple(Disk(d.x, d.y, d.radius, d.dmu * factor) for d in self.disks))

    def max_value(self):
        return max((d.dmu for d in self.disks), default=0.0)

    def cell_average(self, grid, samples=8):
        """Area-weighted average over each ROI cell (``samples``^2 midpoints per cell)."""
        off = ((np.arange(samples) + 0.5) / samples - 0.5) * grid.h
        c = grid.centers
        sx = c[:, 0, None, None] + off[None, :, None]
        sy = c[:, 1, None, None] + off[None, None, :]
        return self(sx, sy).mean(axis=(1, 2))


@dataclass(frozen=True)
class CellField:
    """Piecewise-constant absorption taking ``values[i]`` in ROI cell ``i``, zero outside."""

    grid: object
    values: np.ndarray

    def __call__(self, x, y):
        idx = self.grid.cell_index(x, y)
        vals = np.asarray(self.values, dtype=float)
        return np.where(idx >= 0, vals[np.maximum(idx, 0)], 0.0)

    def max_value(self):
        return float(np.max(self.values, initial=0.0))


# --------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True)
class FdGrid:
    """Node lattice on ``[-half_width, half_width] x [0, depth]``.

    Nodes on ``x2 = 0`` carry the Robin condition; the other three edges are
    homogeneous Dirichlet.
    """

    half_width: float = 60.0
    depth: float = 60.0
    spacing: float = 0.5
    boundary: str = "dirichlet"

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        for name in ("half_width", "depth"):
            n = getattr(self, name) / self.spacing
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"{name} must be a multiple of the spacing")
        if self.boundary != "dirichlet":
            raise ValueError(f"unsupported truncation boundary {self.boundary!r}")

    @property
    def xs(self):
        n = int(round(self.half_width / self.spacing))
        return self.spacing * np.arange(-n, n + 1)

    @property
    def ys(self):
        return self.spacing * np.arange(int(round(self.depth / self.spacing)) + 1)

    @property
    def shape(self):
        return self.ys.size, self.xs.size

    def check_contains(self, grid, margin=20.0):
        xmin, xmax, ymin, ymax = grid.bounds()
        if xmin - margin < -self.half_width or xmax + margin > self.half_width or ymax + margin > self.depth:
            raise ValueError(
                f"FD box [-{self.half_width}, {self.half_width}] x [0, {self.depth}] "
                f"does not contain the ROI with a {margin} mm margin"
            )

    def node_average(self, dmu, samples=4):
        """Average of the callable ``dmu`` over each node's control volume."""
        h = self.spacing
        off = ((np.arange(samples) + 0.5) / samples - 0.5) * h
        X, Y = np.meshgrid(self.xs, self.ys)
        acc = np.zeros(X.shape)
        for ox in off:
            for oy in off:
                # boundary nodes own only the lower half of their cell
                yy = np.where(Y == 0.0, 0.5 * (oy + 0.5 * h), Y + oy)
                acc += dmu(X + ox, yy)
        return acc / samples**2


class FdSolver:
    """Factorized five-point operator for one absorption field.

    Unknowns are all nodes except the Dirichlet edges. The system is written in
    finite-volume form (rows multiplied by the control area), which keeps it
    symmetric; boundary nodes own a half cell and pick up ``h / zeta`` from the
    Robin flux.
    """

    def __init__(self, bg, dmu=None, fd=FdGrid()):
        self.bg = bg
        self.fd = fd
        ny, nx = fd.shape
        h = fd.spacing
        if dmu is None:
            nodal = np.zeros((ny, nx))
        elif callable(dmu):
            nodal = fd.node_average(dmu)
        else:
            nodal = np.asarray(dmu, dtype=float)
            if nodal.shape != (ny, nx):
                raise ValueError(f"nodal absorption must have shape {(ny, nx)}")
        if np.any(nodal < 0):
            raise ValueError("absorption perturbation must be non-negative")
        self.dmu_nodal = nodal
        mu = bg.mu_a_bar + nodal[:-1, 1:-1]
        m_rows, m_cols = mu.shape
        self._inner_shape = (m_rows, m_cols)
        idx = np.arange(m_rows * m_cols).reshape(m_rows, m_cols)
        d0 = bg.d0
        weight = np.ones((m_rows, m_cols))
        weight[0] = 0.5  # half cells on the Robin row
        diag = mu * h * h * weight
        rows, cols, vals = [], [], []

        def couple(a, b, w):
            rows.extend([a.ravel(), b.ravel()])
            cols.extend([b.ravel(), a.ravel()])
            vals.extend([-w.ravel(), -w.ravel()])

        # lateral links; the Robin row has half-height faces
        wl = d0 * weight[:, :-1]
        couple(idx[:, :-1], idx[:, 1:], wl)
        # vertical links
        wv = np.full((m_rows - 1, m_cols), d0)
        couple(idx[:-1], idx[1:], wv)
        # diagonal: sum of all link weights including those to Dirichlet nodes
        lateral_total = d0 * weight * 2.0
        vertical_total = np.full((m_rows, m_cols), 2.0 * d0)
        vertical_total[0] = d0
        diag = diag + lateral_total + vertical_total
        diag[0] += h / bg.zeta
        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag.ravel())
        A = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(idx.size, idx.size),
        )
        self.matrix = A
        self._lu = spla.splu(A)

    def _load(self, source_xs):
        xs = self.fd.xs[1:-1]
        h = self.fd.spacing
        n_inner = self.matrix.shape[0]
        b = np.zeros((n_inner, len(source_xs)))
        for k, xsrc in enumerate(source_xs):
            pos = (xsrc - xs[0]) / h
            i = int(np.floor(pos))
            frac = pos - i
            if i < 0 or i >= xs.size or (frac > 0 and i + 1 >= xs.size):
                raise ValueError(f"source at x={xsrc} lies outside the FD box")
            b[i, k] += self.bg.g0 * (1.0 - frac)
            if frac > 0:
                b[i + 1, k] += self.bg.g0 * frac
        return b

    def solve(self, source_xs):
        """Nodal fields, shape (n_sources, ny, nx), Dirichlet edges included."""
        source_xs = np.atleast_1d(np.asarray(source_xs, dtype=float))
        b = self._load(source_xs)
        u = self._lu.solve(b)
        res = np.linalg.norm(self.matrix @ u - b, axis=0) / np.linalg.norm(b, axis=0)
        if np.any(res > 1e-8):
            raise FdSolveError(f"linear solve residual {res.max():.3e}", residual=float(res.max()))
        ny, nx = self.fd.shape
        out = np.zeros((source_xs.size, ny, nx))
        out[:, :-1, 1:-1] = u.T.reshape(source_xs.size, *self._inner_shape)
        inner = out[:, :-1, 1:-1]
        if np.any(inner <= 0):
            raise FdSolveError("non-positive photon density in FD solution")
        return out

    def boundary_values(self, u, xs):
        """Linear interpolation of nodal fields along ``x2 = 0``."""
        return np.stack([np.interp(xs, self.fd.xs, field[0]) for field in u])


def solve_fd(bg, dmu, source_xs, fd=FdGrid()):
    """Nodal photon density for each source; ``dmu`` is a callable, nodal array or None."""
    return FdSolver(bg, dmu, fd).solve(source_xs)


# --------------------------------------------------------------------------
# Born and Rytov


def cell_green_matrix(grid, bg, quad=QuadratureSpec(), cells=None, diag_offset=0.25):
    """G among ROI cell centers; coincident entries use a lateral offset of ``diag_offset * h``.

    The 2-D kernel is log-singular at coincidence; shifting the second point by
    a fixed fraction of the cell gives a consistent quadrature of the diagonal.
    """
    c = grid.centers if cells is None else grid.centers[cells]
    a = c[:, None, 0] - c[None, :, 0]
    a = a + np.eye(len(c)) * diag_offset * grid.h
    return green_offsets(a, c[:, None, 1], c[None, :, 1], bg, quad)


def born_terms(bg, dmu, grid, sd, quad=QuadratureSpec(), diag_offset=0.25, tables=None):
    """First and second Born terms at the detector of every pair.

    Returns ``(u0, v1, v2)``, each of length ``sd.n_pairs``, with
    ``u0 = g0 G(x_d, x_s)``,
    ``v1 = -|w| sum_i G(x_d, y_i) dmu_i u0(y_i)`` and
    ``v2 = |w|^2 sum_ij G(x_d, y_i) dmu_i G(y_i, y_j) dmu_j u0(y_j)``.
    ``tables`` may carry precomputed ``(G_det_cells, G_cells_src, G_det_src)``.
    """
    dmu = np.asarray(dmu, dtype=float).ravel()
    if dmu.size != grid.n_cells:
        raise ValueError(f"expected {grid.n_cells} cell values, got {dmu.size}")
    if tables is None:
        tables = (
            green_table(sd.detector_points, grid.centers, bg, quad),
            green_table(grid.centers, sd.source_points, bg, quad),
            green_table(sd.detector_points, sd.source_points, bg, quad),
        )
    g_dc, g_cs, g_ds = tables
    area = grid.area
    g0 = bg.g0
    support = np.flatnonzero(dmu)
    s_idx, d_idx = sd.pairs[:, 0], sd.pairs[:, 1]
    u0 = g0 * g_ds[d_idx, s_idx]
    if support.size == 0:
        zero = np.zeros(sd.n_pairs)
        return u0, zero, zero.copy()
    left = g_dc[:, support] * dmu[support]  # (n_det, n_sup)
    right = g0 * g_cs[support, :]  # (n_sup, n_src)
    v1 = -area * (left @ right)
    g_cc = cell_green_matrix(grid, bg, quad, cells=support, diag_offset=diag_offset)
    v2 = area**2 * (left @ g_cc @ (dmu[support, None] * right))
    return u0, v1[d_idx, s_idx], v2[d_idx, s_idx]


def rytov_data(u0, v1, v2):
    """First and second Rytov data ``(phi_R, phi_R2)`` from Born terms at the detector."""
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 <= 0):
        raise ValueError("unperturbed field must be positive at the detector")
    r1 = np.asarray(v1, dtype=float) / u0
    phi_r = -r1
    phi_r2 = -r1 + 0.5 * r1 * r1 - np.asarray(v2, dtype=float) / u0
    return phi_r, phi_r2


# --------------------------------------------------------------------------
# measurements


@dataclass(frozen=True)
class MeasurementSet:
    phi: np.ndarray
    phi_clean: np.ndarray
    pairs: np.ndarray
    src_x: np.ndarray
    det_x: np.ndarray
    noise_pct: float = 0.0
    seed: int | None = None
    redraws: int = 0
    u: np.ndarray = field(default=None, repr=False)
    u0: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("measurements must be finite")
        if len(self.phi) != len(self.pairs):
            raise ValueError("one datum per source-detector pair required")

    def __len__(self):
        return len(self.phi)


_MAX_REDRAWS = 100


def _noisy(value, rel, rng):
    for k in range(_MAX_REDRAWS):
        out = value * (1.0 + rel * rng.standard_normal())
        if out > 0:
            return out, k
    raise FloatingPointError(f"noisy measurement stayed non-positive after {_MAX_REDRAWS} draws")


def detector_fields(bg, dmu, sd, fd=FdGrid()):
    """FD photon density at every pair's detector, shape (n_pairs,)."""
    solver = FdSolver(bg, dmu, fd)
    u = solver.boundary_values(solver.solve(sd.sources), sd.detectors)
    return u[sd.pairs[:, 0], sd.pairs[:, 1]]


def measure(bg, dmu_truth, sd, noise_pct=0.0, seed=0, fd=FdGrid()):
    """Log-ratio data ``ln(u0 / u)`` at every pair from two FD solves.

    Both fields get independent relative Gaussian noise of ``noise_pct``
    percent. Each pair draws from its own stream keyed by ``(seed, pair)``, so
    the result does not depend on evaluation order.
    """
    if noise_pct < 0:
        raise ValueError("noise_pct must be non-negative")
    u0 = detector_fields(bg, None, sd, fd)
    u = detector_fields(bg, dmu_truth, sd, fd)
    phi_clean = np.log(u0 / u)
    rel = noise_pct / 100.0
    redraws = 0
    if rel > 0:
        un = np.empty_like(u)
        u0n = np.empty_like(u0)
        for p in range(sd.n_pairs):
            rng = np.random.default_rng([int(seed), p])
            un[p], k1 = _noisy(u[p], rel, rng)
            u0n[p], k2 = _noisy(u0[p], rel, rng)
            redraws += k1 + k2
        if redraws:
            LOGGER.info("re-drew %d non-positive noisy values", redraws)
        phi = np.log(u0n / un)
    else:
        phi = phi_clean.copy()
    src_x, det_x = sd.pair_positions()
    return MeasurementSet(
        phi=phi, phi_clean=phi_clean, pairs=sd.pairs, src_x=src_x, det_x=det_x,
        noise_pct=float(noise_pct), seed=seed, redraws=redraws, u=u, u0=u0,
    )
