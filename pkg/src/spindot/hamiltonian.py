"""Measurement kernel, spin Hamiltonian and cost function.

With ``x_i = S_i / M + 1/2`` the linearized data model is ``phi_p ~ sum_i K[p, i] x_i``,
and the least-squares cost with an L1 penalty towards ``S0 = -M/2``,

    Psi_trunc(S) = 1/2 sum_p (Phi_p - sum_i K[p, i] x_i)^2 + (alpha / M) sum_i (S_i + M/2),

equals ``H(S) + c0`` with

    H(S) = -sum_ij J_ij S_i S_j - sum_i h_i S_i,
    J_ij = -1/(2 M^2) sum_p K[p, i] K[p, j],
    h_i  = M sum_j J_ij + (sum_p Phi_p K[p, i] - alpha) / M.

The double sum in ``H`` runs over both orderings and includes the diagonal.
"""
from __future__ import annotations

import struct
import sys
from dataclasses import dataclass, field

import numpy as np

from .forward import cell_green_matrix
from .greens import QuadratureSpec, green_offsets, green_table
from .model import SpinField

__all__ = [
    "Kernel",
    "HamiltonianModel",
    "Theorem1Report",
    "build_kernel",
    "build_model",
    "energy",
    "delta_energy",
    "cost_psi",
    "theorem1_diagnostic",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class Kernel:
    """``K[p, i] = dmu_max |w| G(x_d, y_i) G(y_i, x_s) / G(x_d, x_s)`` plus the Green's tables used."""

    K: np.ndarray
    grid: object
    sd: object
    bg: object
    delta_mu_a_max: float
    g_det_cells: np.ndarray = field(repr=False)
    g_cells_src: np.ndarray = field(repr=False)
    g_det_src: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.K.shape

    @property
    def tables(self):
        return self.g_det_cells, self.g_cells_src, self.g_det_src


def build_kernel(grid, sd, bg, delta_mu_a_max=0.2, quad=QuadratureSpec()):
    if not delta_mu_a_max > 0:
        raise ValueError("delta_mu_a_max must be positive")
    centers = grid.centers
    g_dc = green_table(sd.detector_points, centers, bg, quad)
    g_cs = green_table(centers, sd.source_points, bg, quad)
    g_ds = green_table(sd.detector_points, sd.source_points, bg, quad)
    s_idx, d_idx = sd.pairs[:, 0], sd.pairs[:, 1]
    K = delta_mu_a_max * grid.area * g_dc[d_idx, :] * g_cs[:, s_idx].T / g_ds[d_idx, s_idx][:, None]
    if not np.all(np.isfinite(K) & (K > 0)):
        p, i = np.argwhere(~(np.isfinite(K) & (K > 0)))[0]
        raise FloatingPointError(f"kernel entry ({p}, {i}) is {K[p, i]}")
    K.setflags(write=False)
    return Kernel(K, grid, sd, bg, float(delta_mu_a_max), g_dc, g_cs, g_ds)


@dataclass(frozen=True)
class HamiltonianModel:
    J: np.ndarray
    h: np.ndarray
    c0: float
    m: int
    alpha: float
    delta_mu_a_max: float = 1.0

    @property
    def n(self):
        return self.h.size


def build_model(kernel, data, alpha, m):
    """Couplings and fields for measured data ``data`` (a MeasurementSet or an array of Phi)."""
    K = kernel.K if isinstance(kernel, Kernel) else np.asarray(kernel, dtype=float)
    dmax = kernel.delta_mu_a_max if isinstance(kernel, Kernel) else 1.0
    phi = np.asarray(getattr(data, "phi", data), dtype=float)
    if phi.shape != (K.shape[0],):
        raise ValueError(f"{phi.size} data values for a kernel with {K.shape[0]} rows")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if int(m) != m or m <= 0 or m % 2:
        raise ValueError(f"m must be a positive even integer, got {m}")
    J = -(K.T @ K) / (2.0 * m * m)
    J = 0.5 * (J + J.T)
    h = m * J.sum(axis=1) + (K.T @ phi - alpha) / m
    c = phi - 0.5 * K.sum(axis=1)
    c0 = 0.5 * float(c @ c) + 0.5 * alpha * K.shape[1]
    for a in (J, h):
        a.setflags(write=False)
    return HamiltonianModel(J=J, h=h, c0=c0, m=int(m), alpha=float(alpha), delta_mu_a_max=dmax)


def _values(s):
    return np.asarray(getattr(s, "values", s), dtype=float)


def energy(model, s):
    """H(S) by the full double sum."""
    v = _values(s)
    if v.size != model.n:
        raise ValueError(f"{v.size} spins for a model with {model.n} sites")
    return float(-(v @ (model.J @ v)) - model.h @ v)


def delta_energy(model, s, i, new):
    """H after setting ``S_i = new`` minus H before, from the local field at ``i``."""
    v = _values(s)
    old = v[i]
    jii = model.J[i, i]
    h_eff = 2.0 * (model.J[i] @ v - jii * old) + model.h[i]
    return float(-(h_eff * (new - old) + jii * (new * new - old * old)))


def cost_psi(kernel, data, alpha, s, include_second_order=False, g_cells=None, diag_offset=0.25):
    """Data misfit plus the L1 penalty ``(alpha / M) sum_i |S_i - S0_i|`` with ``S0 = -M/2``.

    With ``include_second_order`` the prediction adds ``(sum K x)^2 / 2`` and the
    second-Born double sum; ``g_cells`` may supply the cell-to-cell Green's
    matrix for that term.
    """
    m = s.m
    v = s.values.astype(float)
    x = v / m + 0.5
    phi = np.asarray(getattr(data, "phi", data), dtype=float)
    lin = kernel.K @ x
    pred = lin
    if include_second_order:
        pred = lin + 0.5 * lin * lin - second_born_ratio(kernel, x, g_cells, diag_offset)
    resid = phi - pred
    penalty = alpha / m * float(np.sum(np.abs(v + m // 2)))
    return 0.5 * float(resid @ resid) + penalty


def second_born_ratio(kernel, x, g_cells=None, diag_offset=0.25):
    """``v2(x_d) / u0(x_d)`` per pair for the field ``dmu = dmu_max x``."""
    grid, sd = kernel.grid, kernel.sd
    dmu = kernel.delta_mu_a_max * np.asarray(x, dtype=float)
    support = np.flatnonzero(dmu)
    if support.size == 0:
        return np.zeros(sd.n_pairs)
    if g_cells is None:
        g_cc = cell_green_matrix(grid, kernel.bg, cells=support, diag_offset=diag_offset)
    else:
        g_cc = g_cells[np.ix_(support, support)]
    g_dc, g_cs, g_ds = kernel.tables
    left = g_dc[:, support] * dmu[support]
    right = dmu[support, None] * g_cs[support, :]
    full = grid.area**2 * (left @ g_cc @ right)
    s_idx, d_idx = sd.pairs[:, 0], sd.pairs[:, 1]
    return full[d_idx, s_idx] / g_ds[d_idx, s_idx]


@dataclass(frozen=True)
class Theorem1Report:
    triples: np.ndarray
    ratios: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    @property
    def max_ratio(self):
        return float(self.ratios.max())

    @property
    def argmax(self):
        return tuple(int(t) for t in self.triples[int(np.argmax(self.ratios))])

    @property
    def holds(self):
        return self.max_ratio < 1.0

    def summary(self):
        r = self.ratios
        p, i1, i2 = self.argmax
        return {
            "n_triples": int(r.size),
            "max_ratio": self.max_ratio,
            "argmax_pair": p,
            "argmax_cell1": i1,
            "argmax_cell2": i2,
            "mean_ratio": float(r.mean()),
            "median_ratio": float(np.median(r)),
            "fraction_below_1": float(np.mean(r < 1.0)),
            "holds": bool(self.holds),
        }


def theorem1_diagnostic(kernel, triples, phi, quad=QuadratureSpec(), diag_offset=0.25):
    """Ratio ``|phi_p g2| / |g1|`` for each ``(p, i1, i2)`` triple.

    ``g1 = K[p, i1] K[p, i2]`` and ``g2`` subtracts twice the second-Born
    weight of the cell pair; the second-order terms are negligible next to the
    retained ones where the ratio is below one.
    """
    triples = np.atleast_2d(np.asarray(triples, dtype=int))
    if triples.size == 0:
        raise ValueError("need at least one (p, i1, i2) triple")
    phi = np.asarray(getattr(phi, "phi", phi), dtype=float)
    p, i1, i2 = triples.T
    grid, sd = kernel.grid, kernel.sd
    c = grid.centers
    a = c[i1, 0] - c[i2, 0] + np.where(i1 == i2, diag_offset * grid.h, 0.0)
    g_12 = green_offsets(a, c[i1, 1], c[i2, 1], kernel.bg, quad)
    g_dc, g_cs, g_ds = kernel.tables
    s_idx, d_idx = sd.pairs[p, 0], sd.pairs[p, 1]
    g1 = kernel.K[p, i1] * kernel.K[p, i2]
    second = (kernel.delta_mu_a_max * grid.area) ** 2 * g_dc[d_idx, i1] * g_12 * g_cs[i2, s_idx] / g_ds[d_idx, s_idx]
    g2 = g1 - 2.0 * second
    ratios = np.abs(phi[p] * g2) / np.abs(g1)
    return Theorem1Report(triples=triples, ratios=ratios, g1=g1, g2=g2)


# --------------------------------------------------------------------------
# binary dump
#
#   offset  size      field
#   0       8         magic b"SPNHAM01"
#   8       1         byte order tag, b"<" or b">"
#   9       7         zero padding
#   16      8         uint64 n_pairs (rows of K)
#   24      8         uint64 n_cells
#   32      8         int64  m
#   40      8         float64 alpha
#   48      8         float64 c0
#   56      8         float64 delta_mu_a_max
#   64      ...       float64 K (n_pairs x n_cells, row-major), J (n_cells x n_cells), h (n_cells)
#
# all numeric fields use the byte order named by the tag.

_MAGIC = b"SPNHAM01"


def save_model(path, kernel, model):
    K = np.asarray(kernel.K if isinstance(kernel, Kernel) else kernel, dtype=float)
    order = "<" if sys.byteorder == "little" else ">"
    with open(path, "wb") as fh:
        fh.write(_MAGIC + order.encode() + b"\0" * 7)
        fh.write(struct.pack(order + "QQqddd", K.shape[0], K.shape[1], model.m, model.alpha,
                             model.c0, model.delta_mu_a_max))
        for a in (K, model.J, model.h):
            fh.write(np.ascontiguousarray(a, dtype=order + "f8").tobytes())


def load_model(path):
    """Read a dump written by :func:`save_model`; returns ``(K, HamiltonianModel)``."""
    with open(path, "rb") as fh:
        head = fh.read(64)
        if head[:8] != _MAGIC:
            raise ValueError(f"{path}: not a spin Hamiltonian dump")
        order = head[8:9].decode()
        if order not in "<>":
            raise ValueError(f"{path}: bad byte order tag {order!r}")
        n_pairs, n_cells, m, alpha, c0, dmax = struct.unpack(order + "QQqddd", head[16:64])
        dt = np.dtype(order + "f8")
        K = np.frombuffer(fh.read(8 * n_pairs * n_cells), dtype=dt).reshape(n_pairs, n_cells)
        J = np.frombuffer(fh.read(8 * n_cells * n_cells), dtype=dt).reshape(n_cells, n_cells)
        h = np.frombuffer(fh.read(8 * n_cells), dtype=dt)
        if h.size != n_cells:
            raise ValueError(f"{path}: truncated file")
    cast = lambda a: a.astype(float)
    return cast(K), HamiltonianModel(J=cast(J), h=cast(h), c0=c0, m=int(m), alpha=alpha, delta_mu_a_max=dmax)


def spins_from_model(model, values):
    return SpinField(np.asarray(values, dtype=np.int64), model.m, model.delta_mu_a_max)
