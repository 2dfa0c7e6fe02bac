"""Geometry, optical constants and the spin <-> absorption codec.

Units are millimetres throughout; absorption and scattering in mm^-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OpticalBackground",
    "RoiGrid",
    "SdArray",
    "SpinField",
    "reflection_rd",
    "spin_to_absorption",
    "absorption_to_spin",
    "build_sd_array",
]


def reflection_rd(n):
    """Diffuse internal reflection of a tissue/vacuum interface (Egan-Hilgeman fit)."""
    return -1.4399 / n**2 + 0.7099 / n + 0.6681 + 0.0636 * n


@dataclass(frozen=True)
class OpticalBackground:
    """Homogeneous medium constants.

    ``ell`` (the extrapolation length) is always derived as ``zeta * d0``.
    """

    d0: float
    mu_a_bar: float
    zeta: float
    mu_s_prime: float = float("nan")
    refractive_index: float = float("nan")
    g0: float = 1.0
    ell: float = field(init=False)

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError(f"d0 must be positive, got {self.d0}")
        if not self.mu_a_bar >= 0:
            raise ValueError(f"mu_a_bar must be non-negative, got {self.mu_a_bar}")
        if not self.zeta > 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")
        if not self.g0 > 0:
            raise ValueError(f"g0 must be positive, got {self.g0}")
        object.__setattr__(self, "ell", self.zeta * self.d0)

    @classmethod
    def from_tissue(cls, mu_a_bar=0.02, mu_s_prime=1.0, refractive_index=1.37, g0=1.0):
        """Build the background from absorption, reduced scattering and refractive index.

        ``d0 = 1 / (3 (mu_a + mu_s'))`` and ``zeta = 2 (1 + r_d) / (1 - r_d)``.
        """
        if not mu_s_prime > 0:
            raise ValueError(f"mu_s_prime must be positive, got {mu_s_prime}")
        if not refractive_index > 0:
            raise ValueError(f"refractive_index must be positive, got {refractive_index}")
        d0 = 1.0 / (3.0 * (mu_a_bar + mu_s_prime))
        rd = reflection_rd(refractive_index)
        zeta = 2.0 * (1.0 + rd) / (1.0 - rd)
        return cls(d0=d0, mu_a_bar=mu_a_bar, zeta=zeta, mu_s_prime=mu_s_prime,
                   refractive_index=refractive_index, g0=g0)

    @property
    def kappa(self):
        """Inverse diffusion length sqrt(mu_a_bar / d0) in mm^-1."""
        return np.sqrt(self.mu_a_bar / self.d0)


@dataclass(frozen=True)
class RoiGrid:
    """Square cells of side ``h`` tiling the region of interest.

    Cell centers are at ``x = x0 + k h`` for ``k = -nx..nx`` and
    ``y = y0 + (j + 1) h`` for ``j = 0..ny-1``; the default ``y0 = 0`` puts the
    shallowest row of centers at depth ``h``. Cells are numbered row-major,
    shallowest row first.
    """

    nx: int = 30
    ny: int = 30
    h: float = 1.0
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 0 or self.ny < 1:
            raise ValueError(f"invalid grid size nx={self.nx}, ny={self.ny}")
        if not self.h > 0:
            raise ValueError(f"cell size must be positive, got {self.h}")
        if self.y0 + 0.5 * self.h < 0:
            raise ValueError("region of interest must lie inside the half-space")

    @property
    def width(self):
        return 2 * self.nx + 1

    @property
    def n_cells(self):
        return self.width * self.ny

    @property
    def area(self):
        return self.h * self.h

    @property
    def xs(self):
        return self.x0 + self.h * np.arange(-self.nx, self.nx + 1, dtype=float)

    @property
    def ys(self):
        return self.y0 + self.h * np.arange(1, self.ny + 1, dtype=float)

    @property
    def centers(self):
        """(N, 2) array of cell centers, row-major, shallowest row first."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def bounds(self):
        """(xmin, xmax, ymin, ymax) of the tiled region."""
        xs, ys = self.xs, self.ys
        half = 0.5 * self.h
        return xs[0] - half, xs[-1] + half, ys[0] - half, ys[-1] + half

    def to_image(self, values):
        """Reshape a per-cell vector into a (ny, width) image, row 0 shallowest."""
        values = np.asarray(values)
        if values.shape != (self.n_cells,):
            raise ValueError(f"expected {self.n_cells} cell values, got shape {values.shape}")
        return values.reshape(self.ny, self.width)

    def cell_index(self, x, y):
        """Index of the cell containing point (x, y), or -1 when outside."""
        col = np.floor((np.asarray(x) - self.x0) / self.h + 0.5).astype(int) + self.nx
        row = np.floor((np.asarray(y) - self.y0) / self.h - 0.5).astype(int)
        inside = (col >= 0) & (col < self.width) & (row >= 0) & (row < self.ny)
        return np.where(inside, row * self.width + col, -1)


@dataclass(frozen=True)
class SdArray:
    """Boundary sources and detectors and the list of (source, detector) pairs."""

    sources: np.ndarray
    detectors: np.ndarray
    pairs: np.ndarray

    @property
    def n_pairs(self):
        return len(self.pairs)

    @property
    def source_points(self):
        return np.column_stack([self.sources, np.zeros_like(self.sources)])

    @property
    def detector_points(self):
        return np.column_stack([self.detectors, np.zeros_like(self.detectors)])

    def pair_positions(self):
        """Lateral (source x, detector x) for every pair."""
        return self.sources[self.pairs[:, 0]], self.detectors[self.pairs[:, 1]]


def build_sd_array(source_xs, detector_xs):
    """Fully crossed source/detector array in source-major pair order."""
    src = np.asarray(source_xs, dtype=float).ravel()
    det = np.asarray(detector_xs, dtype=float).ravel()
    if src.size == 0 or det.size == 0:
        raise ValueError("need at least one source and one detector")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(det))):
        raise ValueError("source/detector coordinates must be finite")
    s, d = np.meshgrid(np.arange(src.size), np.arange(det.size), indexing="ij")
    pairs = np.column_stack([s.ravel(), d.ravel()])
    for a in (src, det, pairs):
        a.setflags(write=False)
    return SdArray(sources=src, detectors=det, pairs=pairs)


@dataclass(frozen=True)
class SpinField:
    """Integer spins ``S_i`` in ``[-m/2, m/2]`` and the absorption scale they encode."""

    values: np.ndarray
    m: int
    delta_mu_a_max: float

    def __post_init__(self):
        m = self.m
        if int(m) != m or m <= 0 or m % 2:
            raise ValueError(f"m must be a positive even integer, got {m}")
        if not self.delta_mu_a_max > 0:
            raise ValueError(f"delta_mu_a_max must be positive, got {self.delta_mu_a_max}")
        raw = np.asarray(self.values)
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                bad = int(np.flatnonzero(~np.isfinite(raw) | (raw != np.round(raw)))[0])
                raise ValueError(f"spin at cell {bad} is not an integer: {raw[bad]}")
        elif raw.dtype.kind not in "iu":
            raise TypeError(f"spins must be integers, got dtype {raw.dtype}")
        vals = raw.astype(np.int64).ravel()
        out = np.abs(vals) > m // 2
        if np.any(out):
            bad = int(np.flatnonzero(out)[0])
            raise ValueError(f"spin at cell {bad} is {vals[bad]}, outside [-{m // 2}, {m // 2}]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "m", int(m))

    @classmethod
    def uniform(cls, n, value, m, delta_mu_a_max):
        return cls(np.full(n, value, dtype=np.int64), m, delta_mu_a_max)

    def __len__(self):
        return self.values.size


def spin_to_absorption(s):
    """Decode spins to per-cell absorption perturbation, ``dmu_max (S/M + 1/2)``."""
    return s.delta_mu_a_max * (s.values / s.m + 0.5)


def absorption_to_spin(dmu, m, delta_mu_a_max):
    """Nearest spin level for each cell's absorption perturbation."""
    dmu = np.asarray(dmu, dtype=float).ravel()
    bad = ~np.isfinite(dmu) | (dmu < 0) | (dmu > delta_mu_a_max)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"absorption at cell {i} is {dmu[i]}, outside [0, {delta_mu_a_max}]")
    s = np.rint(m * (dmu / delta_mu_a_max - 0.5)).astype(np.int64)
    np.clip(s, -(m // 2), m // 2, out=s)
    return SpinField(s, m, delta_mu_a_max)
