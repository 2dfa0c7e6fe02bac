"""Truncated-SVD reconstruction of the first-order Rytov system ``A dmu = Phi``."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

__all__ = ["LinearSystem", "TsvdSolution", "linear_system", "tsvd_solve"]


@dataclass(frozen=True)
class LinearSystem:
    """Sensitivity matrix ``A[p, i] = |w| G(x_d, y_i) G(y_i, x_s) / G(x_d, x_s)`` and data."""

    A: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        if self.A.ndim != 2 or self.phi.shape != (self.A.shape[0],):
            raise ValueError(f"inconsistent system: A {self.A.shape}, phi {self.phi.shape}")

    @cached_property
    def svd(self):
        """``(U, s, Vt)`` with the largest-magnitude entry of every right singular vector positive."""
        U, s, Vt = np.linalg.svd(self.A, full_matrices=False)
        flip = np.sign(Vt[np.arange(Vt.shape[0]), np.argmax(np.abs(Vt), axis=1)])
        flip[flip == 0] = 1.0
        return U * flip, s, Vt * flip[:, None]

    @property
    def rank(self):
        s = self.svd[1]
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > s[0] * max(self.A.shape) * np.finfo(float).eps))


class TsvdSolution(NamedTuple):
    x: np.ndarray
    k_effective: int
    singular_values: np.ndarray


def linear_system(kernel, data):
    """The system behind ``kernel``, rescaled so the unknown is the absorption itself."""
    phi = np.asarray(getattr(data, "phi", data), dtype=float)
    return LinearSystem(np.asarray(kernel.K) / kernel.delta_mu_a_max, phi)


def tsvd_solve(system, k):
    """Keep the ``k`` largest singular triplets: ``x = sum_j (u_j . Phi / s_j) v_j``.

    Singular values at or below the numerical rank cutoff are skipped, so
    ``k_effective`` can be smaller than ``k``.
    """
    n_max = min(system.A.shape)
    if not 1 <= k <= n_max:
        raise ValueError(f"k must be in [1, {n_max}], got {k}")
    U, s, Vt = system.svd
    k_eff = min(k, system.rank)
    coef = (U[:, :k_eff].T @ system.phi) / s[:k_eff]
    return TsvdSolution(Vt[:k_eff].T @ coef, k_eff, s[:k_eff].copy())
