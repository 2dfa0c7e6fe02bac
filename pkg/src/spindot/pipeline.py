"""Experiment-level helpers shared by the command line and the demo scripts."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .annealer import Schedule, anneal
from .forward import CellField, born_terms, detector_fields, measure, rytov_data
from .greens import QuadratureSpec, green_table
from .hamiltonian import build_kernel, build_model, cost_psi, theorem1_diagnostic
from .model import spin_to_absorption
from .svd import linear_system, tsvd_solve

__all__ = [
    "SaReconstruction",
    "simulate",
    "kernel_for",
    "reconstruct_sa",
    "reconstruct_svd",
    "rytov_scaling",
    "quadrature_crosscheck",
    "fd_u0_error",
    "theorem1_report",
    "peak_position",
    "profile_valley",
]

LOGGER = logging.getLogger(__name__)


def simulate(cfg):
    """Noisy FD measurements of the configured phantom."""
    return measure(cfg.background(), cfg.phantom_model(), cfg.sd_array(), cfg.noise.pct,
                   cfg.noise.seed, cfg.fd_grid())


def kernel_for(cfg):
    return build_kernel(cfg.grid(), cfg.sd_array(), cfg.background(), cfg.anneal.delta_mu_a_max, cfg.quad())


@dataclass
class SaReconstruction:
    dmu: np.ndarray
    spins: object
    energy: float
    psi: float
    trace: list = field(repr=False)
    chain_energies: list = field(default_factory=list)
    runtime: float = 0.0

    def summary(self):
        return {
            "best_energy": self.energy,
            "psi": self.psi,
            "chain_energies": self.chain_energies,
            "runtime_s": self.runtime,
            "min_dmu": float(self.dmu.min()),
            "max_dmu": float(self.dmu.max()),
        }


def reconstruct_sa(cfg, data, kernel=None, n_chains=None):
    """Anneal ``n_chains`` independent chains (seeds ``anneal.seed + k``) and keep the lowest energy."""
    t0 = time.perf_counter()
    a = cfg.anneal
    kernel = kernel_for(cfg) if kernel is None else kernel
    model = build_model(kernel, data, a.alpha, a.m)
    schedule = Schedule(a.t_high, a.t_low, a.n_temps, a.sweeps_per_temp)
    best = None
    energies = []
    for k in range(n_chains or a.n_chains):
        res = anneal(model, schedule, seed=a.seed + k)
        energies.append(res.energy)
        LOGGER.info("chain %d: H = %.12g, acceptance %.4f", k, res.energy, res.accept_rate)
        if best is None or res.energy < best.energy:
            best = res
    psi = cost_psi(kernel, data, a.alpha, best.spins)
    return SaReconstruction(
        dmu=spin_to_absorption(best.spins), spins=best.spins, energy=best.energy, psi=psi,
        trace=best.trace, chain_energies=energies, runtime=time.perf_counter() - t0,
    )


def reconstruct_svd(cfg, data, kernel=None, ranks=None):
    """``{rank: TsvdSolution}`` for each requested truncation rank."""
    kernel = kernel_for(cfg) if kernel is None else kernel
    system = linear_system(kernel, data)
    return {k: tsvd_solve(system, k) for k in (ranks or cfg.svd.ranks)}


def rytov_scaling(cfg, contrasts=None, kernel=None):
    """Rytov approximation error against FD data as the phantom contrast shrinks.

    Each row holds ``contrast``, ``max|phi|``, ``max|phi - phi_R|``,
    ``max|phi - phi_R2|``, ``max|u - u_R|`` at the detectors with
    ``u_R = u0 exp(v1 / u0)``, the same difference divided by ``u0`` and the
    constant ``C = (exp(max|phi|) - 1) / contrast``.
    """
    bg, grid, sd, fd = cfg.background(), cfg.grid(), cfg.sd_array(), cfg.fd_grid()
    kernel = kernel_for(cfg) if kernel is None else kernel
    base = cfg.phantom_model()
    peak = base.max_value()
    if peak <= 0:
        raise ValueError("phantom has no contrast to scale")
    contrasts = cfg.diagnostics.contrasts if contrasts is None else contrasts
    u0_fd = detector_fields(bg, None, sd, fd)
    rows = []
    for c in contrasts:
        ph = base.scaled(c / peak)
        cells = ph.cell_average(grid)
        u_fd = detector_fields(bg, CellField(grid, cells), sd, fd) if c > 0 else u0_fd
        phi = np.log(u0_fd / u_fd)
        u0, v1, v2 = born_terms(bg, cells, grid, sd, cfg.quad(), cfg.diagnostics.diag_offset, kernel.tables)
        phi_r, phi_r2 = rytov_data(u0, v1, v2)
        u_r = u0_fd * np.exp(v1 / u0)
        lemma1 = np.abs(u_fd - u_r).max()
        lemma1_rel = np.abs((u_fd - u_r) / u0_fd).max()
        max_phi = float(np.abs(phi).max())
        rows.append({
            "contrast": float(c),
            "max_phi": max_phi,
            "err_rytov1": float(np.abs(phi - phi_r).max()),
            "err_rytov2": float(np.abs(phi - phi_r2).max()),
            "lemma1_abs": float(lemma1),
            "lemma1_rel": float(lemma1_rel),
            "c2_fit": float(np.expm1(max_phi) / c) if c > 0 else 0.0,
        })
    return rows


def quadrature_crosscheck(bg, points_a=None, points_b=None, quad=QuadratureSpec()):
    """Maximum relative difference between the DE and adaptive Green's routes on a 5 x 5 table."""
    if points_a is None:
        points_a = np.array([[-28.0, 0.0], [-2.0, 0.0], [0.0, 0.0], [6.0, 3.0], [14.0, 12.0]])
    if points_b is None:
        points_b = np.array([[0.0, 1.0], [7.0, 4.0], [-20.0, 10.0], [2.0, 25.0], [30.0, 30.0]])
    de = green_table(points_a, points_b, bg, quad)
    oracle = green_table(points_a, points_b, bg, QuadratureSpec("adaptive", 1e-14, 1e-12, quad.max_evals))
    return float(np.max(np.abs(de / oracle - 1.0))), de, oracle


def fd_u0_error(cfg):
    """Max relative deviation of FD detector readings from ``g0 G(x_d, x_s)`` with no perturbation."""
    bg, sd = cfg.background(), cfg.sd_array()
    u_fd = detector_fields(bg, None, sd, cfg.fd_grid())
    g = green_table(sd.detector_points, sd.source_points, bg, cfg.quad())
    u_an = bg.g0 * g[sd.pairs[:, 1], sd.pairs[:, 0]]
    return float(np.max(np.abs(u_fd / u_an - 1.0)))


def theorem1_report(cfg, data, kernel=None, n_triples=None, seed=None):
    kernel = kernel_for(cfg) if kernel is None else kernel
    n = cfg.diagnostics.n_triples if n_triples is None else n_triples
    rng = np.random.default_rng(cfg.diagnostics.seed if seed is None else seed)
    n_pairs, n_cells = kernel.shape
    triples = np.column_stack([
        rng.integers(0, n_pairs, n), rng.integers(0, n_cells, n), rng.integers(0, n_cells, n),
    ])
    return theorem1_diagnostic(kernel, triples, data, cfg.quad(), cfg.diagnostics.diag_offset)


# --------------------------------------------------------------------------
# image metrics


def peak_position(grid, values, where=None):
    """Center of the cell with the largest value (restricted to the boolean mask ``where``)."""
    v = np.asarray(values, dtype=float).copy()
    if where is not None:
        v[~where] = -np.inf
    return grid.centers[int(np.argmax(v))]


def profile_valley(grid, values, depth, left_x, right_x, window=5.0):
    """Row profile at ``depth``: peaks near ``left_x`` and ``right_x`` and the dip between them.

    Returns ``(left_peak_x, right_peak_x, left_peak, right_peak, valley, depth_of_dip)`` where
    ``depth_of_dip = 1 - valley / min(peaks)``.
    """
    row = int(np.argmin(np.abs(grid.ys - depth)))
    prof = grid.to_image(values)[row]
    xs = grid.xs
    lmask = np.abs(xs - left_x) <= window
    rmask = np.abs(xs - right_x) <= window
    li = np.flatnonzero(lmask)[np.argmax(prof[lmask])]
    ri = np.flatnonzero(rmask)[np.argmax(prof[rmask])]
    lo, hi = sorted((li, ri))
    valley = float(prof[lo:hi + 1].min())
    low_peak = float(min(prof[li], prof[ri]))
    dip = 1.0 - valley / low_peak if low_peak > 0 else 0.0
    return float(xs[li]), float(xs[ri]), float(prof[li]), float(prof[ri]), valley, dip
