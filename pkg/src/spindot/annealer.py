"""Single-component Metropolis sampling and simulated annealing of the spin Hamiltonian.

Sites are visited in fixed cyclic order. Each proposal draws a new level
uniformly from all ``M + 1`` values (the current one included) and is
accepted with probability ``min(1, exp(-beta dH))``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .hamiltonian import energy
from .model import SpinField

__all__ = [
    "Schedule",
    "ChainState",
    "AnnealResult",
    "propose",
    "new_chain",
    "metropolis_step",
    "sweep",
    "run_sweeps",
    "anneal",
]

LOGGER = logging.getLogger(__name__)

RESYNC_SWEEPS = 100


@dataclass(frozen=True)
class Schedule:
    t_high: float = 1e-5
    t_low: float = 1e-10
    n_temps: int = 200
    sweeps_per_temp: int = 20

    def __post_init__(self):
        if not 0 < self.t_low < self.t_high:
            raise ValueError(f"need 0 < t_low < t_high, got {self.t_low}, {self.t_high}")
        if self.n_temps < 2:
            raise ValueError("n_temps must be at least 2")
        if self.sweeps_per_temp < 1:
            raise ValueError("sweeps_per_temp must be at least 1")

    @property
    def decay(self):
        return (self.t_low / self.t_high) ** (1.0 / (self.n_temps - 1))

    def temperatures(self):
        k = np.arange(self.n_temps)
        temps = self.t_high * (self.t_low / self.t_high) ** (k / (self.n_temps - 1))
        temps[-1] = self.t_low
        return temps


@dataclass
class ChainState:
    spins: np.ndarray
    energy: float
    field: np.ndarray  # J @ spins, diagonal included
    best_spins: np.ndarray
    best_energy: float
    rng: np.random.Generator
    accepted: int = 0
    proposed: int = 0
    sweeps: int = 0

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposed if self.proposed else 0.0

    def resync(self, model):
        s = self.spins.astype(float)
        self.field = model.J @ s
        self.energy = float(-(s @ self.field) - model.h @ s)


@dataclass(frozen=True)
class AnnealResult:
    spins: SpinField
    energy: float
    trace: list = field(repr=False)
    accept_rate: float = 0.0


def propose(rng, m):
    """Uniform draw from ``{-m/2, ..., m/2}``."""
    half = m // 2
    return int(rng.integers(-half, half + 1))


def new_chain(model, rng, initial=None):
    if initial is None:
        half = model.m // 2
        spins = rng.integers(-half, half + 1, size=model.n).astype(np.int64)
    else:
        spins = np.array(getattr(initial, "values", initial), dtype=np.int64)
        if spins.size != model.n:
            raise ValueError(f"initial configuration has {spins.size} sites, model has {model.n}")
    state = ChainState(spins, 0.0, np.zeros(model.n), spins.copy(), np.inf, rng)
    state.resync(model)
    state.best_energy = state.energy
    return state


def metropolis_step(model, state, i, beta, new=None, u=None):
    """One Metropolis update at site ``i``; returns True when accepted.

    ``new`` and ``u`` (the proposed level and the acceptance uniform) are drawn
    from the chain's generator unless given.
    """
    if new is None:
        new = propose(state.rng, model.m)
    old = state.spins[i]
    jii = model.J[i, i]
    h_eff = 2.0 * (state.field[i] - jii * old) + model.h[i]
    dh = -(h_eff * (new - old) + jii * (new * new - old * old))
    w = beta * dh
    state.proposed += 1
    if w <= 0:
        accept = True
    else:
        if u is None:
            u = state.rng.random()
        accept = u < math.exp(-w)
    if accept:
        state.accepted += 1
        if new != old:
            state.field += model.J[i] * (new - old)
            state.spins[i] = new
            state.energy += dh
    return accept


@numba.njit(cache=True)
def _sweep_kernel(J, h, spins, fld, proposals, uniforms, beta):
    n = spins.size
    de_total = 0.0
    accepted = 0
    for i in range(n):
        new = proposals[i]
        old = spins[i]
        jii = J[i, i]
        h_eff = 2.0 * (fld[i] - jii * old) + h[i]
        dh = -(h_eff * (new - old) + jii * (new * new - old * old))
        w = beta * dh
        if w <= 0.0 or uniforms[i] < math.exp(-w):
            accepted += 1
            if new != old:
                d = new - old
                row = J[i]
                for j in range(n):
                    fld[j] += row[j] * d
                spins[i] = new
                de_total += dh
    return de_total, accepted


def _record_best(state):
    if state.energy < state.best_energy:
        state.best_energy = state.energy
        state.best_spins = state.spins.copy()


def run_sweeps(model, state, beta, n_sweeps):
    """``n_sweeps`` cyclic sweeps at inverse temperature ``beta``; returns accepted count."""
    half = model.m // 2
    n = model.n
    J = np.ascontiguousarray(model.J, dtype=np.float64)
    h = np.ascontiguousarray(model.h, dtype=np.float64)
    proposals = state.rng.integers(-half, half + 1, size=(n_sweeps, n)).astype(np.int64)
    uniforms = state.rng.random((n_sweeps, n))
    accepted = 0
    for k in range(n_sweeps):
        de, acc = _sweep_kernel(J, h, state.spins, state.field, proposals[k], uniforms[k], beta)
        state.energy += de
        accepted += acc
        state.sweeps += 1
        if state.sweeps % RESYNC_SWEEPS == 0:
            state.resync(model)
        _record_best(state)
    state.accepted += accepted
    state.proposed += n_sweeps * n
    return accepted


def sweep(model, state, beta):
    """Visit sites ``0 .. N-1`` once each, then update the best-so-far record."""
    return run_sweeps(model, state, beta, 1)


def anneal(model, schedule=Schedule(), seed=0, initial=None):
    """Anneal from ``schedule.t_high`` down to ``schedule.t_low``.

    Returns the lowest-energy configuration seen at any sweep boundary and a
    trace with one row per temperature: ``(T, energy, best_energy, accept_rate)``.
    """
    rng = np.random.default_rng(seed)
    state = new_chain(model, rng, initial)
    trace = []
    per_temp = schedule.sweeps_per_temp * model.n
    for temp in schedule.temperatures():
        acc = run_sweeps(model, state, 1.0 / temp, schedule.sweeps_per_temp)
        trace.append((float(temp), state.energy, state.best_energy, acc / per_temp))
    best = state.best_spins
    best_energy = energy(model, best)
    if not math.isclose(best_energy, state.best_energy, rel_tol=1e-9, abs_tol=1e-12 * (1 + abs(best_energy))):
        LOGGER.warning("running best energy %r drifted from recomputed %r", state.best_energy, best_energy)
    spins = SpinField(best, model.m, model.delta_mu_a_max)
    return AnnealResult(spins, best_energy, trace, state.acceptance_rate)
