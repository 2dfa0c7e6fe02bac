"""Diffuse optical tomography by simulated annealing of a spin Hamiltonian.

The absorption perturbation in each region-of-interest cell is encoded as an
integer spin. Boundary measurements enter through a Rytov-linearized kernel,
which turns the regularized least-squares cost into a quadratic spin
Hamiltonian; single-site Metropolis annealing finds its ground state.

Modules
-------
model        geometry, optical constants, spin codec
greens       half-space Robin Green's function (double-exponential quadrature)
forward      finite-difference forward solver, Born/Rytov terms, measurements
hamiltonian  kernel, couplings/fields, energy, cost, second-order diagnostic
annealer     Metropolis sampler and annealing schedule
svd          truncated-SVD baseline
pipeline     experiment-level helpers
cli          command line (``spindot``)
"""

__version__ = "0.1.0"

from .annealer import Schedule, anneal
from .forward import Disk, FdGrid, MeasurementSet, Phantom, born_terms, measure, rytov_data, solve_fd
from .greens import QuadratureSpec, green, green_table, lambda_of_q
from .hamiltonian import build_kernel, build_model, cost_psi, delta_energy, energy, theorem1_diagnostic
from .model import (
    OpticalBackground,
    RoiGrid,
    SdArray,
    SpinField,
    absorption_to_spin,
    build_sd_array,
    spin_to_absorption,
)
from .svd import linear_system, tsvd_solve
