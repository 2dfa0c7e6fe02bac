"""
Reconstruction by simulated annealing
=====================================

The region of interest is split into 61 x 30 cells of 1 mm. Each cell carries
an integer spin in ``[-M/2, M/2]`` that encodes its absorption between 0 and
``dmu_max``. The linearized least-squares cost with an L1 penalty is an Ising
type energy, and its minimum is found by single-site Metropolis annealing.
"""

from pathlib import Path

import numpy as np

from spindot import io, pipeline
from spindot.config import load_config
from spindot.hamiltonian import build_model

out = Path(__file__).with_name("out")
cfg = load_config()  # defaults: one 2.5 mm disk at (0, 10) mm
data = pipeline.simulate(cfg)
kernel = pipeline.kernel_for(cfg)
print(f"kernel {kernel.shape[0]} pairs x {kernel.shape[1]} cells")

###############################################################################
# The spin model
# --------------
# Couplings are all negative and the quadratic form is a Gram matrix.

model = build_model(kernel, data, cfg.anneal.alpha, cfg.anneal.m)
print(f"J range [{model.J.min():.3e}, {model.J.max():.3e}], c0 = {model.c0:.6f}")

###############################################################################
# Annealing
# ---------
# 200 geometric temperatures from 1e-5 to 1e-10, 20 sweeps each.

rec = pipeline.reconstruct_sa(cfg, data, kernel)
t = rec.trace
print(f"acceptance {t[0][3]:.3f} at T = {t[0][0]:.0e}, {t[-1][3]:.2e} at T = {t[-1][0]:.0e}")
print(f"best H = {rec.energy:.6e}, cost = {rec.psi:.6e}, {rec.runtime:.1f} s")

grid = cfg.grid()
peak = pipeline.peak_position(grid, rec.dmu)
print(f"peak at ({peak[0]:g}, {peak[1]:g}) mm, values in [{rec.dmu.min():.3f}, {rec.dmu.max():.3f}]")

###############################################################################
# A coarse text rendering of the top 20 mm

img = grid.to_image(rec.dmu)[:20, 15:46]
for row in img:
    print("".join(" .:-=+*#%@"[min(9, int(v / 0.2 * 10))] for v in row))

io.write_map(out / "single_disk_sa.csv", grid, rec.dmu)
io.write_pgm(out / "single_disk_sa.pgm", grid.to_image(rec.dmu), cfg.anneal.delta_mu_a_max)
print(f"wrote {out / 'single_disk_sa.pgm'}")
