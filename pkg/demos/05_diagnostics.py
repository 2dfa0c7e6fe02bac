"""
How good is the linearization?
==============================

The spin model keeps only the first-order Rytov term. Three checks show where
that is justified: how the Rytov error shrinks with contrast, how large the
dropped second-order weights are relative to the retained ones, and the
quadrature agreement behind all kernel entries.
"""

from spindot import pipeline
from spindot.config import load_config

cfg = load_config()
kernel = pipeline.kernel_for(cfg)

###############################################################################
# Rytov error versus contrast
# ---------------------------
# The error is second order, so each halving of the contrast cuts it by a
# factor that approaches 4 as the contrast shrinks.

rows = pipeline.rytov_scaling(cfg, [0.2, 0.1, 0.05, 0.025], kernel)
print("contrast   max|phi|   max|phi - phi_R|   max|phi - phi_R2|")
for r in rows:
    print(f"{r['contrast']:8.3f}  {r['max_phi']:9.4f}  {r['err_rytov1']:17.4e}  {r['err_rytov2']:17.4e}")

###############################################################################
# Dropped second-order terms
# --------------------------
# The ratio compares each neglected pair weight with the retained one. It is
# reported, not enforced: it is far from uniformly small at this contrast.

data = pipeline.simulate(cfg)
s = pipeline.theorem1_report(cfg, data, kernel).summary()
print(f"{s['n_triples']} triples: median ratio {s['median_ratio']:.3g}, "
      f"max {s['max_ratio']:.3g}, {s['fraction_below_1']:.0%} below one")

###############################################################################
# Quadrature and FD accuracy

err, _, _ = pipeline.quadrature_crosscheck(cfg.background())
print(f"DE vs adaptive on 25 point pairs: {err:.1e}")
print(f"FD vs analytic at the detectors: {pipeline.fd_u0_error(cfg):.3%}")
