"""Command line entry point.

::

    spindot simulate        --config exp.toml --out run/
    spindot reconstruct-sa  --config exp.toml --out run/ [--chains 4]
    spindot reconstruct-svd --config exp.toml --out run/
    spindot diagnose        --config exp.toml --out run/
    spindot render run/sa_map.csv --out sa.pgm

Exit status: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, pipeline
from .config import ConfigError, load_config, save_config
from .forward import FdSolveError
from .greens import QuadratureError
from .hamiltonian import build_model, save_model
from .model import RoiGrid

LOGGER = logging.getLogger("spindot")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _setup(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.noise.seed = args.seed
        cfg.anneal.seed = args.seed
    if getattr(args, "chains", None) is not None:
        if args.chains < 1:
            raise ConfigError("--chains: must be at least 1")
        cfg.anneal.n_chains = args.chains
    if args.out is not None:
        cfg.output.dir = str(args.out)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "manifest.toml", cfg)
    return cfg, out


def _load_data(cfg, out, args):
    path = Path(args.measurements) if args.measurements else out / "measurements.csv"
    if not path.exists():
        raise ConfigError(f"--measurements: {path} not found (run `simulate` first)")
    try:
        return io.read_measurements(path, cfg.sd_array())
    except ValueError as exc:
        raise ConfigError(f"--measurements: {exc}") from exc


def _emit_map(out, stem, grid, values, vmax):
    io.write_map(out / f"{stem}.csv", grid, values)
    io.write_pgm(out / f"{stem}.pgm", grid.to_image(values), vmax)


def cmd_simulate(args):
    cfg, out = _setup(args)
    ms = pipeline.simulate(cfg)
    io.write_measurements(out / "measurements.csv", ms)
    LOGGER.info("wrote %d pairs to %s", len(ms), out / "measurements.csv")


def cmd_reconstruct_sa(args):
    cfg, out = _setup(args)
    data = _load_data(cfg, out, args)
    kernel = pipeline.kernel_for(cfg)
    rec = pipeline.reconstruct_sa(cfg, data, kernel)
    grid = cfg.grid()
    _emit_map(out, "sa_map", grid, rec.dmu, cfg.anneal.delta_mu_a_max)
    io.write_trace(out / "sa_trace.csv", rec.trace)
    (out / "sa_summary.json").write_text(json.dumps(rec.summary(), indent=2) + "\n")
    if args.dump_model:
        model = build_model(kernel, data, cfg.anneal.alpha, cfg.anneal.m)
        save_model(args.dump_model, kernel, model)
    LOGGER.info("best H = %.12g, Psi = %.12g, %.1f s", rec.energy, rec.psi, rec.runtime)


def cmd_reconstruct_svd(args):
    cfg, out = _setup(args)
    data = _load_data(cfg, out, args)
    ranks = args.ranks or cfg.svd.ranks
    try:
        sols = pipeline.reconstruct_svd(cfg, data, ranks=ranks)
    except ValueError as exc:
        raise ConfigError(f"svd.ranks: {exc}") from exc
    grid = cfg.grid()
    for k, sol in sols.items():
        _emit_map(out, f"svd_rank{k}_map", grid, sol.x, cfg.anneal.delta_mu_a_max)
        LOGGER.info("rank %d (effective %d): range [%.4g, %.4g]", k, sol.k_effective, sol.x.min(), sol.x.max())


def cmd_diagnose(args):
    cfg, out = _setup(args)
    bg = cfg.background()
    kernel = pipeline.kernel_for(cfg)
    if args.measurements or (out / "measurements.csv").exists():
        data = _load_data(cfg, out, args)
    else:
        data = pipeline.simulate(cfg)
    report = pipeline.theorem1_report(cfg, data, kernel)
    contrasts = sorted(set(cfg.diagnostics.contrasts) | {0.0}, reverse=True)
    rows = pipeline.rytov_scaling(cfg, contrasts, kernel)
    fd_err = pipeline.fd_u0_error(cfg)
    quad_err, _, _ = pipeline.quadrature_crosscheck(bg, quad=cfg.quad())

    io._write_rows(out / "rytov_scaling.csv", list(rows[0]), ([io._f(v) for v in r.values()] for r in rows))
    io._write_rows(
        out / "theorem1.csv", ["pair", "cell1", "cell2", "ratio"],
        ([int(p), int(i), int(j), io._f(r)] for (p, i, j), r in zip(report.triples, report.ratios)),
    )
    s = report.summary()
    lines = [
        "Theorem-1 ratio |phi_p g2| / |g1|",
        f"  triples: {s['n_triples']}",
        f"  max ratio: {s['max_ratio']!r} at pair {s['argmax_pair']}, cells ({s['argmax_cell1']}, {s['argmax_cell2']})",
        f"  median ratio: {s['median_ratio']!r}",
        f"  fraction below 1: {s['fraction_below_1']!r}",
        "",
        "Rytov error against FD data",
        "  contrast  max|phi|  max|phi-phi_R|  max|phi-phi_R2|  max|u-u_R|  max|u-u_R|/u0  C",
    ]
    for r in rows:
        lines.append("  " + "  ".join(f"{v:.6g}" for v in r.values()))
    lines += [
        "",
        f"FD vs analytic u0 (h_fd = {cfg.fd.spacing} mm): max relative error {fd_err!r}",
        f"DE vs adaptive quadrature (25 pairs): max relative difference {quad_err!r}",
    ]
    (out / "diagnostics.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def _grid_from_centers(centers):
    xs = np.unique(centers[:, 0])
    ys = np.unique(centers[:, 1])
    h = float(np.diff(xs).min()) if xs.size > 1 else float(np.diff(ys).min()) if ys.size > 1 else 1.0
    nx = (xs.size - 1) // 2
    grid = RoiGrid(nx=nx, ny=ys.size, h=h, x0=float(xs[nx]), y0=float(ys[0] - h))
    if grid.n_cells != len(centers) or not np.allclose(grid.centers, centers):
        raise ConfigError("map CSV does not describe a full ROI grid")
    return grid


def cmd_render(args):
    try:
        centers, values = io.read_map(args.map)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{args.map}: {exc}") from exc
    grid = _grid_from_centers(centers)
    vmax = args.vmax if args.vmax is not None else load_config(args.config).anneal.delta_mu_a_max
    out = Path(args.out) if args.out else Path(args.map).with_suffix(".pgm")
    clamped = io.write_pgm(out, grid.to_image(values), vmax)
    LOGGER.info("wrote %s%s", out, " (clamped)" if clamped else "")


def build_parser():
    p = argparse.ArgumentParser(prog="spindot", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="TOML experiment file (defaults reproduce the single-disk setup)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        if seed:
            sp.add_argument("--seed", type=int, help="override noise and annealing seeds")

    sp = sub.add_parser("simulate", help="generate noisy FD measurements")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reconstruct-sa", help="simulated-annealing reconstruction")
    common(sp)
    sp.add_argument("--measurements", help="measurement CSV (default OUT/measurements.csv)")
    sp.add_argument("--chains", type=int, help="number of independent chains")
    sp.add_argument("--dump-model", help="also write K, J, h to this binary file")
    sp.set_defaults(func=cmd_reconstruct_sa)

    sp = sub.add_parser("reconstruct-svd", help="truncated-SVD reconstruction")
    common(sp, seed=False)
    sp.add_argument("--measurements", help="measurement CSV (default OUT/measurements.csv)")
    sp.add_argument("--ranks", type=int, nargs="+", help="truncation ranks (default svd.ranks)")
    sp.set_defaults(func=cmd_reconstruct_svd)

    sp = sub.add_parser("diagnose", help="approximation and quadrature diagnostics")
    common(sp)
    sp.add_argument("--measurements", help="measurement CSV (simulated when absent)")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("render", help="re-render a map CSV as a 16-bit PGM")
    sp.add_argument("map", help="map CSV")
    sp.add_argument("--out", help="PGM path (default: map path with .pgm)")
    sp.add_argument("--vmax", type=float, help="value mapped to white (default anneal.delta_mu_a_max)")
    sp.add_argument("--config", help="TOML experiment file")
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, FdSolveError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
