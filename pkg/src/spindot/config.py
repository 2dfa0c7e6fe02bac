"""Experiment configuration.

A TOML file with one table per section; every key has a default, so an empty
file describes the single-disk experiment at 10 mm depth. Example::

    [anneal]
    alpha = 0.01
    sweeps_per_temp = 20

    [[phantom.disks]]
    x = -10.0
    y = 10.0
    radius = 2.5
    dmu = 0.2

Source and detector positions accept an explicit list or a
``{start, stop, step}`` table (``stop`` inclusive).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .forward import Disk, FdGrid, Phantom
from .greens import QuadratureSpec
from .model import OpticalBackground, RoiGrid, build_sd_array

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "save_config", "default_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class Optics:
    mu_a_bar: float = 0.02
    mu_s_prime: float = 1.0
    refractive_index: float = 1.37
    g0: float = 1.0


@dataclass
class Roi:
    nx: int = 30
    ny: int = 30
    h: float = 1.0
    x0: float = 0.0
    y0: float = 0.0


@dataclass
class Fd:
    half_width: float = 60.0
    depth: float = 60.0
    spacing: float = 0.5


@dataclass
class Array:
    sources: list = field(default_factory=lambda: [float(x) for x in range(-30, 31, 4)])
    detectors: list = field(default_factory=lambda: [float(x) for x in range(-28, 29, 4)])


@dataclass
class Quadrature:
    method: str = "de"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_evals: int = 20000


@dataclass
class Noise:
    pct: float = 3.0
    seed: int = 1


@dataclass
class Anneal:
    alpha: float = 0.01
    t_high: float = 1e-5
    t_low: float = 1e-10
    n_temps: int = 200
    sweeps_per_temp: int = 20
    m: int = 256
    n_chains: int = 1
    delta_mu_a_max: float = 0.2
    seed: int = 0


@dataclass
class Svd:
    ranks: list = field(default_factory=lambda: [52, 80])


@dataclass
class Diagnostics:
    contrasts: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    n_triples: int = 1000
    seed: int = 0
    diag_offset: float = 0.25


@dataclass
class Output:
    dir: str = "out"


def _default_disks():
    return [{"x": 0.0, "y": 10.0, "radius": 2.5, "dmu": 0.2}]


@dataclass
class PhantomSection:
    disks: list = field(default_factory=_default_disks)


_SECTIONS = {
    "optics": Optics,
    "roi": Roi,
    "fd": Fd,
    "array": Array,
    "quadrature": Quadrature,
    "phantom": PhantomSection,
    "noise": Noise,
    "anneal": Anneal,
    "svd": Svd,
    "diagnostics": Diagnostics,
    "output": Output,
}


@dataclass
class ExperimentConfig:
    optics: Optics = field(default_factory=Optics)
    roi: Roi = field(default_factory=Roi)
    fd: Fd = field(default_factory=Fd)
    array: Array = field(default_factory=Array)
    quadrature: Quadrature = field(default_factory=Quadrature)
    phantom: PhantomSection = field(default_factory=PhantomSection)
    noise: Noise = field(default_factory=Noise)
    anneal: Anneal = field(default_factory=Anneal)
    svd: Svd = field(default_factory=Svd)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    output: Output = field(default_factory=Output)

    # -- derived objects ----------------------------------------------------

    def background(self):
        o = self.optics
        return OpticalBackground.from_tissue(o.mu_a_bar, o.mu_s_prime, o.refractive_index, o.g0)

    def grid(self):
        r = self.roi
        return RoiGrid(r.nx, r.ny, r.h, r.x0, r.y0)

    def fd_grid(self):
        return FdGrid(self.fd.half_width, self.fd.depth, self.fd.spacing)

    def sd_array(self):
        return build_sd_array(self.array.sources, self.array.detectors)

    def quad(self):
        q = self.quadrature
        return QuadratureSpec(q.method, q.abs_tol, q.rel_tol, q.max_evals)

    def phantom_model(self):
        return Phantom(tuple(Disk(d["x"], d["y"], d["radius"], d["dmu"]) for d in self.phantom.disks))

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        _validate(self)
        return self


def default_config():
    return ExperimentConfig()


def _expand_positions(value, path):
    if isinstance(value, dict):
        try:
            start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        except KeyError as exc:
            raise ConfigError(f"{path}: range table needs start, stop, step") from exc
        if step <= 0:
            raise ConfigError(f"{path}.step: must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(n)]
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list or a {{start, stop, step}} table")
    return value


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _from_dict(raw):
    cfg = ExperimentConfig()
    for name, section in raw.items():
        if name not in _SECTIONS:
            raise ConfigError(f"{name}: unknown section")
        if not isinstance(section, dict):
            raise ConfigError(f"{name}: expected a table")
        target = getattr(cfg, name)
        known = {f.name for f in dataclasses.fields(target)}
        for key, value in section.items():
            path = f"{name}.{key}"
            if key not in known:
                raise ConfigError(f"{path}: unknown key")
            if name == "array":
                value = _expand_positions(value, path)
            setattr(target, key, _coerce(value, getattr(target, key), path))
    return cfg


def _validate(cfg):
    def positive(path, v):
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"{path}: must be positive, got {v!r}")

    o = cfg.optics
    if not o.mu_a_bar >= 0:
        raise ConfigError(f"optics.mu_a_bar: must be non-negative, got {o.mu_a_bar!r}")
    for k in ("mu_s_prime", "refractive_index", "g0"):
        positive(f"optics.{k}", getattr(o, k))
    positive("roi.h", cfg.roi.h)
    positive("roi.ny", cfg.roi.ny)
    if cfg.roi.nx < 0:
        raise ConfigError(f"roi.nx: must be non-negative, got {cfg.roi.nx}")
    for k in ("half_width", "depth", "spacing"):
        positive(f"fd.{k}", getattr(cfg.fd, k))
    for k in ("sources", "detectors"):
        vals = getattr(cfg.array, k)
        if not vals:
            raise ConfigError(f"array.{k}: must not be empty")
        for i, v in enumerate(vals):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
                raise ConfigError(f"array.{k}[{i}]: expected a finite number, got {v!r}")
        setattr(cfg.array, k, [float(v) for v in vals])
    if not isinstance(cfg.phantom.disks, list):
        raise ConfigError("phantom.disks: expected an array of tables")
    for i, d in enumerate(cfg.phantom.disks):
        path = f"phantom.disks[{i}]"
        if not isinstance(d, dict) or set(d) != {"x", "y", "radius", "dmu"}:
            raise ConfigError(f"{path}: needs exactly the keys x, y, radius, dmu")
        for k in ("x", "y", "radius", "dmu"):
            if isinstance(d[k], bool) or not isinstance(d[k], (int, float)):
                raise ConfigError(f"{path}.{k}: expected a number")
            d[k] = float(d[k])
        positive(f"{path}.radius", d["radius"])
        if d["dmu"] < 0:
            raise ConfigError(f"{path}.dmu: must be non-negative")
        if d["y"] <= 0:
            raise ConfigError(f"{path}.y: disk center must lie below the surface")
    if cfg.noise.pct < 0:
        raise ConfigError(f"noise.pct: must be non-negative, got {cfg.noise.pct}")
    a = cfg.anneal
    for k in ("alpha", "t_high", "t_low", "n_temps", "sweeps_per_temp", "m", "n_chains", "delta_mu_a_max"):
        positive(f"anneal.{k}", getattr(a, k))
    if a.m % 2:
        raise ConfigError(f"anneal.m: must be even, got {a.m}")
    if not a.t_low < a.t_high:
        raise ConfigError("anneal.t_low: must be below anneal.t_high")
    if a.n_temps < 2:
        raise ConfigError("anneal.n_temps: must be at least 2")
    for i, k in enumerate(cfg.svd.ranks):
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ConfigError(f"svd.ranks[{i}]: expected a positive integer, got {k!r}")
    for i, c in enumerate(cfg.diagnostics.contrasts):
        if isinstance(c, bool) or not isinstance(c, (int, float)) or c < 0:
            raise ConfigError(f"diagnostics.contrasts[{i}]: expected a non-negative number")
    positive("diagnostics.n_triples", cfg.diagnostics.n_triples)
    if cfg.quadrature.method not in ("de", "adaptive", "auto"):
        raise ConfigError(f"quadrature.method: unknown method {cfg.quadrature.method!r}")
    for k in ("abs_tol", "rel_tol"):
        positive(f"quadrature.{k}", getattr(cfg.quadrature, k))
    if cfg.quadrature.max_evals < 64:
        raise ConfigError("quadrature.max_evals: must be at least 64")
    try:
        cfg.fd_grid().check_contains(cfg.grid())
    except ValueError as exc:
        raise ConfigError(f"fd: {exc}") from exc


def load_config(path=None):
    """Read and validate a TOML config; ``None`` gives the defaults."""
    if path is None:
        return default_config().validate()
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return _from_dict(raw).validate()


def save_config(path, cfg):
    """Write the fully resolved config; loading it back reproduces ``cfg``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        tomli_w.dump(cfg.to_dict(), fh)
    return path
