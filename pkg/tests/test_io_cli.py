import json

import numpy as np
import pytest

from spindot import cli, io
from spindot.config import ConfigError, load_config, save_config
from spindot.forward import MeasurementSet
from spindot.model import RoiGrid, build_sd_array

TINY = """
[roi]
nx = 4
ny = 4

[array]
sources = {start = -4.0, stop = 4.0, step = 4.0}
detectors = [-2.0, 2.0, 6.0]

[fd]
half_width = 30.0
depth = 30.0

[anneal]
n_temps = 20
sweeps_per_temp = 5
t_high = 1e-3
t_low = 1e-7

[svd]
ranks = [3, 5]

[diagnostics]
contrasts = [0.2, 0.1]
n_triples = 50

[[phantom.disks]]
x = 0.0
y = 2.0
radius = 1.5
dmu = 0.2
"""


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(TINY)
    return p


def test_measurement_csv_round_trip(tmp_path):
    sd = build_sd_array([0.0, 4.0], [2.0])
    ms = MeasurementSet(phi=np.array([0.1, 1 / 3]), phi_clean=np.array([0.2, 2 / 3]), pairs=sd.pairs,
                        src_x=np.array([0.0, 4.0]), det_x=np.array([2.0, 2.0]))
    path = io.write_measurements(tmp_path / "m.csv", ms)
    assert path.read_text().splitlines()[0] == "pair,src_x_mm,det_x_mm,phi_noisy,phi_clean"
    back = io.read_measurements(path, sd)
    assert np.array_equal(back.phi, ms.phi) and np.array_equal(back.phi_clean, ms.phi_clean)
    with pytest.raises(ValueError):
        io.read_measurements(path, build_sd_array([0.0, 5.0], [2.0]))


def test_map_and_trace_headers(tmp_path):
    grid = RoiGrid(nx=1, ny=2)
    io.write_map(tmp_path / "map.csv", grid, np.arange(6) / 7)
    assert (tmp_path / "map.csv").read_text().splitlines()[0] == "cell,x_mm,y_mm,delta_mu_a"
    c, v = io.read_map(tmp_path / "map.csv")
    assert np.array_equal(c, grid.centers) and np.array_equal(v, np.arange(6) / 7)
    io.write_trace(tmp_path / "t.csv", [(1e-5, -1.0, -2.0, 0.5)])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "temp,energy,best_energy,accept_rate"
    assert io.read_trace(tmp_path / "t.csv").tolist() == [[1e-5, -1.0, -2.0, 0.5]]


def test_pgm_scaling_and_clamp(tmp_path):
    img = np.array([[0.0, 0.1, 0.2], [0.05, 0.15, 0.2]])
    assert not io.write_pgm(tmp_path / "a.pgm", img, 0.2)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n3 2\n65535\n")
    pix = io.read_pgm(tmp_path / "a.pgm")
    assert pix.tolist() == [[0, 32768, 65535], [16384, 49151, 65535]]
    assert not (tmp_path / "a.pgm.txt").exists()
    assert io.write_pgm(tmp_path / "b.pgm", img - 0.1, 0.2)
    side = (tmp_path / "b.pgm.txt").read_text()
    assert "min -0.1" in side
    assert io.read_pgm(tmp_path / "b.pgm")[0, 0] == 0


def test_config_defaults_and_round_trip(tmp_path, tiny_config):
    d = load_config()
    assert d.anneal.m == 256 and d.anneal.alpha == 0.01 and d.noise.pct == 3.0
    assert d.sd_array().n_pairs == 240 and d.grid().n_cells == 1830
    cfg = load_config(tiny_config)
    assert cfg.array.sources == [-4.0, 0.0, 4.0]
    save_config(tmp_path / "back.toml", cfg)
    assert load_config(tmp_path / "back.toml") == cfg


@pytest.mark.parametrize("text,field", [
    ("[anneal]\nm = 3\n", "anneal.m"),
    ("[anneal]\nalpha = -1.0\n", "anneal.alpha"),
    ("[anneal]\nbogus = 1\n", "anneal.bogus"),
    ("[nothing]\n", "nothing"),
    ("[noise]\npct = 'x'\n", "noise.pct"),
    ("[[phantom.disks]]\nx = 0.0\ny = -1.0\nradius = 1.0\ndmu = 0.1\n", "phantom.disks[0].y"),
    ("[fd]\nhalf_width = 40.0\n", "fd"),
    ("[svd]\nranks = [0]\n", "svd.ranks[0]"),
])
def test_config_errors_name_the_field(tmp_path, text, field):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert str(info.value).startswith(field)


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_cli_pipeline(tmp_path, tiny_config):
    out = tmp_path / "run"
    assert _run("simulate", "--config", tiny_config, "--out", out) == 0
    assert _run("reconstruct-sa", "--config", tiny_config, "--out", out, "--dump-model", out / "h.bin") == 0
    assert _run("reconstruct-svd", "--config", tiny_config, "--out", out) == 0
    assert _run("diagnose", "--config", tiny_config, "--out", out) == 0
    for name in ("manifest.toml", "measurements.csv", "sa_map.csv", "sa_map.pgm", "sa_trace.csv",
                 "sa_summary.json", "svd_rank3_map.csv", "svd_rank5_map.pgm", "diagnostics.txt",
                 "rytov_scaling.csv", "theorem1.csv", "h.bin"):
        assert (out / name).exists(), name
    summary = json.loads((out / "sa_summary.json").read_text())
    assert 0.0 <= summary["min_dmu"] <= summary["max_dmu"] <= 0.2
    expected = load_config(tiny_config)
    expected.output.dir = str(out)
    assert load_config(out / "manifest.toml") == expected
    assert _run("render", out / "sa_map.csv", "--out", tmp_path / "r.pgm") == 0
    assert (tmp_path / "r.pgm").read_bytes() == (out / "sa_map.pgm").read_bytes()


def test_cli_is_deterministic(tmp_path, tiny_config):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert _run("simulate", "--config", tiny_config, "--out", out, "--seed", 5) == 0
        assert _run("reconstruct-sa", "--config", tiny_config, "--out", out, "--seed", 5) == 0
        outs.append(out)
    for name in ("measurements.csv", "sa_map.csv", "sa_trace.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[anneal]\nm = 3\n")
    assert _run("simulate", "--config", bad, "--out", tmp_path / "x") == 2
    assert "anneal.m" in capsys.readouterr().err
    assert _run("reconstruct-sa", "--out", tmp_path / "empty") == 2
    assert _run("render", tmp_path / "missing.csv") == 2
    tiny = tmp_path / "q.toml"
    tiny.write_text(TINY.replace("[anneal]", "[quadrature]\nmax_evals = 64\nabs_tol = 1e-300\nrel_tol = 1e-300\n\n[anneal]"))
    assert _run("reconstruct-svd", "--config", tiny, "--out", tmp_path / "q",
                "--measurements", tmp_path / "none.csv") == 2
    (tmp_path / "q").mkdir(exist_ok=True)
    assert _run("diagnose", "--config", tiny, "--out", tmp_path / "q") == 3


def test_cli_degenerate_inputs(tmp_path, tiny_config):
    text = tiny_config.read_text()
    flat = tmp_path / "flat.toml"
    flat.write_text(text.split("[[phantom.disks]]")[0] + "[phantom]\ndisks = []\n[noise]\npct = 0.0\n")
    out = tmp_path / "flat"
    assert _run("simulate", "--config", flat, "--out", out) == 0
    ms = io.read_measurements(out / "measurements.csv")
    assert np.all(ms.phi == 0.0)
    assert _run("reconstruct-svd", "--config", flat, "--out", out) == 0
    for k in (3, 5):
        assert np.all(io.read_map(out / f"svd_rank{k}_map.csv")[1] == 0.0)

    heavy = tmp_path / "heavy.toml"
    # uphill moves never pass, but a site only reaches -M/2 once that exact level
    # is proposed, hence 4000 sweeps (miss chance (256/257)^4000 per site)
    heavy.write_text(text.replace("[anneal]", "[anneal]\nalpha = 1e6").replace("sweeps_per_temp = 5", "sweeps_per_temp = 200"))
    out = tmp_path / "heavy"
    assert _run("simulate", "--config", heavy, "--out", out) == 0
    assert _run("reconstruct-sa", "--config", heavy, "--out", out) == 0
    assert np.all(io.read_map(out / "sa_map.csv")[1] == 0.0)


def test_cli_default_simulation_has_240_rows(tmp_path):
    assert _run("simulate", "--out", tmp_path) == 0
    lines = (tmp_path / "measurements.csv").read_text().splitlines()
    assert len(lines) == 241
