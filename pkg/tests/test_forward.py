import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spindot.forward import (
    CellField,
    Disk,
    FdGrid,
    FdSolver,
    Phantom,
    born_terms,
    cell_green_matrix,
    detector_fields,
    measure,
    rytov_data,
)
from spindot.greens import green
from spindot.model import RoiGrid, build_sd_array

SMALL_FD = FdGrid(half_width=20.0, depth=20.0, spacing=0.5)


@pytest.fixture(scope="module")
def solver0(bg):
    return FdSolver(bg, None, SMALL_FD)


def test_operator_is_symmetric_positive_definite(solver0):
    A = solver0.matrix
    assert abs(A - A.T).max() == 0.0
    d = A.diagonal()
    off = abs(A).sum(axis=1).A1 - d
    # strict diagonal dominance from the absorption term
    assert np.all(d > off)


def test_reciprocity(solver0):
    xs = np.array([-6.0, 0.0, 7.5])
    u = solver0.solve(xs)
    vals = solver0.boundary_values(u, xs)
    assert np.allclose(vals, vals.T, rtol=1e-12)


def test_off_node_source_interpolates(solver0):
    u = solver0.solve([1.0, 1.5, 1.25])
    assert np.allclose(u[2], 0.5 * (u[0] + u[1]), rtol=1e-12, atol=0)


def test_fd_close_to_analytic(bg):
    fd = FdGrid(half_width=60.0, depth=60.0, spacing=0.5)
    s = FdSolver(bg, None, fd)
    u = s.solve([0.0])
    det = np.array([4.0, 10.0, 20.0])
    fd_vals = s.boundary_values(u, det)[0]
    an = np.array([bg.g0 * green((x, 0.0), (0.0, 0.0), bg) for x in det])
    assert np.max(np.abs(fd_vals / an - 1)) < 0.02


def test_absorption_lowers_field(bg):
    ph = Phantom((Disk(0.0, 6.0, 2.0, 0.1),))
    u0 = FdSolver(bg, None, SMALL_FD).solve([-5.0])
    u = FdSolver(bg, ph, SMALL_FD).solve([-5.0])
    inner = (slice(None), slice(0, -1), slice(1, -1))
    assert np.all(u[inner] < u0[inner])


def test_fd_rejects_bad_input(bg, solver0):
    with pytest.raises(ValueError, match="outside"):
        solver0.solve([25.0])
    with pytest.raises(ValueError, match="non-negative"):
        FdSolver(bg, -np.ones(SMALL_FD.shape), SMALL_FD)
    with pytest.raises(ValueError):
        FdGrid(half_width=10.3, depth=10.0, spacing=0.5)


def test_cell_average_integrates_disk():
    grid = RoiGrid(nx=10, ny=15, h=1.0)
    ph = Phantom((Disk(0.3, 7.1, 2.5, 0.2),))
    total = ph.cell_average(grid, samples=32).sum() * grid.area
    assert total == pytest.approx(np.pi * 2.5**2 * 0.2, rel=5e-3)


def test_cell_field_lookup():
    grid = RoiGrid(nx=1, ny=2, h=1.0)
    f = CellField(grid, np.arange(6.0))
    assert f(-1.0, 1.0) == 0.0 and f(1.0, 2.0) == 5.0
    assert f(0.0, 50.0) == 0.0


def _born_loops(bg, dmu, grid, sd, diag_offset):
    c = grid.centers
    g_cc = cell_green_matrix(grid, bg, diag_offset=diag_offset)
    out = []
    for s, d in sd.pairs:
        xs, xd = sd.source_points[s], sd.detector_points[d]
        gd = np.array([green(xd, y, bg) for y in c])
        gs = np.array([green(y, xs, bg) for y in c])
        u0 = bg.g0 * green(xd, xs, bg)
        v1 = -sum(gd[i] * dmu[i] * bg.g0 * gs[i] for i in range(len(c)))
        v2 = sum(gd[i] * dmu[i] * g_cc[i, j] * dmu[j] * bg.g0 * gs[j]
                 for i in range(len(c)) for j in range(len(c)))
        out.append((u0, v1, v2))
    return np.array(out).T


def test_born_terms_against_loops(bg):
    grid = RoiGrid(nx=2, ny=2, h=1.0)
    sd = build_sd_array([-3.0, 1.0], [0.0, 4.0])
    rng = np.random.default_rng(3)
    dmu = rng.uniform(0, 0.2, grid.n_cells)
    dmu[3] = 0.0
    u0, v1, v2 = born_terms(bg, dmu, grid, sd)
    ref = _born_loops(bg, dmu, grid, sd, 0.25)
    assert np.allclose(u0, ref[0], rtol=1e-12)
    assert np.allclose(v1, ref[1], rtol=1e-12)
    assert np.allclose(v2, ref[2], rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 4.0))
def test_born_terms_homogeneity(bg, t):
    grid = RoiGrid(nx=2, ny=2, h=1.0)
    sd = build_sd_array([-3.0], [2.0, 5.0])
    dmu = np.linspace(0.0, 0.1, grid.n_cells)
    _, v1, v2 = born_terms(bg, dmu, grid, sd)
    _, w1, w2 = born_terms(bg, t * dmu, grid, sd)
    assert np.allclose(w1, t * v1, rtol=1e-12)
    assert np.allclose(w2, t * t * v2, rtol=1e-12)


def test_born_zero_field(bg):
    grid = RoiGrid(nx=1, ny=1, h=1.0)
    sd = build_sd_array([0.0], [3.0])
    u0, v1, v2 = born_terms(bg, np.zeros(3), grid, sd)
    assert np.all(v1 == 0) and np.all(v2 == 0) and np.all(u0 > 0)


def test_rytov_data_hand_values():
    phi_r, phi_r2 = rytov_data([2.0], [-0.2], [0.01])
    assert phi_r[0] == pytest.approx(0.1)
    assert phi_r2[0] == pytest.approx(0.1 + 0.5 * 0.01 - 0.005)
    with pytest.raises(ValueError):
        rytov_data([0.0], [1.0], [1.0])


@pytest.fixture(scope="module")
def small_measure_setup(bg):
    sd = build_sd_array([-8.0, 0.0, 8.0], [-6.0, -2.0, 2.0, 6.0])
    ph = Phantom((Disk(0.0, 5.0, 2.0, 0.2),))
    return sd, ph


def test_measure_noise_free(bg, small_measure_setup):
    sd, ph = small_measure_setup
    ms = measure(bg, ph, sd, noise_pct=0.0, fd=SMALL_FD)
    assert np.array_equal(ms.phi, ms.phi_clean)
    u0 = detector_fields(bg, None, sd, SMALL_FD)
    u = detector_fields(bg, ph, sd, SMALL_FD)
    assert np.allclose(ms.phi, np.log(u0 / u))
    assert np.all(ms.phi > 0)
    assert np.array_equal(ms.src_x, sd.sources[sd.pairs[:, 0]])


def test_measure_is_deterministic_and_seed_dependent(bg, small_measure_setup):
    sd, ph = small_measure_setup
    a = measure(bg, ph, sd, noise_pct=3.0, seed=11, fd=SMALL_FD)
    b = measure(bg, ph, sd, noise_pct=3.0, seed=11, fd=SMALL_FD)
    c = measure(bg, ph, sd, noise_pct=3.0, seed=12, fd=SMALL_FD)
    assert np.array_equal(a.phi, b.phi)
    assert not np.array_equal(a.phi, c.phi)
    with pytest.raises(ValueError):
        measure(bg, ph, sd, noise_pct=-1.0, fd=SMALL_FD)


def test_noise_level(bg, single_disk_data):
    # phi noise is the difference of two independent 3 % relative errors
    dev = single_disk_data.phi - single_disk_data.phi_clean
    assert abs(dev.mean()) < 0.01
    assert 0.03 < dev.std() < 0.055


def test_uniform_perturbation_equals_shifted_background(bg):
    import dataclasses

    shifted = dataclasses.replace(bg, mu_a_bar=bg.mu_a_bar + 0.01)
    u1 = FdSolver(shifted, None, SMALL_FD).solve([0.0, 3.0])
    u2 = FdSolver(bg, lambda x, y: np.full(np.shape(x), 0.01), SMALL_FD).solve([0.0, 3.0])
    assert np.allclose(u1, u2, rtol=1e-12, atol=0)


def test_truncation_margin(bg, sd):
    a = detector_fields(bg, None, sd, FdGrid(60.0, 60.0, 0.5))
    b = detector_fields(bg, None, sd, FdGrid(120.0, 120.0, 0.5))
    assert np.max(np.abs(a / b - 1)) < 1e-3


@pytest.mark.slow
def test_fd_refinement(bg, sd):
    a = detector_fields(bg, None, sd, FdGrid(60.0, 60.0, 0.5))
    b = detector_fields(bg, None, sd, FdGrid(60.0, 60.0, 0.25))
    assert np.max(np.abs(a / b - 1)) <= 0.01


def test_rytov_special_cases():
    u0 = np.array([1.0, 2.0])
    phi_r, phi_r2 = rytov_data(u0, np.zeros(2), np.zeros(2))
    assert np.all(phi_r == 0) and np.all(phi_r2 == 0)
    v1 = np.array([-0.3, 0.4])
    phi_r, phi_r2 = rytov_data(u0, v1, 0.5 * v1**2 / u0)
    assert np.allclose(phi_r2, phi_r, rtol=1e-15)


def test_zero_phantom_gives_zero_data(bg, small_measure_setup):
    sd, _ = small_measure_setup
    ms = measure(bg, None, sd, noise_pct=0.0, fd=SMALL_FD)
    assert np.all(ms.phi == 0.0)
