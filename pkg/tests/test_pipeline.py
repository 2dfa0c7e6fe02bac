import numpy as np
import pytest

from spindot import pipeline
from spindot.config import load_config
from spindot.model import RoiGrid


@pytest.fixture(scope="module")
def scaling_rows(kernel):
    return pipeline.rytov_scaling(load_config(), [0.2, 0.1, 0.05, 0.0], kernel)


def test_rytov_error_vanishes_without_contrast(scaling_rows):
    zero = scaling_rows[-1]
    assert zero["max_phi"] == 0.0 and zero["err_rytov1"] == 0.0 and zero["lemma1_abs"] == 0.0


def test_linearization_error_shrinks_at_least_linearly(scaling_rows):
    err = [r["lemma1_abs"] for r in scaling_rows[:3]]
    assert all(a / b >= 2.0 for a, b in zip(err, err[1:]))


def test_log_data_bound_constant_is_stable(scaling_rows):
    c = [r["c2_fit"] for r in scaling_rows[:3]]
    assert max(c) / min(c) < 1.5
    for r in scaling_rows[:3]:
        assert r["max_phi"] <= np.log1p(max(c) * r["contrast"]) + 1e-12


def test_peak_and_valley_helpers():
    grid = RoiGrid(nx=5, ny=3, h=1.0)
    img = np.zeros((3, 11))
    img[1, 2] = 0.2
    img[1, 8] = 0.1
    img[1, 5] = 0.04
    vals = img.ravel()
    assert tuple(pipeline.peak_position(grid, vals)) == (-3.0, 2.0)
    assert tuple(pipeline.peak_position(grid, vals, grid.centers[:, 0] > 0)) == (3.0, 2.0)
    lx, rx, lp, rp, valley, dip = pipeline.profile_valley(grid, vals, 2.0, -3.0, 3.0, window=1.0)
    assert (lx, rx, lp, rp) == (-3.0, 3.0, 0.2, 0.1)
    assert valley == 0.0 and dip == 1.0


def test_svd_reconstruction_ranks(kernel, single_disk_data):
    sols = pipeline.reconstruct_svd(load_config(), single_disk_data, kernel, ranks=[1, 52])
    assert sols[52].k_effective == 52 and sols[1].x.shape == (1830,)
