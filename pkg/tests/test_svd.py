import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spindot.svd import LinearSystem, linear_system, tsvd_solve


def _system(seed, p=30, n=12):
    rng = np.random.default_rng(seed)
    return LinearSystem(rng.normal(size=(p, n)), rng.normal(size=p))


def test_full_rank_equals_least_squares():
    s = _system(0)
    sol = tsvd_solve(s, 12)
    ref = np.linalg.lstsq(s.A, s.phi, rcond=None)[0]
    assert np.allclose(sol.x, ref, rtol=1e-10)
    assert sol.k_effective == 12


def test_truncated_solution_matches_projected_pseudoinverse():
    s = _system(1)
    U, sv, Vt = np.linalg.svd(s.A, full_matrices=False)
    k = 5
    ref = Vt[:k].T @ np.diag(1 / sv[:k]) @ U[:, :k].T @ s.phi
    assert np.allclose(tsvd_solve(s, k).x, ref, rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_residual_decreases_with_rank(seed):
    s = _system(seed, 20, 10)
    res = [np.linalg.norm(s.A @ tsvd_solve(s, k).x - s.phi) for k in range(1, 11)]
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))


def test_sign_convention():
    s = _system(2)
    _, _, Vt = s.svd
    big = Vt[np.arange(Vt.shape[0]), np.argmax(np.abs(Vt), axis=1)]
    assert np.all(big > 0)


def test_rank_deficient_system():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(20, 3))
    A = B @ rng.normal(size=(3, 8))
    s = LinearSystem(A, rng.normal(size=20))
    assert s.rank == 3
    sol = tsvd_solve(s, 8)
    assert sol.k_effective == 3 and np.all(np.isfinite(sol.x))


def test_rank_bounds():
    s = _system(4)
    for k in (0, 13):
        with pytest.raises(ValueError):
            tsvd_solve(s, k)
    with pytest.raises(ValueError):
        LinearSystem(np.ones((3, 2)), np.ones(2))


def test_system_from_kernel(small_setup):
    _, _, kern = small_setup
    sys_ = linear_system(kern, np.ones(kern.shape[0]))
    assert np.allclose(sys_.A * 0.2, kern.K)


def test_exact_data_full_rank_residual_and_ridge_oracle():
    rng = np.random.default_rng(5)
    A = rng.uniform(0.1, 1.0, size=(9, 14))
    x_true = rng.uniform(0, 0.2, 14)
    s = LinearSystem(A, A @ x_true)
    sol = tsvd_solve(s, 9)
    assert np.linalg.norm(A @ sol.x - s.phi) <= 1e-8 * np.linalg.norm(s.phi)
    # minimum-norm solution from the normal equations of the transposed problem, lightly ridged
    ridge = A.T @ np.linalg.solve(A @ A.T + 1e-12 * np.eye(9), s.phi)
    assert np.linalg.norm(sol.x - ridge) <= 1e-6 * np.linalg.norm(ridge)


def test_rank_one_is_collinear_with_first_singular_vector():
    s = _system(6)
    x = tsvd_solve(s, 1).x
    v1 = s.svd[2][0]
    assert abs(abs(x @ v1) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
