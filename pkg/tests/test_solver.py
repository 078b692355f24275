import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from conftest import unit_sphere_points
from wnnc.geometry import DegenerateCloudError, normalize_cloud
from wnnc.operators import DENSE, apply_A, apply_AT, apply_G, energy
from wnnc.solver import SolverParams, grad_step, solve, width_at, wnnc_rescale

W = 0.002


def test_width_schedule_values():
    p = SolverParams()
    assert width_at(1, p) == 0.016
    assert width_at(40, p) == pytest.approx(0.002, abs=1e-18)
    assert width_at(20, p) == pytest.approx(0.016 * 20 / 39 + 0.002 * 19 / 39, rel=1e-15)
    assert width_at(20, p) == pytest.approx(0.009179, abs=1e-6)
    assert width_at(1, SolverParams(iterations=1)) == 0.002
    w = [width_at(i, p) for i in range(1, 41)]
    assert np.all(np.diff(w) < 0)
    for bad in (0, 41):
        with pytest.raises(ValueError):
            width_at(bad, p)


def test_param_validation():
    with pytest.raises(ValueError):
        SolverParams(w1=0.1, w2=0.01)
    with pytest.raises(ValueError):
        SolverParams(iterations=0)
    with pytest.raises(ValueError):
        SolverParams(w1=0.0)


def test_grad_step_noop_at_stationary_point(sphere_cloud_500):
    # every pair inside the cutoff: A = 0, so r = 0 for any mu
    mu = np.ones((500, 3))
    info = []
    out = grad_step(mu, sphere_cloud_500, 10.0, DENSE, info)
    np.testing.assert_array_equal(out, mu)
    assert info[0].alpha == 0.0 and not info[0].skipped


def test_grad_step_decreases_energy(sphere_cloud_500):
    mu0 = np.zeros((500, 3))
    e0 = energy(mu0, sphere_cloud_500, W, DENSE)
    info = []
    mu1 = grad_step(mu0, sphere_cloud_500, W, DENSE, info)
    e1 = energy(mu1, sphere_cloud_500, W, DENSE)
    assert e1 < e0
    assert info[0].energy_before == pytest.approx(e0, rel=1e-12)
    assert info[0].energy_after == pytest.approx(e1, rel=1e-9)


def test_grad_step_matches_line_search_oracle(sphere_cloud_500):
    cloud = sphere_cloud_500
    mu = 2 * grad_step(np.zeros((500, 3)), cloud, W, DENSE)
    r = apply_AT(0.5 - apply_A(mu, cloud, W, DENSE), cloud, W, DENSE)
    f = lambda a: energy(mu + a * r, cloud, W, DENSE)  # noqa: E731
    # bracket generously around the expected scale of alpha
    a_guess = np.sum(r * r) / np.sum(apply_A(r, cloud, W, DENSE) ** 2)
    opt = minimize_scalar(f, bracket=(0.0, a_guess, 3 * a_guess), method="golden", tol=1e-10)
    new = grad_step(mu, cloud, W, DENSE)
    expected = mu + opt.x * r
    assert np.linalg.norm(new - expected) <= 1e-6 * np.linalg.norm(new)


def test_energy_monotone_each_step(sphere_cloud_500):
    mu = np.zeros((500, 3))
    for w in (0.016, 0.008, 0.002):
        for _ in range(3):
            info = []
            mu = grad_step(mu, sphere_cloud_500, w, DENSE, info)
            assert info[0].energy_after <= info[0].energy_before * (1 + 1e-12)


def test_rescale_examples():
    np.testing.assert_allclose(wnnc_rescale([[0, 0, 2]], [[3, 4, 0]]), [[1.2, 1.6, 0]], rtol=1e-15)
    prev = np.array([[1.0, -2, 3], [0, 0, 0], [4, 4, 4]])
    np.testing.assert_array_equal(wnnc_rescale(prev, prev), prev)
    hat = np.array([[0.0, 0, 0], [1, 2, 3], [-1, 0, 0]])
    out = wnnc_rescale(prev, hat)
    np.testing.assert_array_equal(out[0], prev[0])  # mu_hat vanished
    np.testing.assert_array_equal(out[1], 0)  # mu_prev was zero
    with pytest.raises(ValueError):
        wnnc_rescale(prev, hat[:2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rescale_properties(seed):
    rng = np.random.default_rng(seed)
    prev = rng.normal(size=(40, 3)) * rng.uniform(1e-6, 1e6, size=(40, 1))
    hat = rng.normal(size=(40, 3)) * rng.uniform(1e-10, 1e10, size=(40, 1))
    out = wnnc_rescale(prev, hat)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), np.linalg.norm(prev, axis=1), rtol=1e-12)
    cross = np.cross(out / np.linalg.norm(out, axis=1, keepdims=True),
                     hat / np.linalg.norm(hat, axis=1, keepdims=True))
    assert np.abs(cross).max() <= 1e-12
    assert np.all(np.einsum("ij,ij->i", out, hat) > 0)


def test_single_iteration_unrolled(sphere_cloud_500):
    p = SolverParams(iterations=1, backend="dense")
    res = solve(sphere_cloud_500, p)
    mu1 = grad_step(np.zeros((500, 3)), sphere_cloud_500, p.w1, DENSE)
    expected = wnnc_rescale(mu1, apply_G(mu1, sphere_cloud_500, p.w1, DENSE))
    np.testing.assert_array_equal(res.mu, expected)
    assert res.widths == [p.w1]


def test_solve_small_sphere_outward():
    pts = unit_sphere_points(2000, seed=8)
    cloud = normalize_cloud(pts)
    res = solve(cloud, SolverParams(w1=0.01, w2=0.05, iterations=20))
    dots = np.einsum("ij,ij->i", res.mu, pts)
    assert np.mean(dots > 0) > 0.99
    assert len(res.energies) == len(res.alphas) == len(res.widths) == 20
    assert len(res.scale_ratios) == 20 and res.scale_ratios[-1] > 1
    assert not res.zero_flags.any() and not res.nonzero_init


def test_callback_and_ablation_trace(sphere_cloud_500):
    seen = []
    res = solve(sphere_cloud_500, SolverParams(iterations=3, wnnc_update=False),
                callback=lambda i, mu: seen.append(i))
    assert seen == [1, 2, 3]
    assert res.scale_ratios == []


def test_nonzero_initialization_is_flagged(sphere_cloud_500):
    init = np.random.default_rng(0).normal(size=(500, 3))
    with pytest.warns(UserWarning, match="nonzero initial"):
        res = solve(sphere_cloud_500, SolverParams(iterations=1), initial_mu=init)
    assert res.nonzero_init
    assert not solve(sphere_cloud_500, SolverParams(iterations=1), initial_mu=np.zeros((500, 3))).nonzero_init


def test_degenerate_cloud_rejected():
    cloud = normalize_cloud([(1, 2, 3)] * 5)
    with pytest.raises(DegenerateCloudError):
        solve(cloud, SolverParams(iterations=1))
