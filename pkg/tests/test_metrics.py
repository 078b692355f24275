import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from wnnc.metrics import angular_error


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_perfect_flipped_and_perpendicular(rng):
    gt = random_unit(rng, 100)
    rep = angular_error(gt, gt)
    assert rep.ae_pcd == pytest.approx(0.0, abs=1e-15) and rep.p_co == 100.0 and rep.flipped_count == 0
    rep = angular_error(-gt, gt)
    assert rep.ae_pcd == 1.0 and rep.p_co == 0.0
    gt = np.tile([0.0, 0.0, 1.0], (10, 1))
    rep = angular_error(np.tile([1.0, 0.0, 0.0], (10, 1)), gt)
    assert rep.ae_pcd == 0.5 and rep.p_co == 0.0 and rep.flipped_count == 10


def test_zero_normals_score_half_and_flipped():
    gt = np.tile([0.0, 1.0, 0.0], (4, 1))
    recon = gt.copy()
    recon[1] = 0
    rep = angular_error(recon, gt)
    assert rep.per_point_errors[1] == 0.5
    assert rep.flipped_count == 1 and rep.p_co == 75.0


def test_report_consistency_and_text(rng):
    gt = random_unit(rng, 500)
    recon = random_unit(rng, 500)
    rep = angular_error(recon, gt)
    assert rep.p_co == pytest.approx(100 * (rep.count - rep.flipped_count) / rep.count)
    assert rep.ae_pcd == pytest.approx(rep.per_point_errors.mean())
    lines = rep.to_text().splitlines()
    assert lines[0] == "n_points: 500"
    assert {ln.split(": ")[0] for ln in lines} == {"n_points", "ae_pcd", "p_co", "flipped_count"}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bounds_and_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    gt, recon = random_unit(rng, 64), random_unit(rng, 64)
    rep = angular_error(recon, gt)
    assert 0.0 <= rep.ae_pcd <= 1.0 and 0.0 <= rep.p_co <= 100.0
    rot = Rotation.random(random_state=seed).as_matrix()
    rotated = angular_error(recon @ rot.T, gt @ rot.T)
    assert rotated.ae_pcd == pytest.approx(rep.ae_pcd, abs=1e-14)


def test_length_mismatch():
    with pytest.raises(ValueError):
        angular_error(np.zeros((3, 3)), np.zeros((4, 3)))
