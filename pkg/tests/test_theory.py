import json

import numpy as np
import pytest

from orthomerge import linalg, net, synth, theory
from orthomerge.errors import ShapeMismatch


def _xi(w):
    g = w.T @ w - np.eye(w.shape[1])
    return float(np.sum(g * g))


def test_norm_bound_orthonormal_is_tight():
    w = linalg.sample_stiefel(8, 4, 0)
    assert np.sum(w * w) == pytest.approx(4.0, abs=1e-12)
    assert _xi(w) < 1e-28


def test_norm_bound_sqrt2_identity_equality():
    w = np.sqrt(2.0) * np.eye(2)
    xi = _xi(w)
    assert xi == pytest.approx(2.0, abs=1e-14)
    assert np.sum(w * w) == pytest.approx(2.0 + np.sqrt(2.0 * xi), abs=1e-9)


def test_norm_bound_validator():
    rep = theory.validate_norm_bound(trials=10_000)
    assert rep.verdict and rep.statistics["violations"] == 0
    assert rep.statistics["equality_max_error"] <= 1e-9
    with pytest.raises(ShapeMismatch):
        theory.validate_norm_bound(trials=5, dims=(2, 3))


@pytest.mark.parametrize("p, lhs, rhs", [
    (np.eye(3), 0.0, 0.0),
    (np.diag([2.0, 1.0]), 1.0, 3.0),
    (np.zeros((1, 1)), 1.0, 1.0),
])
def test_psd_examples(p, lhs, rhs):
    eye = np.eye(len(p))
    assert np.linalg.norm(p - eye) == pytest.approx(lhs)
    assert np.linalg.norm(p @ p - eye) == pytest.approx(rhs)
    assert lhs <= rhs


def test_psd_validator():
    rep = theory.validate_psd_inequality(trials=10_000)
    assert rep.verdict and rep.statistics["violations"] == 0


def test_stiefel_square_case_and_self_inner():
    rng = np.random.default_rng(0)
    a = linalg.sample_stiefel_batch(500, 4, 4, rng)
    b = linalg.sample_stiefel_batch(500, 4, 4, rng)
    z = np.einsum("nij,nij->n", a, b)
    assert np.all(np.abs(z) <= 4.0 + 1e-12)
    assert np.einsum("ij,ij->", a[0], a[0]) == pytest.approx(4.0, abs=1e-12)


def test_stiefel_validator_reports_concentration():
    rep = theory.validate_stiefel_inner(trials=10_000)
    assert rep.verdict
    assert rep.bounds["baseline_variance"] == 0.25
    assert sum(rep.details["histogram"]["counts"]) == 10_000


def test_stiefel_meta_calibration():
    passed = sum(theory.validate_stiefel_inner(trials=10_000, seed=s).verdict
                 for s in range(100))
    assert passed >= 99


def test_polar_validator():
    rep = theory.validate_polar_error_terms(pairs=1000)
    s = rep.statistics
    assert rep.verdict
    assert s["cross_violations"] == 0 and s["e_bound_violations"] == 0
    assert s["zero_level_e_max"] <= 1e-8 and s["isometry_error"] <= 1e-10


def _linear(dim):
    spec = net.ModelSpec(dim, (), 1)
    return net.ParameterSet(spec, {"head": np.zeros((dim, 1))})


def _ds(x):
    return synth.TaskDataset("task0", x, np.zeros(len(x), dtype=int), [0], "train", 1)


def test_alignment_identical_jacobians():
    theta0 = _linear(3)
    x = np.tile([1.0, 2.0, -1.0], (10, 1))
    tau = theta0.with_layers({"head": x[0][:, None]})
    rep = theory.validate_directional_alignment(theta0, tau, _ds(x))
    assert rep.statistics["consistency_ratio"] == 0.0
    assert rep.statistics["mean_jacobian_cos"] == pytest.approx(1.0, abs=1e-12)
    assert rep.verdict


def test_alignment_one_step_squared_loss():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 4)) + 3.0
    y = np.ones(50)
    theta0 = _linear(4)
    # one full-batch step of 0.5 * mean((x w - y)^2) from w = 0
    grad = -(x * (y - x @ theta0["head"][:, 0])[:, None]).mean(axis=0)
    tau = theta0.with_layers({"head": -0.1 * grad[:, None]})
    rep = theory.validate_directional_alignment(theta0, tau, _ds(x))
    assert rep.statistics["mean_jacobian_cos"] == pytest.approx(1.0, abs=1e-6)
    assert rep.statistics["assumption_holds"] and rep.verdict


def test_alignment_opposing_clusters_skips():
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(5.0, 0.1, (20, 3)), rng.normal(-5.0, 0.1, (20, 3))])
    theta0 = _linear(3)
    tau = theta0.with_layers({"head": np.ones((3, 1))})
    rep = theory.validate_directional_alignment(theta0, tau, _ds(x))
    assert rep.statistics["consistency_ratio"] > 1.0
    assert rep.details["assertion"].startswith("skipped") and rep.verdict


def test_angle_control_refuses_single_task():
    from orthomerge import protocol

    with pytest.raises(ValueError):
        theory.validate_angle_control(protocol.Experiment(num_tasks=1))
    with pytest.raises(ValueError):
        theory.validate_angle_control(seeds=(0, 1))


def test_validators_deterministic():
    a = theory.validate_norm_bound(trials=500, seed=3)
    b = theory.validate_norm_bound(trials=500, seed=3)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["verdict"] == "pass" and d["name"] == "norm-bound"
    assert "PASS" in a.summary()
