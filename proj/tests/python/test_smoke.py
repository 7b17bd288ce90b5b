import json

import numpy as np
import pytest

import hforce


def test_presets_and_dynamics_agree():
    model = hforce.rcm6_preset()
    assert model.n_joints == 6
    delta = hforce.rcm6_true_params(model)
    rng = np.random.default_rng(0)
    q = 0.5 * (model.q_min + model.q_max)
    qd, qdd = rng.normal(size=6), rng.normal(size=6)
    tau = hforce.inverse_dynamics(model, delta, q, qd, qdd)
    h = hforce.regressor(model, q, qd, qdd)
    assert h.shape == (6, delta.values.size)
    np.testing.assert_allclose(h @ delta.values, tau, rtol=1e-10, atol=1e-12)
    assert len(delta.names) == delta.values.size
    assert hforce.tip_position(model, q).shape == (3,)


def test_base_reduction_keeps_predictions():
    model = hforce.planar_chain([0.5, 0.4])
    red = hforce.compute_base_reduction(model, 100, 3)
    assert 0 < red.b < red.n_params
    rng = np.random.default_rng(1)
    h = hforce.regressor(model, rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
    delta = rng.normal(size=red.n_params)
    np.testing.assert_allclose(hforce.reduce_regressor(red, h) @ hforce.base_params(red, delta), h @ delta,
                               rtol=1e-9, atol=1e-9)


def test_noiseless_identification_recovers_base_parameters():
    model = hforce.rcm6_preset()
    red = hforce.compute_base_reduction(model, 200, 0)
    traj, report = hforce.optimize_excitation(model, red, np.array([0.8, 0.8, 0.1, 1.5, 1.5, 1.5]), budget=20)
    assert report["cond_after"] <= report["cond_before"]
    scenario = {"model": "rcm6", "delta_true": "rcm6", "trajectory": json.loads(traj.to_json()),
                "duration": 1.0 / 0.18, "rate": 200}
    sim = hforce.simulate(scenario, seed=1, log_qdd=True)
    log = sim["log"]
    idm = hforce.identify(model, red, log, preprocess={"fc": 0.0, "use_logged_qdd": True})
    truth = hforce.base_params(red, hforce.rcm6_true_params(model).values)
    assert np.linalg.norm(idm.delta_b - truth) / np.linalg.norm(truth) < 1e-6
    again = hforce.identified_from_json(idm.to_json())
    np.testing.assert_array_equal(again.delta_b, idm.delta_b)


def test_network_gradient_matches_finite_differences():
    net = hforce.CorrectionNet(5, 8, seed=2)
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(5, 7)), rng.normal(size=7)
    loss, grad = net.loss_and_grad(x, y)
    w1 = net.w1.copy()
    h = 1e-6
    for idx in [(0, 0), (3, 2), (7, 4)]:
        w = w1.copy()
        w[idx] += h
        net.w1 = w
        up = net.loss_and_grad(x, y)[0]
        w[idx] -= 2 * h
        net.w1 = w
        down = net.loss_and_grad(x, y)[0]
        assert abs((up - down) / (2 * h) - grad["w1"][idx]) < 1e-6
    net.w1 = w1
    assert net.loss_and_grad(x, y)[0] == pytest.approx(loss)


def test_metric_report_and_errors():
    ref = np.column_stack([np.linspace(0, 1, 11), np.linspace(0, 2, 11)])
    r = hforce.metric_report(ref + 0.1, ref, ["a", "b"])
    np.testing.assert_allclose(r["rmse"], [0.1, 0.1])
    np.testing.assert_allclose(r["nrmse"], [0.1, 0.05])
    with pytest.raises(ValueError):
        hforce.model_from_json("{}")


def test_small_repro_reports_every_check():
    cfg = {"quick": True, "excite_budget": 10,
           "heldout": {"duration": 3}, "workspace_a": {"duration": 3, "n_logs": 1}, "workspace_b": {"duration": 3},
           "trocar_train": {"duration": 3, "n_logs": 1}, "trocar_test": {"duration": 3},
           "learner": {"epochs": 2}, "train": {"epochs": 2}}
    out = hforce.run_repro(cfg, seed=5)
    assert [c["criterion"] for c in out["checks"]] == [5, 6, 7, 8]
    assert out["base_rel_err"] < 1e-6
    assert "force_noisy_hybrid" in out["metrics"]
