import math

import numpy as np
import pytest

import pbrt_estimator as pe


def drivers_times(cfg):
    return cfg.num_drivers * sum(cfg.obs_per_driver)


def small_study(seed=11, drivers=20):
    cfg = pe.default_config()
    cfg.num_drivers = drivers
    cfg.seed = seed
    return cfg, pe.generate(cfg)


def test_generate_shapes():
    cfg, sim = small_study()
    assert sim.training.num_observations == drivers_times(cfg)
    assert len(sim.gamma_truth) == cfg.num_drivers
    assert cfg.sigma_gamma_true.shape == (9, 9)
    assert all(g.shape == (9,) for g in sim.gamma_truth.values())


def test_csv_round_trip():
    _, sim = small_study(drivers=3)
    text = sim.training.to_csv()
    back = pe.TrainingSet.from_csv(text)
    assert back.to_csv() == text


def test_fit_blup_and_percentiles(tmp_path):
    _, sim = small_study(drivers=30)
    opts = pe.FitOptions()
    opts.restarts = 1
    opts.block_diagonal = True
    model = pe.fit(sim.training, opts)
    assert model.fit_info.converged
    assert 0.02 < model.sigma2 < 0.08
    assert np.allclose(model.sigma_gamma, model.sigma_gamma.T)

    path = tmp_path / "model.json"
    model.save(str(path))
    loaded = pe.TrainedModel.load(str(path))
    assert loaded.to_json() == model.to_json()

    prior = pe.compute_blup([], model)
    assert np.all(prior.gamma_hat == 0.0)
    pop = pe.population_pbrt(model, 0, 1.5)
    est0 = pe.estimate_pbrt(model, prior, 0)
    assert est0.var_conservative == pytest.approx(pop.var_conservative, rel=1e-14)

    state = pe.DriverState("probe")
    for h, b in [(1.0, 0.7), (2.5, 1.1), (4.0, 1.6)]:
        state.add_observation(pe.Observation("probe", 0, h, b))
    blup = state.blup(model)
    batch = pe.compute_blup(state.observations, model)
    assert np.allclose(blup.gamma_hat, batch.gamma_hat, atol=1e-12)
    est = pe.estimate_pbrt(model, blup, 0, 1.5)
    assert est.var_conservative >= est.var_naive
    assert pe.percentile(est, 0.1) < pe.percentile(est, 0.5) < pe.percentile(est, 0.9)
    assert pe.percentile(est, 0.9, True) >= pe.percentile(est, 0.9, False)


def test_lognormal_helpers():
    unit = pe.population_pbrt(zero_model(), 0, 1.5)
    assert pe.percentile(unit, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert pe.normal_quantile(0.975) == pytest.approx(1.959963984540054, rel=1e-14)
    grid = np.linspace(0.01, 20.0, 4000)
    curve = pe.density_curve(unit, False, grid.tolist())
    pdf = np.array([f for _, f in curve])
    assert (pdf >= 0).all()
    area = float(np.sum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid)))
    assert area == pytest.approx(1.0, abs=2e-3)
    (_, at_one), = pe.density_curve(unit, False, [1.0])
    assert at_one == pytest.approx(1.0 / (0.5 * math.sqrt(2 * math.pi)), rel=1e-14)


def zero_model():
    text = """{
  "spec": {"num_stimuli": 1, "degree": 0, "stimuli": ["s0"]},
  "beta": [0.0],
  "sigma2": 0.25,
  "sigma_gamma": [[0.0]],
  "beta_cov": [[0.0]],
  "t_star": 1.5,
  "fit_info": {"converged": true, "loglik": 0.0, "iterations": 0, "seed": 42}
}"""
    return pe.TrainedModel.from_json(text)


def test_errors_map_to_exceptions():
    with pytest.raises(pe.InvalidQuantile):
        pe.normal_quantile(1.5)
    with pytest.raises(pe.InvalidObservation):
        pe.Observation("d", 0, 1.0, -1.0)
    state = pe.DriverState("a")
    with pytest.raises(pe.DriverMismatch):
        state.add_observation(pe.Observation("b", 0, 1.0, 1.0))
    with pytest.raises(pe.UnknownStimulus):
        pe.StimulusRegistry.default().id("horn")
    with pytest.raises(pe.PbrtError):
        pe.TrainedModel.from_json("{")
