from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from lqbae import simulate
from lqbae.core import FilterError, HypothesisError
from lqbae.model import SystemParams, quadrature_realization, realization_from_matrices
from lqbae.simulate import GaussianPulse, SimConfig
from lqbae.types import QuadBlock

Q, P = QuadBlock.QuadQ, QuadBlock.QuadP


def test_config_checks_and_defaults(cavity_real):
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(horizon=0.01, dt=0.1)
    with pytest.raises(ValueError):
        SimConfig(ensemble=0)
    cfg = SimConfig(horizon=1.0)
    assert cfg.resolve_dt(cavity_real) == pytest.approx(2e-3)
    times, dt = SimConfig(horizon=1.0, dt=0.25).grid(cavity_real)
    np.testing.assert_allclose(times, [0.0, 0.25, 0.5, 0.75, 1.0])
    m0, P0 = cfg.start(cavity_real)
    np.testing.assert_array_equal(P0, 0.5 * np.eye(2))
    with pytest.raises(ValueError):
        SimConfig(initial_mean=(1.0,)).start(cavity_real)


def test_pulse_shape():
    pulse = GaussianPulse(2.0, center=1.0, width=0.5, block=Q, channel=1)
    assert pulse(1.0) == 2.0
    u = pulse.input_mean(1.0, 2)
    np.testing.assert_array_equal(u, [0.0, 2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        GaussianPulse(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        GaussianPulse(1.0, 0.0, 1.0, channel=3).input_mean(0.0, 2)


def test_vacuum_is_steady_for_the_cavity(cavity_real):
    flow = simulate.moment_flow(cavity_real, SimConfig(horizon=5.0, dt=0.01, initial_mean=(1.0, 0.0)))
    np.testing.assert_allclose(flow.covs[-1], 0.5 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(flow.means[-1], [np.exp(-2.5), 0.0], rtol=1e-8)
    np.testing.assert_allclose(flow.output_means[0], [1.0, 0.0])


def test_ensemble_mean_follows_moment_flow(cavity_real):
    cfg = SimConfig(horizon=2.0, dt=0.01, ensemble=400, seed=5, initial_mean=(1.0, -0.5),
                    pulse=GaussianPulse(1.0, 1.0, 0.2))
    rec = simulate.stochastic_trajectories(cavity_real, cfg)
    flow = simulate.moment_flow(cavity_real, cfg)
    final = rec.states[:, -1, :]
    stderr = final.std(axis=0) / np.sqrt(cfg.ensemble)
    assert np.all(np.abs(final.mean(axis=0) - flow.means[-1]) <= 4 * stderr + 5e-3)


def test_pure_input_noise_has_half_dt_variance():
    real = quadrature_realization(SystemParams.build(1, 1))
    cfg = SimConfig(horizon=5.0, dt=0.01, ensemble=200, seed=2)
    rec = simulate.stochastic_trajectories(real, cfg)
    dY = rec.output_increments
    var = float(np.var(dY)) / cfg.dt
    assert abs(var - 0.5) <= 5 * 0.5 * np.sqrt(2.0 / dY.size)


def test_trajectories_are_reproducible(cavity_real):
    cfg = SimConfig(horizon=0.5, dt=0.01, ensemble=3, seed=11)
    a = simulate.stochastic_trajectories(cavity_real, cfg)
    b = simulate.stochastic_trajectories(cavity_real, cfg)
    np.testing.assert_array_equal(a.states, b.states)
    bigger = simulate.stochastic_trajectories(cavity_real, dataclasses.replace(cfg, ensemble=5))
    np.testing.assert_allclose(bigger.states[:3], a.states, rtol=1e-12, atol=1e-14)
    other = simulate.stochastic_trajectories(cavity_real, dataclasses.replace(cfg, seed=12))
    assert not np.array_equal(other.states, a.states)


def test_streamed_moments_match_the_stored_ensemble(cavity_real):
    cfg = SimConfig(horizon=0.5, dt=0.01, ensemble=10, seed=7, initial_mean=(1.0, 0.0),
                    pulse=GaussianPulse(1.0, 0.2, 0.1))
    rec = simulate.stochastic_trajectories(cavity_real, cfg)
    mom = simulate.ensemble_moments(cavity_real, cfg, batch=3)
    assert mom.ensemble == 10
    np.testing.assert_array_equal(mom.times, rec.times)
    np.testing.assert_allclose(mom.state_mean, rec.states.mean(axis=0), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(mom.state_var, rec.states.var(axis=0), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(mom.output_increment_mean, rec.output_increments.mean(axis=0),
                               rtol=1e-10, atol=1e-12)
    with pytest.raises(ValueError):
        simulate.ensemble_moments(cavity_real, cfg, batch=0)


def test_innovations_are_white_for_the_cavity(cavity_real):
    cfg = SimConfig(horizon=10.0, dt=0.01, ensemble=200, seed=0)
    rec = simulate.stochastic_trajectories(cavity_real, cfg)
    filt = simulate.gaussian_filter(cavity_real, rec, cfg)
    white = filt.whiteness()
    assert white.passed, white
    assert filt.min_uncertainty_eigenvalue >= -1e-8
    np.testing.assert_allclose(filt.conditional_cov[-1], 0.5 * np.eye(2), atol=1e-12)


def test_filter_refuses_singular_measurement_noise():
    real = realization_from_matrices(-0.5 * np.eye(2), -np.eye(2), np.eye(2), np.zeros((2, 2)))
    cfg = SimConfig(horizon=0.1, dt=0.01, ensemble=2)
    rec = simulate.stochastic_trajectories(real, cfg)
    with pytest.raises(FilterError):
        simulate.gaussian_filter(real, rec, cfg)


def test_filter_refuses_an_unphysical_initial_covariance(cavity_real):
    cfg = SimConfig(horizon=0.1, dt=0.01, ensemble=2, initial_cov=0.1 * np.eye(2))
    rec = simulate.stochastic_trajectories(cavity_real, cfg)
    with pytest.raises(FilterError, match="uncertainty bound at t=0"):
        simulate.gaussian_filter(cavity_real, rec, cfg)


def test_martingale_holds_for_conserved_coupling(qnd_system):
    cfg = SimConfig(horizon=10.0, dt=0.01, ensemble=500, seed=0, initial_mean=(1.0, 0.0, 0.0, 0.0))
    rep = simulate.martingale_check(qnd_system, cfg)
    assert rep.passed, rep
    (ch,) = rep.channels
    assert ch.mean_start == pytest.approx(np.sqrt(2.0), abs=0.1)


def test_martingale_does_not_depend_on_the_batch_size(qnd_system):
    cfg = SimConfig(horizon=1.0, dt=0.01, ensemble=20, seed=1, initial_mean=(1.0, 0.0, 0.0, 0.0))
    whole = simulate.martingale_check(qnd_system, cfg)
    chunked = simulate.martingale_check(qnd_system, cfg, batch=6)
    assert chunked.ensemble == whole.ensemble == 20
    for a, b in zip(whole.channels, chunked.channels):
        assert b.mean_end == pytest.approx(a.mean_end, rel=1e-10, abs=1e-12)
        assert b.stderr == pytest.approx(a.stderr, rel=1e-10, abs=1e-12)


def test_martingale_detects_decay_without_preconditions(cavity):
    cfg = SimConfig(horizon=10.0, dt=0.01, ensemble=50, seed=0, initial_mean=(2.0, 0.0))
    rep = simulate.martingale_check(cavity, cfg, enforce_preconditions=False)
    assert not rep.passed
    assert rep.channels[0].drift > 1.0


def test_martingale_preconditions(cavity, michelson):
    cfg = SimConfig(horizon=0.1, dt=0.01, ensemble=2)
    with pytest.raises(HypothesisError):
        simulate.martingale_check(michelson, cfg)
    # [L, H] = 0 holds for the cavity but L = a is not self-adjoint
    with pytest.raises(HypothesisError):
        simulate.martingale_check(cavity, cfg)


def test_injection_separates_the_michelson_blocks(michelson_real):
    cfg = SimConfig(horizon=10.0, dt=0.01)
    pulse = GaussianPulse(1.0, 2.0, 0.5)
    assert simulate.injection_bae_test(michelson_real, P, Q, pulse, cfg) == 0.0
    assert simulate.injection_bae_test(michelson_real, Q, P, pulse, cfg) > 0.1


def test_write_columns(tmp_path, cavity_real):
    flow = simulate.moment_flow(cavity_real, SimConfig(horizon=0.1, dt=0.05))
    out = tmp_path / "traj.txt"
    simulate.write_columns(str(out), flow.times, flow.output_means, ["q_out1", "p_out1"])
    lines = out.read_text().splitlines()
    assert lines[0] == "# t q_out1 p_out1"
    assert len(lines) == 1 + len(flow.times)
    with pytest.raises(ValueError):
        simulate.write_columns(str(out), flow.times, flow.output_means, ["only"])
