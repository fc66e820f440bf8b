"""Tests for the fluctuation-dissipation estimators and the scheduler.

The estimator tests avoid circularity by synthesizing samples from the
known stationary laws of the quadratic toy's limiting SDEs (independent
Gaussians with variance Sigma / (beta c), c = 1 for the simultaneous
dynamics and 1 + eta/2 for the alternating one) rather than simulating
the dynamics under test.  Covariance estimators are checked against
hand values and by exhaustive enumeration of every possible minibatch.
"""

import itertools

import numpy as np
import pytest

from mfglab.dynamics import (
    CoupledBilinearToy,
    LinearGeneratorToy,
    QuadraticToy,
)
from mfglab.fdr import (
    SchedulerState,
    cov_estimators,
    fdr1_gap,
    fdr2_gap,
    sample_sde_trajectory,
    scheduler_step,
    scripted_scheduler_run,
)

BETA = 800.0


def synth_stationary(seed, beta, c=1.0, t_len=4000, chains=4):
    """Draw exact samples of the quadratic toy's stationary SDE law."""
    rng = np.random.default_rng(seed)
    th = rng.normal(0.0, np.sqrt(1.0 / (beta * c)), (t_len, chains, 1))
    om = rng.normal(0.0, np.sqrt(4.0 / (beta * c)), (t_len, chains, 1))
    return np.concatenate([th, om], axis=-1)


def test_cov_estimators_rejects_batch_of_one():
    toy = QuadraticToy()
    with pytest.raises(ValueError, match="batch of size >= 2"):
        cov_estimators(toy, np.zeros(1), np.zeros(1), np.array([[0, 0]]))


def test_cov_estimators_two_sample_hand_value():
    # per-pair gradients at (i, j) are theta + z_i and -omega + x_j; with
    # two samples the estimator reduces to outer(a - b, a - b) / 2
    toy = QuadraticToy()  # z = (-1, 1), x = (-2, 2)
    est = cov_estimators(toy, np.array([0.3]), np.array([-0.7]),
                         np.array([[0, 0], [1, 1]]))
    assert est.batch_size == 2
    assert np.allclose(est.sigma_theta, [[2.0]], atol=1e-15)
    assert np.allclose(est.sigma_omega, [[8.0]], atol=1e-15)

    coup = CoupledBilinearToy()
    theta, omega = np.array([0.4, -0.2]), np.array([0.1, 0.6])
    batch = np.array([[0, 1], [1, 0]])
    gt, gw = coup.batch_pair_grads(theta, omega, batch)
    est2 = cov_estimators(coup, theta, omega, batch)
    dt = gt[0] - gt[1]
    dw = gw[0] - gw[1]
    assert np.allclose(est2.sigma_theta, np.outer(dt, dt) / 2, atol=1e-15)
    assert np.allclose(est2.sigma_omega, np.outer(dw, dw) / 2, atol=1e-15)


def test_exhaustive_batch_average_matches_population():
    """Averaging the B=2 covariance estimator over every ordered batch
    reproduces the population covariances exactly (unbiasedness)."""
    toys = [QuadraticToy(), LinearGeneratorToy(), CoupledBilinearToy(),
            QuadraticToy(z=(-1.0, 0.0, 1.0))]  # 3 x 2 = 6 pairs
    rng = np.random.default_rng(21)
    for toy in toys:
        n_pairs = toy.n_latent * toy.n_data
        assert n_pairs <= 6
        pairs = [(i, j) for i in range(toy.n_latent)
                 for j in range(toy.n_data)]
        theta = rng.standard_normal(toy.d_theta)
        omega = rng.standard_normal(toy.d_omega)
        acc_t = np.zeros((toy.d_theta, toy.d_theta))
        acc_w = np.zeros((toy.d_omega, toy.d_omega))
        count = 0
        for combo in itertools.product(range(n_pairs), repeat=2):
            batch = np.array([pairs[k] for k in combo])
            est = cov_estimators(toy, theta, omega, batch)
            acc_t += est.sigma_theta
            acc_w += est.sigma_omega
            count += 1
        assert count == n_pairs ** 2
        pop_t, pop_w = toy.covariances(theta, omega)
        assert np.allclose(acc_t / count, pop_t, atol=1e-10)
        assert np.allclose(acc_w / count, pop_w, atol=1e-10)


def test_population_covariances_match_direct_definition():
    toy = CoupledBilinearToy()
    rng = np.random.default_rng(22)
    theta = rng.standard_normal(2)
    omega = rng.standard_normal(2)
    gt, gw = toy.pair_grads(theta, omega)
    gt = gt.reshape(-1, 2)
    gw = gw.reshape(-1, 2)
    ct = gt - gt.mean(axis=0)
    cw = gw - gw.mean(axis=0)
    pop_t, pop_w = toy.covariances(theta, omega)
    assert np.allclose(pop_t, ct.T @ ct / len(ct), atol=1e-14)
    assert np.allclose(pop_w, cw.T @ cw / len(cw), atol=1e-14)


def test_sample_shape_and_burn_in_validation():
    toy = QuadraticToy()
    with pytest.raises(ValueError, match="post-burn-in"):
        fdr2_gap(np.zeros((10, 2)), toy, BETA)
    with pytest.raises(ValueError, match="shape"):
        fdr2_gap(np.zeros(50), toy, BETA)
    with pytest.raises(ValueError, match="shape"):
        fdr1_gap(np.zeros((5, 5, 5, 2)), toy, 0.1, BETA)
    # a (T, D) trajectory is treated as one chain
    s = synth_stationary(103, BETA)
    flat = s[:, 0, :]
    a = fdr2_gap(flat, toy, BETA)
    b = fdr2_gap(flat[:, None, :], toy, BETA)
    assert a == b
    assert a.n_samples == flat.shape[0] - flat.shape[0] // 2


def test_fdr2_on_synthesized_stationary_law():
    """At the simultaneous dynamics' stationary law E[theta g_t - omega g_w]
    equals beta^{-1} Tr(Sigma_t + Sigma_w); both sides and the error bars
    must agree on exact samples from that law."""
    toy = QuadraticToy()
    res = fdr2_gap(synth_stationary(103, BETA), toy, BETA)
    assert res.n_samples == 8000
    assert res.rhs_beta_term == pytest.approx(5.0 / BETA, rel=1e-12)
    assert abs(res.ratio - 1.0) < 0.05
    assert abs(res.gap) < 2.5 * res.gap_se
    assert res.rhs_eta_term == 0.0 and res.rhs_eta_se == 0.0
    assert not res.drift_detected


def test_fdr1_on_synthesized_stationary_laws():
    toy = QuadraticToy()
    # simultaneous: no O(eta) correction, pass eta = 0
    res = fdr1_gap(synth_stationary(103, BETA), toy, 0.0, BETA)
    assert res.rhs_beta_term == pytest.approx(-3.0 / BETA, rel=1e-12)
    assert res.rhs_eta_term == 0.0 and res.rhs_eta_se == 0.0
    assert abs(res.ratio - 1.0) < 0.05
    assert abs(res.gap) < 2.5 * res.gap_se
    assert not res.drift_detected

    # alternating at a coarse step: variances shrink by 1 + eta/2 and the
    # O(eta) right-hand term restores the balance
    eta, beta = 0.2, 50.0
    c = 1.0 + eta / 2.0
    s = synth_stationary(103, beta, c=c)
    res_a = fdr1_gap(s, toy, eta, beta)
    assert res_a.lhs == pytest.approx(-3.0 / (beta * c), rel=0.05)
    assert res_a.rhs_eta_term == pytest.approx(1.5 * eta / (beta * c), rel=0.1)
    assert abs(res_a.ratio - 1.0) < 0.06
    assert abs(res_a.gap) < 2.5 * res_a.gap_se
    assert not res_a.drift_detected

    # dropping the eta term on the same samples leaves a visible violation
    res_0 = fdr1_gap(s, toy, 0.0, beta)
    assert abs(res_0.gap) > 3.5 * res_0.gap_se


def test_drift_flag_fires_on_trending_series():
    toy = QuadraticToy()
    t_len = 4000
    rng = np.random.default_rng(31)
    ramp = np.linspace(0.5, 0.0, t_len)[:, None, None]
    th = ramp + rng.normal(0.0, 0.01, (t_len, 4, 1))
    om = rng.normal(0.0, np.sqrt(4.0 / BETA), (t_len, 4, 1))
    s = np.concatenate([th, om], axis=-1)
    assert fdr2_gap(s, toy, BETA).drift_detected
    assert fdr1_gap(s, toy, 0.0, BETA).drift_detected


def test_sample_sde_trajectory_shapes_and_determinism():
    toy = QuadraticToy()
    kw = dict(eta=0.05, n_steps=40, dt=0.01, chains=3, batch_size=2)
    a = sample_sde_trajectory(toy, "alt", rng=np.random.default_rng(5), **kw)
    b = sample_sde_trajectory(toy, "alt", rng=np.random.default_rng(5), **kw)
    assert a.shape == (41, 3, 2)
    assert np.array_equal(a, b)
    c = sample_sde_trajectory(toy, "alt", rng=np.random.default_rng(6), **kw)
    assert not np.array_equal(a, c)
    # an explicit temperature changes the noise scale
    d = sample_sde_trajectory(toy, "alt", rng=np.random.default_rng(5),
                              beta=10.0, **kw)
    assert not np.array_equal(a, d)
    with pytest.raises(ValueError, match="chain"):
        sample_sde_trajectory(toy, "alt", eta=0.05, n_steps=4, dt=0.01,
                              chains=0, rng=np.random.default_rng(0))


def test_fdr2_holds_on_simulated_quadratic_sde():
    toy = QuadraticToy()
    eta = 0.01
    states = sample_sde_trajectory(toy, "sml", eta=eta, n_steps=3000,
                                   dt=eta, chains=8,
                                   rng=np.random.default_rng(7))
    res = fdr2_gap(states, toy, beta=2 * 2 / eta)
    assert res.n_samples >= 10_000
    assert abs(res.ratio - 1.0) < 0.2


def test_scheduler_state_validation_and_exact_decay():
    with pytest.raises(ValueError, match="eta0"):
        SchedulerState(eta0=0.0, epsilon=0.1, delta=0.1, batch_size=2)
    with pytest.raises(ValueError, match="epsilon"):
        SchedulerState(eta0=0.1, epsilon=0.0, delta=0.1, batch_size=2)
    with pytest.raises(ValueError, match="delta"):
        SchedulerState(eta0=0.1, epsilon=0.1, delta=1.0, batch_size=2)
    with pytest.raises(ValueError, match="batch_size"):
        SchedulerState(eta0=0.1, epsilon=0.1, delta=0.1, batch_size=0)
    with pytest.raises(ValueError, match="trigger_count"):
        SchedulerState(eta0=0.1, epsilon=0.1, delta=0.1, batch_size=2,
                       trigger_count=-1)
    # eta is derived, not accumulated: bit-exact power law at any count
    for k in range(25):
        st = SchedulerState(eta0=0.2, epsilon=0.05, delta=0.1, batch_size=2,
                            trigger_count=k)
        assert st.eta == 0.2 * 0.9 ** k
        assert st.beta == 2.0 * 2 / st.eta


def test_scheduler_step_trigger_and_decay():
    st = SchedulerState(eta0=0.2, epsilon=0.1, delta=0.5, batch_size=2)
    # ratio exactly 1: covariance trace equal to beta makes the denominator 1
    st2, ev = scheduler_step(st, theta=[1.0], omega=[0.0], g_theta=[1.0],
                             g_omega=[0.0], cov_theta=[[st.beta]],
                             cov_omega=[[0.0]])
    assert ev["triggered"] and ev["ratio"] == 1.0
    assert ev["eta_before"] == 0.2 and ev["eta_after"] == 0.1
    assert st2.eta == 0.1 and st2.trigger_count == 1


def test_scheduler_step_out_of_band_ratio_is_a_no_op():
    st = SchedulerState(eta0=0.2, epsilon=0.1, delta=0.5, batch_size=2)
    st2, ev = scheduler_step(st, theta=[1.0], omega=[0.0], g_theta=[5.0],
                             g_omega=[0.0], cov_theta=[[st.beta]],
                             cov_omega=[[0.0]])
    assert not ev["triggered"] and ev["ratio"] == 5.0
    assert st2 == st and ev["eta_after"] == 0.2


def test_scheduler_step_zero_denominator_noted():
    st = SchedulerState(eta0=0.2, epsilon=0.1, delta=0.5, batch_size=2)
    st2, ev = scheduler_step(st, theta=[1.0], omega=[1.0], g_theta=[1.0],
                             g_omega=[1.0], cov_theta=[[0.0]],
                             cov_omega=[[0.0]])
    assert st2 == st
    assert np.isnan(ev["ratio"])
    assert ev["note"] == "undefined ratio"
    assert not ev["triggered"]


def test_scripted_replay_triggers_at_first_in_band_step():
    st = SchedulerState(eta0=0.2, epsilon=0.05, delta=0.1, batch_size=2)
    ratios = np.linspace(3.0, 1.0, 100)
    final, events = scripted_scheduler_run(st, ratios)
    fired = [e["step"] for e in events if e["triggered"]]
    first_in_band = next(i for i, r in enumerate(ratios)
                         if abs(r - 1.0) < 0.05)
    assert fired[0] == first_in_band == 97
    assert fired == [97, 98, 99]
    assert final.trigger_count == 3
    assert final.eta == 0.2 * 0.9 ** 3
    # the synthetic inputs realise each scripted ratio exactly even after
    # earlier decays re-scale beta
    assert events[98]["ratio"] == pytest.approx(ratios[98], rel=1e-15)
    assert events[98]["eta_before"] == 0.2 * 0.9


def test_scripted_replay_consecutive_unit_ratios_decay_every_step():
    st = SchedulerState(eta0=0.1, epsilon=0.01, delta=0.25, batch_size=4)
    final, events = scripted_scheduler_run(st, [1.0] * 5)
    assert all(e["triggered"] for e in events)
    assert [e["eta_after"] for e in events] == [0.1 * 0.75 ** k
                                                for k in range(1, 6)]
    assert final.eta == 0.1 * 0.75 ** 5
