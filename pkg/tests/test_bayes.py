import math

import numpy as np
import pytest
from scipy import stats

from analogcast.basis import BasisSet
from analogcast.bayes import (
    AnalogEngine,
    Chain,
    ModelState,
    PriorConfig,
    SamplerConfig,
    analog_mean,
    draw_sigma2,
    gaussian_loglik,
    ig_logpdf,
    load_chain,
    mwg_step,
    posterior_predict,
    run_chain,
    save_chain,
    simulate_analog_series,
    update_theta1,
)
from analogcast.embedding import build_library, build_training_index
from analogcast.errors import ConfigError, DataError, NumericError
from analogcast.metric import procrustes_distance
from oracles import identity_series, weight_oracle


def _setup(seed=0, T=60, p_x=2, p_y=3, lag=1, q_max=4, tau=2):
    rng = np.random.default_rng(seed)
    forcing = identity_series(rng.normal(size=(p_x, T)))
    responses = identity_series(rng.normal(size=(p_y, T)))
    lib = build_library(forcing, lag, q_max)
    index = build_training_index(lib, lib.first_valid, T - tau, tau)
    return forcing, responses, lib, index


def test_gaussian_loglik_matches_density_summation():
    rng = np.random.default_rng(0)
    resid = 0.8 * rng.normal(size=37)
    sigma2 = 0.53
    want = stats.norm.logpdf(resid, scale=math.sqrt(sigma2)).sum()
    got = gaussian_loglik(float((resid**2).sum()), resid.size, sigma2)
    assert abs(got - want) < 1e-10
    assert gaussian_loglik(0.0, 0, 0.7) == 0.0
    with pytest.raises(NumericError):
        gaussian_loglik(1.0, 5, 0.0)


def test_ig_logpdf_matches_scipy():
    for x in (0.05, 0.6, 1.0, 4.2):
        for a, b in ((2.0, 1.0), (0.001, 0.001), (3.5, 0.2)):
            want = stats.invgamma.logpdf(x, a, scale=b)
            assert abs(ig_logpdf(x, a, b) - want) < 1e-10
    assert ig_logpdf(0.0, 2.0, 1.0) == -math.inf
    assert ig_logpdf(-1.0, 2.0, 1.0) == -math.inf


def test_theta1_step_acceptance_matches_jacobian_oracle():
    # Flat likelihood (n_terms=0): a log random-walk step from a fixed
    # theta1 accepts with probability E_z[min(1, prior ratio * Jacobian)].
    # Quadrature over the proposal gives the oracle; a missing Jacobian
    # term would shift the rate by several sigma.
    priors = PriorConfig()
    theta0, sd = 0.8, 1.2
    z = np.linspace(-8 * sd, 8 * sd, 40001)
    log_ratio = (
        np.array([ig_logpdf(theta0 * math.exp(v), 2.0, 1.0) for v in z])
        - ig_logpdf(theta0, 2.0, 1.0)
        + z
    )
    weights = stats.norm.pdf(z, scale=sd)
    oracle = np.trapezoid(weights * np.minimum(1.0, np.exp(log_ratio)), z)
    state = ModelState(theta1=theta0, m=3, q=4, sigma2=1.0)
    rng = np.random.default_rng(42)
    n = 30000
    hits = sum(
        update_theta1(state, 5.0, rng, priors, lambda s: 5.0, 0, prop_sd=sd)[2]
        for _ in range(n)
    )
    assert abs(hits / n - oracle) < 0.012


def test_flat_likelihood_chain_recovers_theta1_prior():
    _, responses, lib, index = _setup()
    chain = run_chain(
        lib, responses, index,
        PriorConfig(q_max=4, sigma2_shape=2.0, sigma2_rate=1.0),
        iterations=6000, burn_in=500, seed=1,
        ssr_fn=lambda s: 3.0, n_terms=0,
    )
    th = chain.arrays()["theta1"]
    for pr, tol in ((0.25, 0.08), (0.5, 0.1), (0.75, 0.15)):
        want = stats.invgamma.ppf(pr, 2.0, scale=1.0)
        assert abs(np.quantile(th, pr) - want) < tol


def test_sigma2_gibbs_matches_analytic_conditional():
    # Constant SSR makes the sigma2 full conditional a fixed inverse
    # gamma; the Gibbs draws must line up with its quantile function.
    _, responses, lib, index = _setup()
    ssr, n_terms = 7.3, 40
    priors = PriorConfig(q_max=4, sigma2_shape=0.5, sigma2_rate=0.25)
    chain = run_chain(
        lib, responses, index, priors,
        iterations=3000, burn_in=100, seed=2,
        ssr_fn=lambda s: ssr, n_terms=n_terms,
    )
    sig = np.sort(chain.arrays()["sigma2"])
    pp = (np.arange(1, sig.size + 1) - 0.5) / sig.size
    want = stats.invgamma.ppf(pp, 0.5 + n_terms / 2, scale=0.25 + ssr / 2)
    assert np.corrcoef(sig, want)[0, 1] > 0.999
    # Direct draws agree in expectation too: IG mean = rate / (shape - 1).
    rng = np.random.default_rng(3)
    draws = [draw_sigma2(rng, priors, n_terms, ssr) for _ in range(4000)]
    want_mean = (0.25 + ssr / 2) / (0.5 + n_terms / 2 - 1)
    assert abs(np.mean(draws) - want_mean) < 0.02


def test_analog_mean_matches_hand_oracle():
    rng = np.random.default_rng(4)
    forcing = identity_series(rng.normal(size=(2, 30)))
    responses = identity_series(rng.normal(size=(3, 30)))
    lib = build_library(forcing, lag=1, q=3)
    state = ModelState(theta1=0.7, m=3, q=2, sigma2=1.0)
    cands = np.array([5, 8, 11, 14, 17])
    tau, t0 = 2, 25
    got = analog_mean(state, lib, responses, t0, tau, cands)
    tgt = lib.matrix_at(t0)[:, :2]
    dists = [
        procrustes_distance(tgt, lib.matrix_at(int(t))[:, :2]).distance
        for t in cands
    ]
    w, _ = weight_oracle(cands, dists, 0.7, 3)
    want = sum(w[i] * responses.values[:, cands[i] + tau - 1] for i in range(5))
    assert np.allclose(got, want, atol=1e-12)
    # Candidate order cannot matter.
    perm = np.array([17, 5, 14, 8, 11])
    assert np.allclose(analog_mean(state, lib, responses, t0, tau, perm), got, atol=1e-12)
    with pytest.raises(ConfigError):
        analog_mean(state, lib, responses, t0, tau, np.array([], dtype=int))
    with pytest.raises(ConfigError):
        analog_mean(state, lib, responses, t0, tau, np.array([29]))  # runs past end


def test_engine_ssr_decomposes_over_training_periods():
    _, responses, lib, index = _setup(seed=5, T=40)
    eng = AnalogEngine(lib, responses, index)
    for state in (
        ModelState(theta1=0.5, m=4, q=4, sigma2=1.0),
        ModelState(theta1=2.0, m=7, q=3, sigma2=1.0),  # q below library q_max
    ):
        total = 0.0
        for t in index.training_periods:
            mean = analog_mean(
                state, lib, responses, int(t), index.tau, index.candidates_for(int(t))
            )
            resid = responses.values[:, t + index.tau - 1] - mean
            total += float(resid @ resid)
        assert np.isclose(eng.ssr(state), total, rtol=1e-10)
    assert eng.n_terms == index.n_train * responses.p
    assert np.isclose(
        eng.loglik(ModelState(theta1=0.5, m=4, q=4, sigma2=0.3)),
        gaussian_loglik(eng.ssr(ModelState(theta1=0.5, m=4, q=4, sigma2=0.3)), eng.n_terms, 0.3),
        rtol=1e-12,
    )


def test_predictive_mean_uses_full_candidate_pool():
    _, responses, lib, index = _setup(seed=6, T=50)
    eng = AnalogEngine(lib, responses, index)
    state = ModelState(theta1=0.9, m=5, q=3, sigma2=1.0)
    t_init = index.t_end  # furthest embeddable initial condition
    want = analog_mean(state, lib, responses, t_init, index.tau, index.candidates)
    assert np.allclose(eng.predictive_mean(state, t_init), want, atol=1e-12)
    with pytest.raises(ConfigError):
        eng.predictive_mean(ModelState(theta1=0.9, m=5, q=9, sigma2=1.0), t_init)


def test_run_chain_mechanics_and_reproducibility():
    _, responses, lib, index = _setup(seed=7, T=40)
    priors = PriorConfig(m_max=6, q_max=4)
    a = run_chain(lib, responses, index, priors, iterations=30, burn_in=10, seed=3)
    b = run_chain(lib, responses, index, priors, iterations=30, burn_in=10, seed=3)
    c = run_chain(lib, responses, index, priors, iterations=30, burn_in=10, seed=4)
    assert len(a.states) == 30 and len(a.retained()) == 20
    assert a.states == b.states
    assert a.states != c.states
    assert np.array_equal(a.log_posts, b.log_posts)
    assert set(a.accept_rates) == {"sigma2", "theta1", "m", "q"}
    assert a.accept_rates["sigma2"] == 1.0  # Gibbs step always accepts
    arrs = a.arrays()
    assert arrs["m"].shape == (20,) and "gamma" not in arrs
    with pytest.raises(ConfigError):
        run_chain(lib, responses, index, priors, iterations=10, burn_in=10)
    with pytest.raises(ConfigError):
        run_chain(lib, responses, index, priors, ssr_fn=lambda s: 1.0)  # no n_terms
    with pytest.raises(ConfigError):
        run_chain(lib, responses, index, PriorConfig(q_max=9), iterations=5, burn_in=1)


def test_mode_mq_tie_breaks_toward_smallest_pair():
    mk = lambda m, q: ModelState(theta1=1.0, m=m, q=q, sigma2=1.0)
    states = [mk(2, 3), mk(2, 3), mk(1, 5), mk(1, 5), mk(4, 2)]
    chain = Chain(states=states, log_posts=np.zeros(5), burn_in=0)
    assert chain.mode_mq() == (1, 5)


def test_gamma_sampling_needs_consistent_state():
    _, responses, lib, index = _setup(seed=8, T=40)
    priors = PriorConfig(q_max=4, with_gamma=True, sigma2_shape=2.0, sigma2_rate=1.0)
    chain = run_chain(
        lib, responses, index, priors,
        iterations=40, burn_in=5, seed=5,
        ssr_fn=lambda s: 2.0, n_terms=0,
    )
    g = chain.arrays()["gamma"]
    assert ((g >= 0.0) & (g <= 1.0)).all()
    assert "gamma" in chain.accept_rates
    bad = ModelState(theta1=1.0, m=2, q=3, sigma2=1.0, gamma=None)
    with pytest.raises(ConfigError):
        mwg_step(bad, np.random.default_rng(0), priors, lambda s: 2.0, 0)


def test_posterior_predict_pushes_draws_through_basis():
    _, responses, lib, index = _setup(seed=9, T=50)
    chain = run_chain(
        lib, responses, index, PriorConfig(m_max=6, q_max=4),
        iterations=60, burn_in=20, seed=6,
    )
    rng = np.random.default_rng(10)
    phi = BasisSet(rng.normal(size=(6, 3)), np.zeros((6, 2)), kind="eof")
    fc = posterior_predict(
        chain, lib, responses, index, index.t_end, phi,
        n_draws=37, thin=5, seed=7,
    )
    assert fc.coeff_draws.shape == (37, 3)
    assert fc.field_draws.shape == (37, 6)
    assert np.allclose(fc.field_draws, fc.coeff_draws @ phi.matrix.T, atol=1e-12)
    assert np.allclose(fc.field_mean, phi.matrix @ fc.coeff_mean, atol=1e-10)
    assert (fc.field_lo <= fc.field_hi).all() and (fc.coeff_lo <= fc.coeff_hi).all()
    assert fc.target_time == index.t_end + index.tau
    again = posterior_predict(
        chain, lib, responses, index, index.t_end, phi,
        n_draws=37, thin=5, seed=7,
    )
    assert np.array_equal(fc.coeff_draws, again.coeff_draws)
    other = posterior_predict(
        chain, lib, responses, index, index.t_end, phi,
        n_draws=37, thin=5, seed=8,
    )
    assert not np.allclose(fc.coeff_draws, other.coeff_draws)
    with pytest.raises(ConfigError):
        posterior_predict(chain, lib, responses, index, index.t_end, phi, thin=0)


def test_chain_save_load_round_trip(tmp_path):
    _, responses, lib, index = _setup(seed=11, T=40)
    chain = run_chain(
        lib, responses, index,
        PriorConfig(q_max=4, with_gamma=True, sigma2_shape=2.0, sigma2_rate=1.0),
        iterations=25, burn_in=5, seed=9,
        ssr_fn=lambda s: 1.5, n_terms=0,
    )
    path = str(tmp_path / "chain.csv")
    save_chain(chain, path, extra_meta={"config_hash": "abc123"})
    loaded, meta = load_chain(path)
    assert loaded.states == chain.states
    assert np.array_equal(loaded.log_posts, chain.log_posts)
    assert loaded.burn_in == 5 and loaded.seed == 9
    assert loaded.accept_rates == chain.accept_rates
    assert meta["config_hash"] == "abc123"

    plain = run_chain(
        lib, responses, index,
        PriorConfig(q_max=4, sigma2_shape=2.0, sigma2_rate=1.0),
        iterations=12, burn_in=2, seed=10,
        ssr_fn=lambda s: 1.5, n_terms=0,
    )
    path2 = str(tmp_path / "plain.csv")
    save_chain(plain, path2)
    loaded2, _ = load_chain(path2)
    assert loaded2.states == plain.states
    assert loaded2.states[0].gamma is None

    with pytest.raises(DataError):
        load_chain(str(tmp_path / "missing.csv"))
    (tmp_path / "chain.csv.meta.json").unlink()
    with pytest.raises(DataError, match="sidecar"):
        load_chain(path)


def test_simulate_analog_series_follows_its_own_model():
    rng = np.random.default_rng(12)
    t = np.arange(60)
    forcing = identity_series(
        np.vstack([np.sin(2 * np.pi * t / 19.0), np.cos(2 * np.pi * t / 11.0)])
        + 0.1 * rng.normal(size=(2, 60))
    )
    kw = dict(lag=1, q=3, m=4, theta1=0.5, sigma2=0.0, tau=2, p_alpha=3, seed=13)
    sim = simulate_analog_series(forcing, **kw)
    again = simulate_analog_series(forcing, **kw)
    assert np.array_equal(sim.values, again.values)
    assert sim.values.shape == (3, 60)
    # With zero noise each modeled step equals the analog mean of its past.
    lib = build_library(forcing, lag=1, q=3)
    state = ModelState(theta1=0.5, m=4, q=3, sigma2=0.0)
    start = lib.first_valid
    for t0 in (start + 12, 40, 58):
        want = analog_mean(
            state, lib, sim, t0, 2, np.arange(start, t0)
        )
        assert np.allclose(sim.values[:, t0 + 1], want, atol=1e-12)
    noisy = simulate_analog_series(forcing, **{**kw, "sigma2": 0.2})
    assert not np.allclose(noisy.values, sim.values)
    with pytest.raises(ConfigError):
        simulate_analog_series(forcing, **{**kw, "p_alpha": 0})


def test_state_and_prior_validation():
    with pytest.raises(ConfigError):
        ModelState(theta1=0.0, m=1, q=2, sigma2=1.0)
    with pytest.raises(ConfigError):
        ModelState(theta1=1.0, m=0, q=2, sigma2=1.0)
    with pytest.raises(ConfigError):
        ModelState(theta1=1.0, m=1, q=2, sigma2=-0.1)
    with pytest.raises(ConfigError):
        ModelState(theta1=1.0, m=1, q=2, sigma2=1.0, gamma=1.5)
    with pytest.raises(ConfigError):
        PriorConfig(m_min=5, m_max=3)
    with pytest.raises(ConfigError):
        PriorConfig(theta1_rate=0.0)
    with pytest.raises(ConfigError):
        SamplerConfig(mq_proposal="gibbs")
