import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trisense import psychometric as pf

LEVELS = [1.6, 2.0, 2.4, 2.8, 3.2, 3.6, 4.0, 4.4]


def make_fit(family=pf.PFFamily.LOGISTIC, alpha=3.5, beta=1.0, gamma=0.5,
             lapse=0.0):
    return pf.PsychometricFit(family, alpha, beta, gamma, lapse, 0.0, 80)


def observer_trials(alpha=3.5, beta=1.12, seed=0, trials_per_level=10,
                    levels=LEVELS):
    truth = make_fit(alpha=alpha, beta=beta)
    rng = np.random.default_rng(seed)
    return pf.simulate_trials(truth, levels, trials_per_level, rng, pedestal=1.2)


# --- evaluation ---------------------------------------------------------------

def test_eval_at_location_is_75_percent():
    assert pf.eval_pf(make_fit(), 3.5) == pytest.approx(0.75, abs=1e-12)


def test_lower_asymptote_is_guess_rate():
    assert pf.eval_pf(make_fit(), -1e12) == pytest.approx(0.5, abs=1e-12)


def test_upper_asymptote_is_one_minus_lapse():
    fit = make_fit(lapse=0.02)
    assert pf.eval_pf(fit, 1e12) == pytest.approx(0.98, abs=1e-12)


@given(
    family=st.sampled_from(list(pf.PFFamily)),
    alpha=st.floats(1.5, 10.0),
    beta=st.floats(0.1, 5.0),
    lapse=st.sampled_from([0.0, 0.01, 0.05]),
    x1=st.floats(0.1, 15.0),
    x2=st.floats(0.1, 15.0),
)
@settings(max_examples=200, deadline=None)
def test_psi_monotone_nondecreasing(family, alpha, beta, lapse, x1, x2):
    fit = make_fit(family, alpha, beta, lapse=lapse)
    lo, hi = min(x1, x2), max(x1, x2)
    assert pf.eval_pf(fit, lo) <= pf.eval_pf(fit, hi) + 1e-12


# --- threshold / slope ----------------------------------------------------------

def test_threshold_75_equals_alpha_for_logistic():
    assert pf.threshold_at(make_fit(), 0.75) == pytest.approx(3.5, abs=1e-12)


def test_threshold_out_of_range():
    with pytest.raises(pf.OutOfRangeError):
        pf.threshold_at(make_fit(), 0.5)   # equals the lower asymptote
    with pytest.raises(pf.OutOfRangeError):
        pf.threshold_at(make_fit(lapse=0.05), 0.95)


def test_inverse_identity_all_families():
    rng = np.random.default_rng(42)
    for family in pf.PFFamily:
        for _ in range(30):
            fit = make_fit(family, alpha=rng.uniform(1.5, 10),
                           beta=rng.uniform(0.1, 5),
                           lapse=float(rng.choice([0.0, 0.02, 0.05])))
            for p in (0.6, 0.75, 0.9):
                x = pf.threshold_at(fit, p)
                assert abs(pf.eval_pf(fit, x) - p) < 1e-9


def test_slope_at_threshold_logistic_formula():
    # logistic at its midpoint: d(psi)/dx = (1 - gamma) * beta / 4
    assert pf.slope_at_threshold(make_fit(beta=1.12)) == pytest.approx(0.14, abs=1e-12)
    assert pf.slope_at_threshold(make_fit(beta=0.56)) == pytest.approx(0.07, abs=1e-12)


def test_slope_linear_in_beta_at_midpoint():
    s1 = pf.slope_at_threshold(make_fit(beta=0.8))
    s2 = pf.slope_at_threshold(make_fit(beta=1.6))
    assert s2 == pytest.approx(2 * s1, rel=1e-12)


def test_slope_positive_across_families():
    rng = np.random.default_rng(3)
    for family in pf.PFFamily:
        for _ in range(10):
            fit = make_fit(family, alpha=rng.uniform(2, 9),
                           beta=rng.uniform(0.2, 4))
            assert pf.slope_at_threshold(fit) > 0


# --- fitting ---------------------------------------------------------------------

def test_fit_requires_two_levels():
    trials = [pf.TrialRecord(2.0, 1.2, bool(i % 2)) for i in range(10)]
    with pytest.raises(pf.InsufficientLevelsError):
        pf.fit_pf(trials)


def test_fit_rejects_separation():
    trials = [pf.TrialRecord(x, 1.2, True) for x in LEVELS for _ in range(5)]
    with pytest.raises(pf.NonIdentifiableError):
        pf.fit_pf(trials)
    trials = [pf.TrialRecord(x, 1.2, False) for x in LEVELS for _ in range(5)]
    with pytest.raises(pf.NonIdentifiableError):
        pf.fit_pf(trials)


def test_fit_deterministic():
    trials = observer_trials(seed=11)
    f1 = pf.fit_pf(trials)
    f2 = pf.fit_pf(trials)
    assert f1 == f2


def test_fit_recovers_synthetic_observer():
    # small recovery study; the full 500-replication version runs in the
    # acceptance suite
    alphas = []
    for rep in range(60):
        trials = observer_trials(seed=rep)
        try:
            alphas.append(pf.fit_pf(trials).alpha)
        except pf.PsychometricError:
            pass
    assert abs(float(np.median(alphas)) - 3.5) < 0.2


def test_mle_optimality_under_perturbation():
    rng = np.random.default_rng(7)
    checked = 0
    for rep in range(30):
        trials = observer_trials(seed=100 + rep)
        try:
            fit = pf.fit_pf(trials)
        except pf.PsychometricError:
            continue
        x, n, k = pf._aggregate(trials)
        base = -pf._nll_and_grad(
            np.array([fit.alpha, math.log(fit.beta)]), fit.family, x, n, k,
            fit.gamma, False)[0]
        for da in (-0.01, 0.01):
            for db in (-0.01, 0.01):
                cand = -pf._nll_and_grad(
                    np.array([fit.alpha * (1 + da),
                              math.log(fit.beta * (1 + db))]),
                    fit.family, x, n, k, fit.gamma, False)[0]
                assert cand <= base + 1e-9
        checked += 1
    assert checked >= 20


def test_free_lapse_capped():
    trials = observer_trials(seed=5, trials_per_level=30)
    fit = pf.fit_pf(trials, lapse_policy=pf.LapsePolicy.FREE)
    assert 0.0 <= fit.lapse <= pf.MAX_LAPSE + 1e-12


# --- bootstrap --------------------------------------------------------------------

def test_bootstrap_deterministic():
    trials = observer_trials(seed=1)
    fit = pf.fit_pf(trials)
    a = pf.bootstrap_se(fit, trials, n=80, seed=42)
    b = pf.bootstrap_se(fit, trials, n=80, seed=42)
    assert a == b


def test_bootstrap_se_scaling_with_trials():
    # ten times the trials shrinks the SE by roughly sqrt(10)
    small = observer_trials(seed=2, trials_per_level=10)
    big = observer_trials(seed=2, trials_per_level=100)
    fit_small = pf.fit_pf(small)
    fit_big = pf.fit_pf(big)
    se_small = pf.bootstrap_se(fit_small, small, n=250, seed=9)
    se_big = pf.bootstrap_se(fit_big, big, n=250, seed=9)
    ratio = se_small.sd_alpha / se_big.sd_alpha
    assert 1.8 < ratio < 6.0


def test_bootstrap_requires_two_replicates():
    trials = observer_trials(seed=1)
    fit = pf.fit_pf(trials)
    with pytest.raises(ValueError):
        pf.bootstrap_se(fit, trials, n=1)


def test_batch_refitter_matches_reference_optimizer():
    # bootstrap/GOF refits run through the vectorized scoring path; it must
    # find optima at least as good as the multi-start reference path on all
    # but a vanishing fraction of resamples (both are heuristic global
    # optimizers with tiny complementary miss tails)
    truth = make_fit(beta=2.0)
    x = np.array(LEVELS)
    n_j = np.full(8, 10.0)
    rng = np.random.default_rng(77)
    p_j = np.asarray(pf.eval_pf(truth, x))
    K = []
    while len(K) < 400:
        k = rng.binomial(10, p_j).astype(float)
        if 0 < k.sum() < 80:
            K.append(k)
    K = np.array(K)
    a_b, b_b = pf._batch_refit(x, n_j, K, truth.family, 0.5,
                               (truth.alpha, truth.beta))
    worse = 0
    worst_gap = 0.0
    for i in range(len(K)):
        ref = pf._fit_levels(x, n_j, K[i], truth.family,
                             pf.LapsePolicy.FIXED_ZERO, 0.5, n_starts=10)
        nll_b = pf._batch_nll(truth.family, x, n_j, K[i:i + 1], 0.5,
                              a_b[i:i + 1], np.log(b_b[i:i + 1]))[0]
        gap = nll_b - (-ref.log_likelihood)
        if gap > 1e-6:
            worse += 1
            worst_gap = max(worst_gap, gap)
    assert worse <= 0.005 * len(K)
    assert worst_gap < 0.2


def test_bootstrap_too_many_failures():
    # a fit whose psi is ~1 at every observed level simulates all-correct
    # datasets, which cannot be refit
    trials = observer_trials(seed=1)
    ceiling = pf.PsychometricFit(pf.PFFamily.LOGISTIC, 0.2, 20.0, 0.5, 0.0,
                                 0.0, 80)
    with pytest.raises(pf.TooManyFailuresError):
        pf.bootstrap_se(ceiling, trials, n=100, seed=0)


# --- deviance goodness of fit ------------------------------------------------------

def _perfect_fit_trials():
    """Two levels whose observed proportions sit exactly on the curve:
    psi(3.5) = 0.75 (15/20 correct) and psi at the 90% point (18/20)."""
    fit = make_fit(beta=1.0)
    x90 = pf.threshold_at(fit, 0.9)
    trials = [pf.TrialRecord(3.5, 1.2, i < 15) for i in range(20)]
    trials += [pf.TrialRecord(x90, 1.2, i < 18) for i in range(20)]
    return fit, trials


def test_deviance_zero_for_perfect_fit():
    fit, trials = _perfect_fit_trials()
    x, n, k = pf._aggregate(trials)
    assert pf._deviance(x, n, k, fit) == pytest.approx(0.0, abs=1e-9)


def test_gof_p_value_one_when_deviance_zero():
    fit, trials = _perfect_fit_trials()
    res = pf.deviance_gof(fit, trials, n_sim=50, seed=0)
    assert res.deviance == pytest.approx(0.0, abs=1e-9)
    assert res.p_value == 1.0


def test_deviance_nonnegative_and_p_in_range():
    for rep in range(5):
        trials = observer_trials(seed=200 + rep)
        fit = pf.fit_pf(trials)
        res = pf.deviance_gof(fit, trials, n_sim=60, seed=rep)
        assert res.deviance >= 0.0
        assert 0.0 <= res.p_value <= 1.0


# --- family comparison ---------------------------------------------------------------

def test_compare_families_single_family():
    trials = observer_trials(seed=4)
    cmp = pf.compare_families(trials, [pf.PFFamily.LOGISTIC], n_sim=40, seed=0)
    assert len(cmp.ranking) == 1
    assert cmp.ranking[0].family is pf.PFFamily.LOGISTIC
    assert not cmp.failures


def test_compare_families_all_fail():
    trials = [pf.TrialRecord(x, 1.2, True) for x in LEVELS]
    cmp = pf.compare_families(trials, [pf.PFFamily.LOGISTIC, pf.PFFamily.WEIBULL],
                              n_sim=10, seed=0)
    assert cmp.ranking == ()
    assert len(cmp.failures) == 2


def test_compare_families_ranks_by_p_then_loglik():
    trials = observer_trials(seed=8, trials_per_level=40)
    cmp = pf.compare_families(trials, list(pf.PFFamily), n_sim=60, seed=1)
    ps = [e.gof.p_value for e in cmp.ranking]
    assert ps == sorted(ps, reverse=True)


def test_logistic_data_prefers_logistic_family():
    # the generator-matching family should top the ranking in >= 60% of
    # replications; needs a wide stimulus range and large n, and a family set
    # with distinguishable shapes (hyperbolic secant and cumulative normal
    # mimic the logistic within binomial noise under a 0.5 guess rate)
    wide = [1.6, 2.2, 2.8, 3.4, 4.0, 4.6, 5.4, 6.4, 7.6, 9.0]
    families = [pf.PFFamily.LOGISTIC, pf.PFFamily.WEIBULL, pf.PFFamily.GUMBEL]
    wins = 0
    n_reps = 200
    for rep in range(n_reps):
        trials = observer_trials(seed=1000 + rep, trials_per_level=500,
                                 levels=wide)
        cmp = pf.compare_families(trials, families, n_sim=149, seed=rep)
        if cmp.ranking and cmp.ranking[0].family is pf.PFFamily.LOGISTIC:
            wins += 1
    assert wins >= 0.6 * n_reps


# --- trial records and serialization ---------------------------------------------------

def test_trial_record_validates_stimulus_vs_pedestal():
    with pytest.raises(ValueError):
        pf.TrialRecord(1.0, 1.2, True)


def test_trials_csv_roundtrip(tmp_path):
    trials = observer_trials(seed=6)
    path = tmp_path / "trials.csv"
    pf.write_trials_csv(trials, str(path))
    back = pf.read_trials_csv(str(path))
    assert back == trials


def test_trials_csv_requires_header():
    bad = io.StringIO("3.0,1.2,1,V\n")
    with pytest.raises(ValueError):
        pf.read_trials_csv(bad)


def test_fit_report_field_names():
    trials = observer_trials(seed=1)
    fit = pf.fit_pf(trials)
    se = pf.bootstrap_se(fit, trials, n=50, seed=0)
    gof = pf.deviance_gof(fit, trials, n_sim=30, seed=0)
    report = pf.fit_report(fit, se, gof)
    assert list(report) == ["family", "alpha_ppm", "beta", "gamma", "lambda",
                            "threshold75_ppm", "slope_at_threshold",
                            "sd_alpha", "sd_slope", "deviance", "p_value"]
    text = pf.render_fit_report(report)
    assert '"alpha_ppm"' in text
