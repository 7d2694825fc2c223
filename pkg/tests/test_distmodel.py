import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexdist.distmodel import (
    DegenerateHistogram, FitReport, GeomParam, MixtureParams, ParameterError, TwoStageParams,
    curve_table, default_init, fit_geom, fit_mixture_em, fit_two_stage_em, geom_pmf, log_likelihood,
    mean_k, mixture_pmf, posterior_mean_j, sample_histogram, two_stage_pmf,
)

from oracles import mixture_brute, posterior_mean_brute, two_stage_brute

rates = st.floats(min_value=1e-3, max_value=5.0)


# pmfs ------------------------------------------------------------------

def test_geom_examples():
    assert geom_pmf(math.log(2), 0) == pytest.approx(0.5, abs=1e-15)
    assert geom_pmf(math.log(2), 2) == pytest.approx(0.125, abs=1e-15)


def test_geom_partial_sum_matches_direct_summation():
    mu = 0.05
    direct = math.fsum((1 - math.exp(-mu)) * math.exp(-mu * k) for k in range(201))
    assert float(geom_pmf(mu, np.arange(201)).sum()) == pytest.approx(direct, abs=1e-12)


def test_two_stage_examples():
    ln2 = math.log(2)
    assert two_stage_pmf(TwoStageParams(ln2, ln2), 0) == pytest.approx(0.25, abs=1e-15)
    assert two_stage_pmf(TwoStageParams(ln2, math.log(4)), 0) == pytest.approx(0.375, abs=1e-15)


def test_two_stage_matches_convolution_random(rng):
    for _ in range(200):
        mu1, mu2 = rng.uniform(1e-3, 4, size=2)
        k = int(rng.integers(0, 101))
        got = two_stage_pmf(TwoStageParams(mu1, mu2), k)
        assert abs(got - two_stage_brute(mu1, mu2, k)) < 1e-10


@given(rates, rates, st.integers(0, 100))
def test_two_stage_symmetric(mu1, mu2, k):
    a = two_stage_pmf(TwoStageParams(mu1, mu2), k)
    b = two_stage_pmf(TwoStageParams(mu2, mu1), k)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(rates, st.floats(-1e-10, 1e-10), st.integers(0, 100))
def test_two_stage_near_equal_rates_continuous(mu, eps, k):
    got = two_stage_pmf(TwoStageParams(mu, mu + eps + 1e-12), k)
    assert abs(got - two_stage_brute(mu, mu, k)) < 1e-8


def test_two_stage_limit_is_geometric():
    k = np.arange(2000)
    for mu2 in (0.0148, 0.1, 1.0):
        diff = two_stage_pmf(TwoStageParams(50.0, mu2), k) - geom_pmf(mu2, k)
        assert np.max(np.abs(diff)) < 1e-6


@pytest.mark.parametrize("mu1,mu2", [(0.29, 0.0168), (1.0, 0.5), (0.05, 0.05), (3.0, 0.01)])
def test_tail_bounded_normalization(mu1, mu2):
    K = 5000
    ts = TwoStageParams(mu1, mu2).canonical()
    part = math.fsum(two_stage_pmf(ts, np.arange(K + 1)).tolist())
    # P(X > K) <= P(J > K/2) + P(L > K/2) for X = J + L
    tail = math.exp(-ts.mu1 * (K // 2 + 1)) + math.exp(-ts.mu2 * (K // 2 + 1))
    assert 1 - tail - 1e-9 <= part <= 1 + 1e-9
    assert abs(part - 1) < 1e-9 + tail
    g = math.fsum(geom_pmf(mu2, np.arange(K + 1)).tolist())
    assert abs(g + math.exp(-mu2 * (K + 1)) - 1) < 1e-9


def test_mixture_endpoints_and_normalization(rng):
    N = 400
    assert np.allclose(MixtureParams(0.3, 0.02, 1.0, N).pmf(), 1 / N, rtol=0, atol=1e-15)
    ts = two_stage_pmf(TwoStageParams(0.3, 0.02), np.arange(N))
    assert np.allclose(MixtureParams(0.3, 0.02, 0.0, N).pmf(), ts / ts.sum(), rtol=1e-13)
    for _ in range(50):
        mu1, mu2 = rng.uniform(1e-3, 3, size=2)
        a = rng.uniform()
        p = MixtureParams(mu1, mu2, a, N).pmf()
        assert abs(math.fsum(p.tolist()) - 1) < 1e-12
    p = MixtureParams(0.29, 0.0168, 0.224, 30).pmf()
    assert np.allclose(p, mixture_brute(0.29, 0.0168, 0.224, 30), rtol=1e-12)


def test_mixture_rejects_out_of_range_k():
    with pytest.raises(ParameterError):
        mixture_pmf(MixtureParams(1, 0.1, 0.1, 10), 10)
    with pytest.raises(ParameterError):
        geom_pmf(0.1, -1)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_invalid_rates_rejected(bad):
    with pytest.raises(ParameterError):
        TwoStageParams(bad, 0.1)
    with pytest.raises(ParameterError):
        GeomParam(bad)


def test_invalid_alpha_rejected():
    with pytest.raises(ParameterError):
        MixtureParams(0.1, 0.2, 1.5)


# posterior -------------------------------------------------------------

def test_posterior_examples():
    assert posterior_mean_j(TwoStageParams(0.3, 0.3), 10) == pytest.approx(5.0, abs=1e-12)
    assert posterior_mean_j(TwoStageParams(0.3, 0.01), 0) == 0.0


def test_posterior_matches_direct_sum(rng):
    for _ in range(300):
        mu1, mu2 = rng.uniform(1e-3, 4, size=2)
        k = int(rng.integers(0, 51))
        got = posterior_mean_j(TwoStageParams(mu1, mu2), k)
        assert abs(got - posterior_mean_brute(mu1, mu2, k)) < 1e-10


@given(rates, rates)
@settings(max_examples=50)
def test_posterior_in_range_and_monotone(mu1, mu2):
    e = posterior_mean_j(TwoStageParams(mu1, mu2), np.arange(60))
    assert np.all(e >= 0) and np.all(e <= np.arange(60))
    assert np.all(np.diff(e) >= -1e-12)


# fits ----------------------------------------------------------------------

def test_fit_geom_round_trip():
    k = np.arange(5000)
    assert fit_geom(geom_pmf(0.1, k)).mu == pytest.approx(0.1, abs=1e-6)
    hist = np.zeros(10)
    hist[[0, 2]] = 1  # <k> = 1
    assert fit_geom(hist).mu == pytest.approx(math.log(2), abs=1e-15)


def test_fit_geom_is_ml_against_grid(rng):
    h = rng.geometric(1 - math.exp(-0.07), size=20000) - 1
    counts = np.bincount(h)
    mu = fit_geom(counts).mu
    p = counts / counts.sum()
    k = np.arange(p.size)

    def L(m):
        return float(np.dot(p, np.log(-math.expm1(-m)) - m * k))

    for f in (0.99, 0.995, 1.005, 1.01):
        assert L(mu) >= L(mu * f)


def test_fit_geom_degenerate():
    with pytest.raises(DegenerateHistogram):
        fit_geom([5, 0, 0])
    with pytest.raises(DegenerateHistogram):
        fit_geom([0, 0])


def _monotone(trace, slack=1e-12):
    return all(b >= a - slack for a, b in zip(trace, trace[1:]))


def test_two_stage_em_recovery(rng):
    ts = TwoStageParams(0.29, 0.0168)
    # draw from the untruncated law, keep the window
    x = rng.geometric(1 - math.exp(-0.29), 10**6) + rng.geometric(1 - math.exp(-0.0168), 10**6) - 2
    hist = np.bincount(x[x < 400], minlength=400)
    rep = fit_two_stage_em(hist, tol=1e-12, max_iter=3000)
    assert _monotone(rep.trace)
    assert rep.params.mu1 == pytest.approx(ts.mu1, rel=0.1)
    assert rep.params.mu2 == pytest.approx(ts.mu2, rel=0.1)


def test_two_stage_em_fixed_point_at_truth():
    ts = TwoStageParams(0.29, 0.0168)
    p = two_stage_pmf(ts, np.arange(400))
    rep = fit_two_stage_em(p, init=ts, max_iter=1)
    assert rep.params.mu1 == pytest.approx(0.29, rel=1e-6)
    assert rep.params.mu2 == pytest.approx(0.0168, rel=1e-6)


def test_mixture_em_recovery_fast_first_stage(rng):
    truth = MixtureParams(7.0, 0.0148, 0.253, 400)
    rep = fit_mixture_em(sample_histogram(truth, 10**6, rng))
    assert _monotone(rep.trace)
    assert abs(rep.params.alpha - 0.253) < 0.03
    assert rep.params.mu2 == pytest.approx(0.0148, rel=0.1)


def test_mixture_em_uniform_histogram():
    rep = fit_mixture_em(np.full(400, 1000), tol=1e-12, max_iter=5000)
    assert rep.params.alpha > 0.95
    assert _monotone(rep.trace)


@given(st.lists(st.integers(0, 50), min_size=5, max_size=60).filter(lambda c: sum(1 for x in c if x) >= 2))
@settings(max_examples=40, deadline=None)
def test_em_traces_monotone(counts):
    assert _monotone(fit_mixture_em(counts, max_iter=200).trace)
    assert _monotone(fit_two_stage_em(counts, max_iter=200).trace)


def test_em_rejects_degenerate():
    with pytest.raises(DegenerateHistogram):
        fit_mixture_em([0, 3, 0])
    with pytest.raises(DegenerateHistogram):
        fit_mixture_em([])


def test_default_init():
    p = default_init([1, 1, 1, 1])  # <k> = 1.5
    assert (p.mu1, p.mu2, p.alpha) == pytest.approx((2 / 1.5, 0.5 / 1.5, 0.1))


# likelihood ------------------------------------------------------------

def test_loglik_uniform():
    assert log_likelihood(MixtureParams(1, 0.1, 1.0, 400), np.ones(400)) == pytest.approx(-math.log(400))


def test_loglik_scale_invariant_and_truth_best(rng):
    truth = MixtureParams(0.29, 0.0168, 0.224, 400)
    h = sample_histogram(truth, 200_000, rng)
    assert log_likelihood(truth, h) == log_likelihood(truth, 3 * h)
    base = log_likelihood(truth, h)
    for d in [dict(mu1=0.2), dict(mu1=0.4), dict(mu2=0.012), dict(mu2=0.022), dict(alpha=0.15), dict(alpha=0.3)]:
        other = MixtureParams(**{**dict(mu1=0.29, mu2=0.0168, alpha=0.224, N=400), **d})
        assert log_likelihood(other, h) < base


def test_loglik_length_mismatch():
    with pytest.raises(ParameterError):
        log_likelihood(MixtureParams(1, 0.1, 0.1, 10), np.ones(5))


def test_mean_and_curve_table():
    assert mean_k([1, 0, 1]) == 1.0
    t = curve_table([1, 0, 1], MixtureParams(1, 0.5, 0.2, 3))
    assert t.shape == (3, 3) and t[:, 1].tolist() == [0.5, 0.0, 0.5]


def test_fit_report_round_trip(tmp_path):
    rep = FitReport(MixtureParams(0.3, 0.02, 0.2, 400), [-6.0, -5.5], 1, True)
    path = tmp_path / "x.fit"
    rep.save(path, "self", provenance="lexdist fit version=x config=y")
    back = FitReport.load(path)
    assert back.params == rep.params and back.trace == rep.trace and back.converged


def test_fit_report_bad_value_has_line(tmp_path):
    path = tmp_path / "x.fit"
    path.write_text("# lexdist fit v1\nmu1=0.3\nmu2=oops\nalpha=0.1\nN=400\nloglik=-1\niterations=1\nconverged=true\n")
    with pytest.raises(ParameterError, match=r"x.fit:3"):
        FitReport.load(path)
