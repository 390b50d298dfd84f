import math

import numpy as np
import pytest

from mimofbl import dispersion as d
from mimofbl.dispersion import (
    LOG2E,
    MonteCarloConfig,
    asymptotic_limits,
    c_sigma,
    capacity,
    capacity_awgn,
    dispersion_awgn,
    eta_moments,
    min_blocklength,
    normal_approx_logM,
    v1_of_x,
    v_iid,
    v_rank1,
)
from mimofbl.fading import ChannelParams, FadingModel, sample_H
from mimofbl.linalg import RngStream, qfunc_inv

GAUSS = FadingModel.iid_gaussian()
RAD = FadingModel.rademacher()
MC = MonteCarloConfig(100_000, seed=3)

# E[1/2 ln(1 + Z^2)] for Z ~ N(0,1), 30-digit adaptive quadrature
CAP_1X1_P1 = 0.266726589922067416


def test_c_sigma():
    p = ChannelParams(2, 2, power=2.0)
    assert c_sigma(0.0, p) == 0.0
    assert c_sigma(1.0, p) == 0.5
    assert c_sigma(1e12, p) == pytest.approx(1.0, rel=1e-9)
    vals = c_sigma(np.linspace(0, 100, 50), p)
    assert np.all((vals >= 0) & (vals < 1.0))


def test_awgn_closed_forms():
    assert capacity_awgn(0.0) == 0.0
    assert capacity_awgn(1.0) == pytest.approx(0.5 * math.log(2), abs=1e-16)
    assert capacity_awgn(math.e**2 - 1) == pytest.approx(1.0, abs=1e-15)
    assert dispersion_awgn(0.0) == 0.0
    assert dispersion_awgn(1.0) == 0.375
    assert dispersion_awgn(1e9) == pytest.approx(0.5, abs=1e-12)


def test_capacity_degenerate_cases():
    assert capacity(ChannelParams(3, 2, 2, 0.0), GAUSS, MC) == (0.0, 0.0)
    est = capacity(ChannelParams(1, 1, 1, 1.0), RAD, MC)
    assert est.value == capacity_awgn(1.0) and est.stderr == 0.0


def test_capacity_scalar_gaussian_against_quadrature():
    est = capacity(ChannelParams(1, 1, 1, 1.0), GAUSS, MC)
    assert abs(est.value - CAP_1X1_P1) <= 3 * est.stderr


def test_logdet_and_eigen_sum_routes_agree():
    params = ChannelParams(3, 2, 1, 5.0)
    s = params.snr_per_antenna
    h = sample_H(GAUSS, params, RngStream(1), size=500)
    logdet = 0.5 * np.linalg.slogdet(np.eye(2) + s * h @ np.swapaxes(h, 1, 2))[1]
    lam = np.linalg.eigvalsh(np.swapaxes(h, 1, 2) @ h)
    eig_sum = 0.5 * np.log1p(s * np.maximum(lam, 0)).sum(axis=1)
    assert np.max(np.abs(logdet - eig_sum)) <= 1e-9


def test_eta_rademacher():
    m = eta_moments(ChannelParams(1, 1, 1, 1.0), RAD, MC)
    assert m.eta1 == 0.125 and m.eta2 == 0.125 and m.eta3 == 0.0


def test_eta_zero_power_uses_identity_c():
    params = ChannelParams(2, 3, 1, 0.0)
    m = eta_moments(params, GAUSS, MC)
    lam = d.eigen_samples(params, GAUSS, MC)
    assert m.eta3 == pytest.approx(np.var(lam.sum(axis=1), ddof=1) / 4, rel=1e-12)
    assert m.eta1 == pytest.approx(np.mean((lam**2).sum(axis=1)) / 2, rel=1e-12)


def test_eta_third_term_nonnegative():
    m = eta_moments(ChannelParams(2, 2, 1, 4.0), GAUSS, MC)
    se = math.hypot(m.stderr["eta1"], m.stderr["eta2"] / 2)
    assert m.eta1 - m.eta2 / 2 >= -4 * se
    assert m.eta3 >= 0 and m.eta4 >= -4 * m.stderr["eta4"]


def test_v_iid_awgn_reduction():
    rep = v_iid(ChannelParams(1, 1, 1, 1.0), RAD, MC)
    assert rep.v == 0.375 and rep.v_stderr == 0.0
    assert rep.terms["fading"] == 0.0 and rep.terms["power"] == 0.0


def test_v_iid_zero_power():
    rep = v_iid(ChannelParams(4, 4, 4, 0.0), GAUSS, MC)
    assert rep.v == 0.0 and rep.capacity == 0.0


def test_v_iid_scalar_terms_positive():
    rep = v_iid(ChannelParams(1, 1, 1, 1.0), GAUSS, MC)
    for k, val in rep.terms.items():
        assert val > 4 * rep.terms_stderr[k], k
    assert sum(rep.terms.values()) == pytest.approx(rep.v, rel=1e-15)


def test_units_conversion_is_exact_factor():
    rep = v_iid(ChannelParams(2, 2, 2, 3.0), GAUSS, MonteCarloConfig(5000, 1))
    bits = rep.to_units("bits")
    assert bits.capacity == rep.capacity * LOG2E
    assert bits.v == rep.v * LOG2E**2
    back = bits.to_units("nats")
    assert back.v == pytest.approx(rep.v, rel=1e-15)
    with pytest.raises(ValueError):
        rep.to_units("hartleys")


def test_v1_vanishing_eta_terms():
    params = ChannelParams(2, 2, 2, 3.0)
    m = eta_moments(params, GAUSS, MC)
    x = math.sqrt(params.power) * np.eye(2)  # ||x||^2 = TP, x x^T = ||x||^2/n_t I
    assert v1_of_x(x, params, m) == pytest.approx(params.T * m.var_cr + m.mean_vawgn, rel=1e-13)


def test_v1_at_zero_input():
    params = ChannelParams(2, 3, 2, 3.0)
    m = eta_moments(params, GAUSS, MC)
    T, P, n_t = params.T, params.power, params.n_t
    expected = T * m.var_cr + m.mean_vawgn - m.eta5 * T * P / n_t + m.eta3 * T * P**2 / n_t**2
    assert v1_of_x(np.zeros((2, 2)), params, m) == pytest.approx(expected, rel=1e-13)


def test_v1_average_matches_v_iid():
    params = ChannelParams(2, 2, 2, 4.0)
    m = eta_moments(params, GAUSS, MC)
    rep = v_iid(params, GAUSS, MC)
    x = math.sqrt(params.snr_per_antenna) * np.random.default_rng(5).standard_normal((10_000, 2, 2))
    v1 = v1_of_x(x, params, m)
    se = math.hypot(v1.std(ddof=1) / math.sqrt(v1.size), rep.v_stderr)
    assert abs(v1.mean() - rep.v) <= 4 * se


def test_v1_batched_matches_scalar():
    params = ChannelParams(3, 2, 4, 2.0)
    m = eta_moments(params, GAUSS, MonteCarloConfig(2000, 1))
    xs = np.random.default_rng(6).standard_normal((5, 3, 4))
    batch = v1_of_x(xs, params, m)
    np.testing.assert_allclose(batch, [v1_of_x(x, params, m) for x in xs], rtol=1e-14)


def test_v1_rejects_mismatch():
    params = ChannelParams(2, 2, 2, 3.0)
    m = eta_moments(params, GAUSS, MonteCarloConfig(1000, 1))
    with pytest.raises(ValueError):
        v1_of_x(np.zeros((2, 3)), params, m)
    with pytest.raises(ValueError):
        v1_of_x(np.zeros((2, 2)), ChannelParams(2, 2, 2, 5.0), m)


def test_rank1_telatar_consistency():
    params = ChannelParams(4, 1, 3, 10.0)
    a = v_iid(params, GAUSS, MC)
    b = v_rank1(params, GAUSS, params.n_t * params.T, MC)
    assert abs(a.v - b.v) <= 1e-12
    p1 = ChannelParams(1, 3, 5, 10.0)
    assert abs(v_rank1(p1, GAUSS, 5, MC).v - v_iid(p1, GAUSS, MC).v) <= 1e-12


def test_rank1_monotone_in_vstar():
    params = ChannelParams(4, 1, 4, 10.0)
    vals = [v_rank1(params, GAUSS, s, MC).v for s in (16, 32, 64)]
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(ValueError):
        v_rank1(ChannelParams(2, 2, 2, 1.0), GAUSS, 8, MC)


def test_normal_approximation():
    params = ChannelParams(1, 1, 1, 1.0)
    c, v = capacity_awgn(1.0), 0.375
    assert normal_approx_logM(100, 0.5, c, v, params).log_m == 100 * c
    assert normal_approx_logM(100, 1e-3, c, 0.0, params).log_m == 100 * c
    na = normal_approx_logM(1000, 1e-3, c, v, params)
    assert na.rate == pytest.approx(c - math.sqrt(0.375 / 1000) * 3.0902323061678, rel=1e-12)
    rates = normal_approx_logM(np.arange(1, 200), 1e-3, c, v, ChannelParams(1, 1, 4, 1.0)).rate
    assert np.all(np.diff(rates) > 0)
    with pytest.raises(ValueError):
        normal_approx_logM(10, 1.0, c, v, params)


def test_min_blocklength():
    assert min_blocklength(0.9, 1e-3, 1.0, 0.0).channel_uses == 0.0
    n9 = min_blocklength(0.9, 1e-3, 1.0, 2.0).channel_uses
    n8 = min_blocklength(0.8, 1e-3, 1.0, 2.0).channel_uses
    assert n9 / n8 == pytest.approx(4.0, rel=1e-14)
    for eps in (1e-2, 1e-3, 1e-6):
        r = min_blocklength(0.9, eps, 1.0, 3.0).channel_uses / min_blocklength(0.9, eps, 1.0, 2.0).channel_uses
        assert r == pytest.approx(1.5, rel=1e-14)
    b = min_blocklength(0.9, 1e-3, 1.0, 0.3, coherence_T=8)
    assert b.rounded_channel_uses % 8 == 0 and b.rounded_channel_uses >= b.channel_uses
    assert b.channel_uses == pytest.approx((qfunc_inv(1e-3) / 0.1) ** 2 * 0.3, rel=1e-14)
    with pytest.raises(ValueError):
        min_blocklength(0.9, 1e-3, 0.0, 1.0)


def test_asymptotic_limit_formulas():
    assert asymptotic_limits("fix_nt_grow_nr", "transmit", 4, 100.0, growing_n=256).dispersion == 2.0
    lim = asymptotic_limits("fix_nr_grow_nt", "received", 16, 100.0)
    assert lim.capacity == pytest.approx(8 * math.log(7.25), rel=1e-15)
    a = asymptotic_limits("fix_nr_grow_nt", "received", 8, 50.0)
    b = asymptotic_limits("fix_nt_grow_nr", "received", 8, 50.0)
    assert a.capacity == b.capacity
    with pytest.raises(ValueError):
        asymptotic_limits("fix_nt_grow_nr", "transmit", 4, 100.0)


def test_mc_thread_invariance(monkeypatch):
    params = ChannelParams(3, 3, 2, 5.0)
    mc = MonteCarloConfig(40_000, seed=9, chunk=5000)
    d._eigen_samples_cached.cache_clear()
    monkeypatch.setenv(d.THREADS_ENV, "1")
    a = v_iid(params, GAUSS, mc)
    d._eigen_samples_cached.cache_clear()
    monkeypatch.setenv(d.THREADS_ENV, "4")
    b = v_iid(params, GAUSS, mc)
    assert (a.capacity, a.v, a.v_stderr) == (b.capacity, b.v, b.v_stderr)


def test_seed_changes_estimate():
    params = ChannelParams(2, 2, 1, 5.0)
    a = capacity(params, GAUSS, MonteCarloConfig(1000, 1))
    b = capacity(params, GAUSS, MonteCarloConfig(1000, 2))
    assert a.value != b.value


def test_stderr_is_calibrated():
    # reported standard errors match the spread over independent seeds
    params = ChannelParams(2, 2, 4, 10.0)
    reps = [v_iid(params, GAUSS, MonteCarloConfig(2000, s)) for s in range(200)]
    spread_v = np.std([r.v for r in reps], ddof=1)
    spread_c = np.std([r.capacity for r in reps], ddof=1)
    assert 0.8 < spread_v / np.mean([r.v_stderr for r in reps]) < 1.25
    assert 0.8 < spread_c / np.mean([r.capacity_stderr for r in reps]) < 1.25


def test_received_convention_is_resolved():
    rp = ChannelParams(4, 4, 2, 100.0, "received")
    tp = ChannelParams(4, 4, 2, 25.0)
    assert v_iid(rp, GAUSS, MonteCarloConfig(1000, 1)).v == v_iid(tp, GAUSS, MonteCarloConfig(1000, 1)).v
