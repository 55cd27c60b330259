import cmath
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heston_rnd import fixtures, heston
from heston_rnd.heston import (
    CharFnOverflowError,
    HestonParams,
    MarketContext,
    black_scholes_call,
    call_price,
    char_fn,
    delta,
    feller_ratio,
    prob_in_money,
    rnd_cdf,
    rnd_density,
    rnd_moments,
)
from heston_rnd.numerics import integrate_interval

SETS = [fixtures.AMD, fixtures.SP500, fixtures.ODAX]
ids = lambda p: p.name  # noqa: E731


def _lewis_call(strike, params, ctx):
    """Call price by a single Lewis-type inversion, integrated with QUADPACK."""
    k = math.log(ctx.mu / strike)

    def integrand(u):
        z = complex(u, -0.5)
        cf = np.exp(heston._log_cf_std(2, z, params, ctx.tau))
        return (cmath.exp(1j * u * k) * cf).real / (u * u + 0.25)

    value, _ = integrate.quad(integrand, 0.0, np.inf, limit=2000, epsabs=1e-13, epsrel=1e-12)
    return ctx.carry_spot - math.sqrt(ctx.mu * strike) * ctx.discount * value / math.pi


def _textbook_log_cf(j, w, params, tau):
    """Original positive-root form in 50-digit arithmetic; fine while the
    logarithm's argument stays off the branch cut."""
    mp.mp.dps = 50
    kappa, theta, eta, rho, v0 = (mp.mpf(x) for x in
                                  (params.kappa, params.theta, params.eta, params.rho, params.v0))
    u = mp.mpf(0.5) if j == 1 else mp.mpf(-0.5)
    b = kappa - rho * eta if j == 1 else kappa
    w = mp.mpf(w)
    i = mp.mpc(0, 1)
    d = mp.sqrt((rho * eta * w * i - b) ** 2 - eta ** 2 * (2 * u * w * i - w ** 2))
    g = (b - rho * eta * w * i + d) / (b - rho * eta * w * i - d)
    e = mp.exp(d * tau)
    C = kappa * theta / eta ** 2 * ((b - rho * eta * w * i + d) * tau - 2 * mp.log((1 - g * e) / (1 - g)))
    D = (b - rho * eta * w * i + d) / eta ** 2 * (1 - e) / (1 - g * e)
    return complex(C + D * v0)


class TestTypes:
    @pytest.mark.parametrize("field,value", [("kappa", 0.0), ("theta", -1.0), ("eta", 0.0),
                                             ("rho", 1.5), ("v0", -0.1), ("kappa", math.nan)])
    def test_param_validation(self, field, value):
        good = dict(kappa=1.0, theta=0.04, eta=0.3, rho=-0.5, v0=0.04)
        good[field] = value
        with pytest.raises(ValueError):
            HestonParams(**good)

    def test_context(self):
        ctx = MarketContext.from_days(100.0, 0.05, 73, dividend=0.01)
        assert ctx.tau == pytest.approx(0.2)
        assert ctx.mu == pytest.approx(100 * math.exp(0.04 * 0.2))
        assert ctx.carry_spot == pytest.approx(100 * math.exp(-0.002))
        with pytest.raises(ValueError):
            MarketContext(0.0, 0.01, 1.0)
        with pytest.raises(ValueError):
            MarketContext(1.0, 0.01, 0.0)


class TestFeller:
    def test_identity(self):
        assert feller_ratio(HestonParams(1, 1, 1, 0, 0.1)) == 1.0

    def test_amd_by_hand(self):
        assert feller_ratio(fixtures.AMD.params) == pytest.approx(1.38164142 * 1.06637168 / 1.72832698 ** 2)

    def test_index_sets_below_one(self):
        assert feller_ratio(fixtures.SP500.params) == pytest.approx(0.04 / 0.39 ** 2)
        assert 2 * feller_ratio(fixtures.SP500.params) == pytest.approx(0.526, abs=1e-3)
        assert feller_ratio(fixtures.ODAX.params) == pytest.approx(0.251, abs=1e-3)


class TestCharacteristicFunction:
    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_at_zero(self, preset):
        for j in (1, 2):
            assert abs(char_fn(j, 1e-12, preset.params, preset.ctx)) == pytest.approx(1.0, abs=1e-10)

    def test_modulus_bound(self):
        w = np.linspace(1e-6, 300, 5000)
        for j in (1, 2):
            assert np.all(np.abs(char_fn(j, w, fixtures.AMD.params, fixtures.AMD.ctx)) <= 1 + 1e-12)

    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_martingale(self, preset):
        # E[S*] = 1, i.e. psi_2 at omega = -i is one
        assert heston._log_cf_std(2, -1j, preset.params, preset.ctx.tau) == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_share_measure_shift(self, preset):
        w = np.linspace(0.1, 40, 50)
        a = heston._log_cf_std(1, w, preset.params, preset.ctx.tau)
        b = heston._log_cf_std(2, w - 1j, preset.params, preset.ctx.tau)
        np.testing.assert_allclose(np.exp(a), np.exp(b), atol=1e-12)

    @pytest.mark.parametrize("preset", SETS, ids=ids)
    @pytest.mark.parametrize("w", [0.05, 0.7, 2.5, 6.0])
    def test_against_textbook_form(self, preset, w):
        for j in (1, 2):
            ours = np.exp(heston._log_cf_std(j, w, preset.params, preset.ctx.tau))
            ref = cmath.exp(_textbook_log_cf(j, w, preset.params, preset.ctx.tau))
            assert abs(ours - ref) < 1e-12

    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_continuous_in_omega(self, preset):
        w = np.linspace(1e-6, 200, 40001)
        for j in (1, 2):
            psi = np.exp(heston._log_cf_std(j, w, preset.params, preset.ctx.tau))
            assert np.max(np.abs(np.diff(psi))) < 0.01

    def test_overflow_guard(self):
        wild = HestonParams(1.0, 100.0, 0.1, 0.0, 100.0)
        with pytest.raises(CharFnOverflowError):
            heston._log_cf_std(2, -2j, wild, 10.0)

    def test_index_check(self):
        with pytest.raises(ValueError):
            char_fn(3, 1.0, fixtures.AMD.params, fixtures.AMD.ctx)


class TestPricing:
    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_against_lewis_inversion(self, preset):
        for m in (0.7, 0.9, 1.0, 1.1, 1.3):
            strike = m * preset.ctx.mu
            ours = call_price(strike, preset.params, preset.ctx)
            ref = _lewis_call(strike, preset.params, preset.ctx)
            assert ours == pytest.approx(ref, abs=1e-8 * preset.ctx.spot)

    def test_amd_deep_itm_row(self):
        assert call_price(40.0, fixtures.AMD.params, fixtures.AMD.ctx) == pytest.approx(51.720, abs=0.01)

    def test_black_scholes_limit(self):
        # vanishing vol-of-vol with v0 = theta leaves a constant variance
        params = HestonParams(2.0, 0.04, 1e-5, 0.0, 0.04)
        ctx = MarketContext(100.0, 0.03, 0.5, 0.01)
        strikes = np.array([80.0, 95.0, 100.0, 110.0, 130.0])
        bs = black_scholes_call(100.0, strikes, 0.03, 0.5, 0.2, 0.01)
        np.testing.assert_allclose(call_price(strikes, params, ctx), bs, atol=1e-6)

    def test_scalar_and_array(self):
        p, ctx = fixtures.AMD.params, fixtures.AMD.ctx
        assert isinstance(call_price(90.0, p, ctx), float)
        arr = call_price(np.array([[85.0, 90.0], [95.0, 100.0]]), p, ctx)
        assert arr.shape == (2, 2)
        assert arr[0, 1] == pytest.approx(call_price(90.0, p, ctx), abs=1e-12)

    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_bounds_monotone_convex(self, preset):
        ctx = preset.ctx
        strikes = ctx.mu * np.linspace(0.5, 1.8, 80)
        c = call_price(strikes, preset.params, ctx)
        assert np.all(c <= ctx.carry_spot + 1e-12)
        assert np.all(c >= np.maximum(ctx.carry_spot - strikes * ctx.discount, 0) - 1e-12)
        assert np.all(np.diff(c) <= 1e-9 * ctx.spot)
        assert np.all(np.diff(c, 2) >= -1e-8 * ctx.spot)

    def test_zero_strike_limit(self):
        p, ctx = fixtures.AMD.params, MarketContext(91.71, 0.0016, 47 / 365, 0.02)
        k = 1e-4 * ctx.spot
        assert call_price(k, p, ctx) == pytest.approx(ctx.carry_spot - k * ctx.discount, rel=1e-9)

    def test_rejects_bad_strike(self):
        with pytest.raises(ValueError):
            call_price(0.0, fixtures.AMD.params, fixtures.AMD.ctx)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(min_value=0.05, max_value=20.0))
    def test_homogeneity(self, alpha):
        p, ctx = fixtures.SP500.params, fixtures.SP500.ctx
        strikes = np.array([85.0, 100.0, 115.0])
        base = call_price(strikes, p, ctx)
        scaled = call_price(alpha * strikes, p, ctx.scaled(alpha))
        np.testing.assert_allclose(scaled, alpha * base, rtol=1e-8)


class TestProbabilities:
    def test_limits(self):
        p, ctx = fixtures.AMD.params, fixtures.AMD.ctx
        for j in (1, 2):
            assert prob_in_money(j, 1e-3, p, ctx) == pytest.approx(1.0, abs=1e-8)
            assert prob_in_money(j, 1e4, p, ctx) == pytest.approx(0.0, abs=1e-8)

    def test_delta_limits(self):
        p, ctx = fixtures.AMD.params, fixtures.AMD.ctx
        assert delta(1e-3, p, ctx) == pytest.approx(1.0, abs=1e-8)
        assert delta(1e4, p, ctx) == pytest.approx(0.0, abs=1e-8)

    def test_delta_amd_central_difference(self):
        p, ctx = fixtures.AMD.params, fixtures.AMD.ctx
        h = 1e-3 * ctx.spot
        fd = (call_price(90.0, p, ctx.scaled(1 + h / ctx.spot))
              - call_price(90.0, p, ctx.scaled(1 - h / ctx.spot))) / (2 * h)
        assert delta(90.0, p, ctx) == pytest.approx(fd, abs=1e-5)

    def test_delta_with_dividend(self):
        p = fixtures.AMD.params
        ctx = MarketContext(91.71, 0.01, 0.3, 0.03)
        h = 1e-2
        up = call_price(90.0, p, MarketContext(ctx.spot + h, ctx.rate, ctx.tau, ctx.dividend))
        down = call_price(90.0, p, MarketContext(ctx.spot - h, ctx.rate, ctx.tau, ctx.dividend))
        assert delta(90.0, p, ctx) == pytest.approx((up - down) / (2 * h), abs=1e-6)

    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_p2_is_density_tail(self, preset):
        p, ctx = preset.params, preset.ctx
        _, upper = heston.rnd_support(p, ctx)
        for m in (0.85, 1.0, 1.15):
            tail = integrate_interval(lambda u: rnd_density(u, 2, p, ctx), m, upper,
                                      abs_tol=1e-11, rel_tol=1e-11)
            assert prob_in_money(2, m * ctx.mu, p, ctx) == pytest.approx(tail, abs=1e-6)
            assert 1 - rnd_cdf(m, p, ctx) == pytest.approx(tail, abs=1e-6)


class TestDensity:
    @pytest.mark.parametrize("preset", SETS, ids=ids)
    def test_nonnegative(self, preset):
        u = np.linspace(0.3, 2.0, 300)
        assert np.all(rnd_density(u, 2, preset.params, preset.ctx) >= 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            rnd_density(0.0, 2, fixtures.AMD.params, fixtures.AMD.ctx)

    def test_share_measure_density_has_unit_mass(self):
        p, ctx = fixtures.SP500.params, fixtures.SP500.ctx
        lo, hi = heston.rnd_support(p, ctx)
        mass = integrate_interval(lambda u: rnd_density(u, 1, p, ctx), lo, hi)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_sp500_negative_skew(self):
        m = rnd_moments(fixtures.SP500.params, fixtures.SP500.ctx)
        assert -0.75 <= m["skewness"] <= -0.30

    def test_positive_correlation_flips_skew(self):
        m = rnd_moments(fixtures.SP500_POSITIVE_RHO.params, fixtures.SP500_POSITIVE_RHO.ctx)
        assert m["skewness"] > 0.3

    def test_odax_dispersion(self):
        m = rnd_moments(fixtures.ODAX.params, fixtures.ODAX.ctx)
        assert m["sd"] == pytest.approx(0.0692782, rel=0.02)
        assert m["skewness"] < 0

    def test_amd_positive_skew(self):
        m = rnd_moments(fixtures.AMD.params, fixtures.AMD.ctx)
        assert m["skewness"] > 0
        assert m["mean"] == pytest.approx(1.0, abs=1e-7)

    def test_black_scholes_limit_moments(self):
        params = HestonParams(2.0, 0.04, 1e-5, 0.0, 0.04)
        ctx = MarketContext(100.0, 0.0, 1.0)
        m = rnd_moments(params, ctx)
        assert m["sd"] == pytest.approx(math.sqrt(math.expm1(0.04)), rel=1e-6)
