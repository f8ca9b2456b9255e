import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from steinblock import sequence_lab as sl
from steinblock.core_model import CoefficientSet, curvelet_2d, wavelet_1d, wavelet_2d
from steinblock.errors import InvalidParameterError
from steinblock.shrinkage import config_for, solve_lambda_star

LAM = solve_lambda_star()


def scalar_mal(v, w, lam):
    """Loop-based evaluation of both sides of the deterministic inequality."""
    u = [a + b for a, b in zip(v, w)]
    su = sum(x * x for x in u)
    f = 0.0 if su == 0 else max(0.0, 1 - lam * lam / su)
    lhs = sum((x * f - a) ** 2 for x, a in zip(u, v))
    sw = sum(x * x for x in w)
    rhs = 10 * sw * (math.sqrt(sw) > lam / 2) + 10 * min(sum(a * a for a in v), lam * lam / 4)
    return lhs, rhs


class TestLemmaMal:
    def test_instance_validation(self):
        with pytest.raises(InvalidParameterError):
            sl.OracleInstance([1, 2], [1], 1.0)
        with pytest.raises(InvalidParameterError):
            sl.OracleInstance([1], [1], 0.0)
        with pytest.raises(InvalidParameterError):
            sl.OracleInstance([1], [1], 1.0, gamma=1.0)
        assert sl.OracleInstance([1, 2, 3], [0, 0, 0], 1.0).m == 3

    def test_zero_signal(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            m = int(rng.integers(1, 20))
            w = rng.uniform(-10, 10, m)
            lhs, rhs, ok = sl.check_lemma_mal(sl.OracleInstance(np.zeros(m), w, rng.uniform(0.1, 20)))
            assert ok

    def test_hand_example(self):
        v = np.zeros(5)
        v[0] = 10
        lhs, rhs, ok = sl.check_lemma_mal(sl.OracleInstance(v, np.zeros(5), 2.0))
        assert lhs == pytest.approx(0.16, abs=1e-12) and rhs == 10 and ok

    def test_zero_observation_convention(self):
        v = np.array([1.0, -2.0])
        lhs, _, _ = sl.check_lemma_mal(sl.OracleInstance(v, -v, 1.0))
        assert lhs == 5.0

    @settings(max_examples=300, deadline=None)
    @given(st.integers(1, 64).flatmap(lambda m: st.tuples(
        st.lists(st.floats(-10, 10), min_size=m, max_size=m),
        st.lists(st.floats(-10, 10), min_size=m, max_size=m))), st.floats(1e-3, 20))
    def test_matches_scalar_oracle(self, vw, lam):
        v, w = vw
        lhs, rhs, ok = sl.check_lemma_mal(sl.OracleInstance(v, w, lam))
        l2, r2 = scalar_mal(v, w, lam)
        assert lhs == pytest.approx(l2, rel=1e-9, abs=1e-12)
        assert rhs == pytest.approx(r2, rel=1e-12, abs=1e-12)
        assert ok

    def test_fuzz_small(self):
        res = sl.fuzz_lemma_mal(20_000, seed=5)
        assert res.count == 20_000 and res.violations == 0 and res.worst_ratio <= 1

    def test_fuzz_detects_broken_bound(self, monkeypatch):
        def broken(v, w, lam):
            lhs, rhs = original(v, w, lam)
            return lhs, rhs * 0.01
        original = sl._mal_terms
        monkeypatch.setattr(sl, "_mal_terms", broken)
        assert sl.fuzz_lemma_mal(5000, seed=1).violations > 0


def chi2_risk(m, gamma, sigma=1.0):
    """E|u~|^2 for v = 0 by integrating over |u|^2 / sigma^2 ~ chi2(m)."""
    t = gamma * m

    def f(r):
        return sigma ** 2 * (r - t) ** 2 / r * stats.chi2.pdf(r, m)
    val, _ = integrate.quad(f, t, np.inf, limit=200)
    return val


def scalar_risk_m1(v, gamma, sigma=1.0):
    """Risk for m = 1 by integrating over the Gaussian density of u."""
    def loss(u):
        g = max(0.0, 1 - gamma * sigma ** 2 / (u * u)) if u else 0.0
        return (u * g - v) ** 2 * stats.norm.pdf(u, v, sigma)
    pts = sorted({v, math.sqrt(gamma) * sigma, -math.sqrt(gamma) * sigma})
    return integrate.quad(loss, v - 12 * sigma, v + 12 * sigma, points=pts, limit=400)[0]


class TestLemmaBP:
    def test_pure_noise_block(self):
        res = sl.check_lemma_bp(16, LAM, 1.0, np.zeros(16), 100_000, seed=0)
        assert res.holds and res.estimate < 1e-3 and res.estimate <= res.bound

    @pytest.mark.parametrize("m,gamma", [(1, 1.5), (4, 2.0), (16, 1.5), (8, LAM)])
    def test_matches_chi_square_oracle(self, m, gamma):
        res = sl.check_lemma_bp(m, gamma, 1.0, np.zeros(m), 100_000, seed=m)
        exact = chi2_risk(m, gamma)
        assert abs(res.estimate - exact) <= 4 * res.ci_halfwidth / 1.96 + 1e-12

    @pytest.mark.parametrize("v", [0.5, 2.0, 100.0])
    def test_matches_gaussian_oracle_m1(self, v):
        res = sl.check_lemma_bp(1, 2.0, 1.0, [v], 100_000, seed=3)
        assert abs(res.estimate - scalar_risk_m1(v, 2.0)) <= 4 * res.ci_halfwidth / 1.96

    def test_near_identity(self):
        res = sl.check_lemma_bp(1, 2.0, 1.0, [100.0], 100_000, seed=1)
        assert res.bound == pytest.approx(2.0 + 2 / math.sqrt(math.pi) * math.exp(-0.5 * (1 - math.log(2))))
        assert res.holds and abs(res.estimate - 1) < 0.05

    def test_homogeneity(self):
        base = sl.check_lemma_bp(4, 2.5, 1.0, [1.0, 0.0, -2.0, 0.5], 20_000, seed=11)
        c = 3.0
        scaled = sl.check_lemma_bp(4, 2.5, c, [c * 1.0, 0.0, -2.0 * c, 0.5 * c], 20_000, seed=11)
        assert scaled.estimate == pytest.approx(c * c * base.estimate, rel=1e-10)
        assert scaled.bound == pytest.approx(c * c * base.bound, rel=1e-12)

    def test_ci_is_normal_halfwidth(self):
        res = sl.check_lemma_bp(2, 3.0, 1.0, [1.0, 1.0], 10_000, seed=4)
        assert res.ci_halfwidth > 0 and res.holds == (res.estimate - 3 * res.ci_halfwidth <= res.bound)

    def test_bound_formula(self):
        m, g, s = 9, 3.0, 2.0
        v = np.ones(9)
        tail = 2 * s * s / math.sqrt(math.pi) / (g - 1) / 3 * math.exp(-4.5 * (g - math.log(g) - 1))
        assert sl.lemma_bp_bound(m, g, s, v) == pytest.approx(tail + g * min(9.0, 36.0), rel=1e-14)

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            sl.check_lemma_bp(4, 2.0, 1.0, np.zeros(4), trials=9_999)
        with pytest.raises(InvalidParameterError):
            sl.check_lemma_bp(4, 1.0, 1.0, np.zeros(4))
        with pytest.raises(InvalidParameterError):
            sl.check_lemma_bp(4, 2.0, 0.0, np.zeros(4))

    def test_deterministic(self):
        a = sl.check_lemma_bp(3, 2.0, 1.0, [1, 2, 3], 10_000, seed=2)
        assert a == sl.check_lemma_bp(3, 2.0, 1.0, [1, 2, 3], 10_000, seed=2)

    def test_grid_shape(self):
        grid = sl.bp_grid(10_000, seed=1)
        assert len(grid) == 27 and len({k for k, _ in grid}) == 27
        assert all(r.holds for _, r in grid)


def manual_ball_norm(theta, s, p, q, ds):
    terms = []
    for (j, _), a in theta.items():
        a = np.abs(a).ravel()
        if p == math.inf:
            terms.append(2 ** (j * (s + ds / 2)) * a.max())
        else:
            terms.append(2 ** (j * (s + ds / 2 - ds / p)) * (a ** p).sum() ** (1 / p))
    if q == math.inf:
        return max(terms)
    return sum(t ** q for t in terms) ** (1 / q)


class TestBall:
    def test_norm_hand_value(self):
        theta = CoefficientSet({(0, 1): [3.0], (1, 1): [1.0, -1.0]}, kind="truth")
        ball = sl.SmoothnessBall(1.0, 2.0, 2.0, 1.0, wavelet_1d())
        # scale 1 weight 2^(1 + 1/2 - 1/2) = 2, l2 norm sqrt(2)
        assert sl.ball_norm(theta, ball) == pytest.approx(math.sqrt(9 + 8))

    @pytest.mark.parametrize("spec", [wavelet_1d(), wavelet_2d(), curvelet_2d()])
    @pytest.mark.parametrize("p,q", [(2, 2), (1, 3), (0.5, 1), (math.inf, 2), (2, math.inf), (math.inf, math.inf)])
    def test_membership(self, spec, p, q):
        J = 7 if spec.d == 1 else 4
        for seed in range(10):
            ball = sl.SmoothnessBall(1.5, p, q, 3.0, spec)
            theta = sl.sample_ball(ball, J, seed)
            norm = sl.ball_norm(theta, ball)
            assert norm <= ball.M
            assert 0.5 * ball.M <= norm
            assert norm == pytest.approx(manual_ball_norm(theta, 1.5, p, q, spec.d_star), rel=1e-12)
            assert theta.kind == "truth"
            assert all(spec.subband_count(j) == sum(1 for jj, _ in theta if jj == j) for j in range(J + 1))

    def test_smooth_ball_concentrates_coarse(self):
        ball = sl.SmoothnessBall(10.0, 2, 2, 1.0, wavelet_1d())
        for seed in range(10):
            theta = sl.sample_ball(ball, 10, seed)
            assert theta.energy([10]) < 1e-3 * theta.energy()

    def test_zero_radius(self):
        theta = sl.sample_ball(sl.SmoothnessBall(1.0, 2, 2, 0.0, wavelet_1d()), 6, 0)
        assert theta.energy() == 0

    def test_invalid_ball(self):
        with pytest.raises(InvalidParameterError):
            sl.SmoothnessBall(0.0, 2, 2, 1.0, wavelet_1d())
        with pytest.raises(InvalidParameterError):
            sl.SmoothnessBall(1.0, 2, 2, -1.0, wavelet_1d())


class TestFitRate:
    def test_exact_power_law(self):
        ns = [2 ** k for k in range(6, 14)]
        fit = sl.fit_rate(ns, [5 * n ** (-2 / 3) for n in ns])
        assert abs(fit.slope + 2 / 3) <= 1e-12 and fit.r2 == pytest.approx(1, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(5))

    def test_constant(self):
        fit = sl.fit_rate([64, 128, 256], [0.3, 0.3, 0.3])
        assert abs(fit.slope) <= 1e-12 and fit.r2 == 1.0

    def test_errors(self):
        with pytest.raises(InvalidParameterError):
            sl.fit_rate([64, 128], [1, 2])
        with pytest.raises(InvalidParameterError):
            sl.fit_rate([64, 128, 256], [1, 0, 2])
        with pytest.raises(InvalidParameterError):
            sl.fit_rate([64, 128, 256], [1, 2])

    @given(st.floats(-3, 3), st.floats(-5, 5))
    def test_recovers_any_line(self, slope, icept):
        ns = [64, 128, 512, 4096]
        fit = sl.fit_rate(ns, [math.exp(icept) * n ** slope for n in ns])
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert 0 <= fit.r2 <= 1


class TestSimulateMise:
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_rate(self, s):
        ball = sl.SmoothnessBall(s, 2, 2, 100.0, wavelet_1d())
        fit = sl.simulate_mise(ball, [2 ** k for k in range(10, 17)], reps=20, seed=1)
        assert abs(fit.slope + 2 * s / (2 * s + 1)) <= 0.15

    def test_zero_signal_parametric_rate(self):
        ball = sl.SmoothnessBall(1.0, 2, 2, 0.0, wavelet_1d())
        ns = [2 ** k for k in range(10, 16)]
        fit = sl.simulate_mise(ball, ns, reps=20, seed=0)
        assert abs(fit.slope + 1) <= 0.05
        # the 2^j0 - 1 = 7 coarse detail coefficients pass through with variance 1/n each
        assert fit.mises[0] == pytest.approx(7 / ns[0], rel=0.3)

    def test_monotone_in_radius(self):
        ns = [2 ** 12, 2 ** 13, 2 ** 14]
        prev = None
        for M in (25, 50, 100, 200):
            fit = sl.simulate_mise(sl.SmoothnessBall(1.0, 2, 2, M, wavelet_1d()), ns, reps=20, seed=0)
            if prev is not None:
                assert all(a > b for a, b in zip(fit.mises, prev))
            prev = fit.mises

    def test_huge_threshold_kills_everything(self):
        spec = wavelet_1d()
        n = 4096
        ball = sl.SmoothnessBall(1.0, 2, 2, 50.0, spec)
        theta = sl.sample_ball(ball, 12, 0)
        y = sl.observe(theta, n, spec.r, np.random.default_rng(1))
        loss = sl.squared_error(theta, y, spec, n, lam=1e6)
        j0, J = config_for(spec, n, {k: 1.0 for k in y}).j0, 12
        coarse = range(j0)
        expected = (y - theta).energy(coarse) + theta.energy(range(j0, J + 1))
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_replications_independent_of_count(self):
        ball = sl.SmoothnessBall(1.0, 2, 2, 100.0, wavelet_1d())
        a = sl.simulate_mise(ball, [64, 128, 256], reps=5, seed=3)
        b = sl.simulate_mise(ball, [64, 128, 256], reps=6, seed=3)
        rows_b = {(n, r): v for n, r, v in b.per_rep}
        assert all(rows_b[(n, r)] == v for n, r, v in a.per_rep)
        c = sl.simulate_mise(ball, [64, 128, 256], reps=5, seed=3)
        assert a.per_rep == c.per_rep and a.slope == c.slope

    def test_preconditions(self):
        ball = sl.SmoothnessBall(1.0, 2, 2, 1.0, wavelet_1d())
        with pytest.raises(InvalidParameterError):
            sl.simulate_mise(ball, [256, 128, 512], reps=5)
        with pytest.raises(InvalidParameterError):
            sl.simulate_mise(ball, [32, 128, 512], reps=5)
        with pytest.raises(InvalidParameterError):
            sl.simulate_mise(ball, [64, 128, 512], reps=4)

    def test_two_dimensional_preset(self):
        fit = sl.simulate_mise(sl.SmoothnessBall(1.0, 2, 2, 10.0, wavelet_2d()), [64, 128, 256], reps=5)
        assert fit.slope < 0 and len(fit.per_rep) == 15

    def test_csv(self, tmp_path):
        ball = sl.SmoothnessBall(1.0, 2, 2, 100.0, wavelet_1d())
        fit = sl.simulate_mise(ball, [64, 128, 256], reps=5, seed=0)
        main, summary = sl.write_rate_csv(fit, tmp_path / "rate.csv")
        lines = main.read_text().splitlines()
        assert lines[0] == "n,rep,mise" and len(lines) == 16
        s = summary.read_text().splitlines()
        assert s[0] == "slope,intercept,r2" and len(s) == 2
