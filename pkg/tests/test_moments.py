import logging
import math

import numpy as np
import pytest

import uncoupled
from uncoupled import (
    Check,
    EmpiricalMeasure,
    GridMeasure,
    make_noise,
    moments,
)


class TestRawMoment:
    def test_measures(self):
        assert uncoupled.raw_moment(EmpiricalMeasure([1.0, 2.0, 3.0]), 2) == (
            pytest.approx(14 / 3)
        )
        mu = GridMeasure([-1.0, 2.0], [0.75, 0.25])
        assert uncoupled.raw_moment(mu, 0) == 1
        assert uncoupled.raw_moment(mu, 3) == pytest.approx(1.25)

    def test_noise(self):
        noise = make_noise("laplace", {"scale": 0.5})
        assert uncoupled.raw_moment(noise, 2) == pytest.approx(0.5)
        assert uncoupled.raw_moment(noise, 3) == 0

    def test_unsupported(self):
        with pytest.raises(uncoupled.UnsupportedFamily):
            uncoupled.raw_moment([1.0, 2.0], 1)


class TestConvolvedMoment:
    mu = EmpiricalMeasure([1.0, 3.0])
    noise = make_noise("gaussian", {"sd": 0.5})

    @pytest.mark.parametrize("m, expected", [(1, 2.0), (2, 5.25), (3, 15.5)])
    def test_binomial(self, m, expected):
        assert uncoupled.convolved_moment(
            self.mu, self.noise, m
        ) == pytest.approx(expected)

    def test_point_mass_noise(self):
        assert uncoupled.convolved_moment(
            self.mu, make_noise("point-mass"), 4
        ) == pytest.approx(uncoupled.raw_moment(self.mu, 4))


class TestDeltaL:
    mu = EmpiricalMeasure([0.0, 2.0])
    nu = EmpiricalMeasure([1.0, 1.0])

    def test_gaps(self):
        assert uncoupled.delta_l(self.mu, self.nu, 1) == 0
        assert uncoupled.delta_l(self.mu, self.nu, 2) == pytest.approx(1)
        assert uncoupled.delta_l(self.mu, self.nu, 3) == pytest.approx(
            3 ** (1 / 3)
        )

    def test_symmetric(self):
        assert uncoupled.delta_l(self.mu, self.nu, 4) == uncoupled.delta_l(
            self.nu, self.mu, 4
        )

    @pytest.mark.parametrize("l", [0, -1, 1.5])
    def test_invalid_order(self, l):
        with pytest.raises(uncoupled.InvalidParameter):
            uncoupled.delta_l(self.mu, self.nu, l)


class TestOrliczNorm:
    def test_point_mass(self):
        norm = uncoupled.orlicz_norm(EmpiricalMeasure([2.0]))
        assert norm == pytest.approx(2 / math.log(2), rel=1e-9)

    def test_symmetric_pair(self):
        norm = uncoupled.orlicz_norm(EmpiricalMeasure([-1.0, 1.0]))
        assert norm == pytest.approx(1 / math.log(2), rel=1e-9)

    def test_two_atoms(self):
        norm = uncoupled.orlicz_norm(EmpiricalMeasure([0.0, 1.0]))
        assert norm == pytest.approx(1 / math.log(3), rel=1e-9)

    def test_zero(self):
        assert uncoupled.orlicz_norm(EmpiricalMeasure([0.0, 0.0])) == 0


class TestMomentBounds:
    zero = EmpiricalMeasure([0.0])
    one = EmpiricalMeasure([1.0])

    def test_surrogate(self):
        assert uncoupled.wasserstein_moment_surrogate(
            self.zero, self.one, 2, 6
        ) == pytest.approx(2)
        assert (
            uncoupled.wasserstein_moment_surrogate(self.one, self.one, 1, 6)
            == 0
        )

    def test_surrogate_invalid(self):
        with pytest.raises(uncoupled.InvalidParameter):
            uncoupled.wasserstein_moment_surrogate(self.zero, self.one, 1, 0)

    def test_w2_to_moments(self):
        assert uncoupled.w2_to_moments_rhs(
            self.zero, self.one, 2, 2.0
        ) == pytest.approx(32)

    def test_w2_to_moments_holds(self, rng):
        for _ in range(20):
            mu = EmpiricalMeasure.from_samples(rng.uniform(-1, 1, 5))
            nu = EmpiricalMeasure.from_samples(rng.uniform(-1, 1, 7))
            bound = max(uncoupled.orlicz_norm(mu), uncoupled.orlicz_norm(nu))
            for l in range(1, 6):
                assert uncoupled.delta_l(mu, nu, l) ** l <= (
                    uncoupled.w2_to_moments_rhs(mu, nu, l, bound) + 1e-12
                )

    def test_deconvolution_holds(self, rng):
        noise = make_noise("laplace", {"scale": 0.5})
        for _ in range(20):
            mu = EmpiricalMeasure.from_samples(rng.uniform(-1, 1, 4))
            nu = EmpiricalMeasure.from_samples(rng.uniform(-1, 1, 4))
            for l in range(1, 6):
                assert uncoupled.delta_l(mu, nu, l) ** l <= (
                    uncoupled.deconv_moment_rhs(mu, nu, noise, l) + 1e-12
                )

    def test_deconvolution_needs_noise(self):
        with pytest.raises(uncoupled.InvalidParameter, match="sigma"):
            uncoupled.deconv_moment_rhs(
                self.zero, self.one, make_noise("point-mass"), 2
            )

    @pytest.mark.parametrize(
        "family, params",
        [
            ("gaussian", {"sd": 0.3}),
            ("laplace", {"scale": 2.0}),
            ("uniform", {"half_width": 1.0}),
        ],
    )
    @pytest.mark.parametrize("p", [1, 2, 5, 8])
    def test_subexponential_moments(self, family, params, p):
        assert uncoupled.subexponential_moment_check(
            make_noise(family, params), p
        )


class TestSinc:
    def test_normalizers(self):
        # the integrals of (sin u / u)^2 and ^4 over the half line
        assert uncoupled.sinc_normalizer(1) == pytest.approx(
            1 / (8 * math.e * math.pi / 2), rel=1e-6
        )
        assert uncoupled.sinc_normalizer(2) == pytest.approx(
            1 / (16 * math.e * math.pi / 3), rel=1e-6
        )

    def test_density(self):
        assert uncoupled.sinc_density(2, 0.0) == uncoupled.sinc_normalizer(2)
        values = uncoupled.sinc_density(2, np.array([-5.0, 5.0, 100.0]))
        assert values[0] == values[1]
        assert 0 <= values[2] < values[0]
        assert uncoupled.sinc_density(1, 8 * math.e * math.pi) == (
            pytest.approx(0, abs=1e-20)
        )

    def test_derivative_bound(self):
        assert uncoupled.sinc_derivative_bound(1, 0, 0.0) == pytest.approx(
            4.0
        )
        assert uncoupled.sinc_derivative_bound(
            2, 3, 10.0
        ) < uncoupled.sinc_derivative_bound(2, 3, 0.0)

    @pytest.mark.parametrize("m", [1, 2, 3])
    @pytest.mark.parametrize("n", [0, 1, 2, 4])
    @pytest.mark.parametrize("t", [-30.0, -1.0, 0.0, 2.5, 40.0])
    def test_derivative_check(self, m, n, t):
        assert uncoupled.sinc_derivative_check(m, n, t)

    @pytest.mark.parametrize("n", [0, 1, 3, 5])
    @pytest.mark.parametrize("t", [-20.0, 0.0, 0.5, 7.0])
    def test_base_derivative_check(self, n, t):
        assert uncoupled.sinc_base_derivative_check(n, t)

    @pytest.mark.parametrize("m, n", [(0, 1), (4, 1), (1, 6), (1, -1)])
    def test_invalid_orders(self, m, n):
        with pytest.raises(uncoupled.InvalidParameter):
            uncoupled.sinc_derivative_check(m, n, 0.0)


class TestMomentMatchedPair:
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_moments_agree(self, k):
        P, Q = uncoupled.moment_matched_pair(k, 2.0)
        assert P.size == k
        assert Q.size == 4096
        for mu in (P, Q):
            assert np.abs(mu.atoms).max() <= 2.0
            assert mu.weights.sum() == pytest.approx(1)
        for l in range(1, 2 * k):
            assert uncoupled.raw_moment(P, l) == pytest.approx(
                uncoupled.raw_moment(Q, l), abs=1e-8
            )

    def test_differ_at_next_moment(self):
        P, Q = uncoupled.moment_matched_pair(2, 1.0)
        assert uncoupled.delta_l(P, Q, 4) > 0.1

    def test_distance_shrinks(self):
        distances = [
            uncoupled.wasserstein_p(*uncoupled.moment_matched_pair(k, 1.0), 1)
            for k in (1, 2, 4, 8)
        ]
        assert np.all(np.diff(distances) < 0)

    @pytest.mark.parametrize("k, V", [(0, 1.0), (2, 0.0)])
    def test_invalid(self, k, V):
        with pytest.raises(uncoupled.InvalidParameter):
            uncoupled.moment_matched_pair(k, V)


class TestChi2TvBound:
    def test_holds(self):
        P, Q = uncoupled.moment_matched_pair(3, 1.0)
        result = uncoupled.chi2_tv_bound(P, Q, 10, 1.0, 3)
        assert result.holds
        assert 0 < result.tv_sq <= result.chi_sq
        assert result.chi_sq <= result.chi_sq_series * (1 + 1e-6)
        # (1 + 16.2)^10 - 1 exceeds the trivial bound
        assert result.tv_sq_bound == 1
        assert "True" in repr(result)

    def test_tensorized_bound(self):
        P, Q = uncoupled.moment_matched_pair(2, 0.5)
        single = uncoupled.chi2_tv_bound(P, Q, 1, 0.5, 2)
        bound = single.chi_sq_bound
        assert bound == pytest.approx(math.exp(0.625) * 0.25 / 2)
        assert single.tv_sq_bound == pytest.approx(bound)
        double = uncoupled.chi2_tv_bound(P, Q, 2, 0.5, 2)
        assert double.tv_sq_bound == pytest.approx((1 + bound) ** 2 - 1)

    def test_many_samples(self):
        P, Q = uncoupled.moment_matched_pair(4, 1.0)
        result = uncoupled.chi2_tv_bound(P, Q, 1000, 1.0, 4)
        assert result.holds
        assert result.tv_sq_bound == 1

    def test_short_range_still_bounds(self, mocker):
        P, Q = uncoupled.moment_matched_pair(2, 0.5)
        full = uncoupled.chi2_tv_bound(P, Q, 1, 0.5, 2)
        mocker.patch("uncoupled.moments.MIXTURE_MARGIN", 4.0)
        short = uncoupled.chi2_tv_bound(P, Q, 1, 0.5, 2)
        assert short.chi_sq >= full.chi_sq
        assert short.tv_sq >= full.tv_sq
        assert short.chi_sq <= full.chi_sq + 0.01

    def test_identical(self):
        P, _ = uncoupled.moment_matched_pair(2, 0.5)
        result = uncoupled.chi2_tv_bound(P, P, 1, 0.5, 2)
        assert result.chi_sq == pytest.approx(0, abs=1e-12)
        assert result.tv_sq == pytest.approx(0, abs=1e-12)

    def test_outside_support(self):
        P, Q = uncoupled.moment_matched_pair(2, 1.0)
        with pytest.raises(uncoupled.InvalidInput, match="supported"):
            uncoupled.chi2_tv_bound(P, Q, 1, 0.5, 2)

    def test_not_centered(self):
        P = GridMeasure([0.5], [1.0])
        with pytest.raises(uncoupled.InvalidInput, match="centered"):
            uncoupled.chi2_tv_bound(P, P, 1, 1.0, 2)

    def test_unmatched(self):
        P = GridMeasure([-1.0, 1.0], [0.5, 0.5])
        Q = GridMeasure([0.0], [1.0])
        with pytest.raises(uncoupled.InvalidInput, match="moment 2"):
            uncoupled.chi2_tv_bound(P, Q, 1, 1.0, 3)


class TestReport:
    def test_format(self):
        text = uncoupled.report(
            [Check("good", True, 1.5), Check("bad", False, np.nan)]
        )
        first, second = text.splitlines()
        assert first.split() == ["good", "pass", "1.5"]
        assert second.split() == ["bad", "FAIL", "nan"]
        assert first.index("pass") == 29

    def test_empty(self):
        assert uncoupled.report([]) == ""


def _check_fine(rng):
    return Check("fine", True, rng.uniform())


def _check_broken(rng):
    raise uncoupled.InvalidInput("no luck")


class TestDiagnostics:
    def test_errors_count_as_failures(self, mocker, caplog):
        mocker.patch.object(moments, "_CHECKS", [_check_fine, _check_broken])
        with caplog.at_level(logging.WARNING, logger="uncoupled.moments"):
            fine, broken = uncoupled.diagnostics(seed=3)
        assert fine.passed
        assert broken.name == "broken"
        assert not broken.passed
        assert math.isnan(broken.observed)
        assert "no luck" in caplog.text

    def test_is_reproducible(self, mocker):
        mocker.patch.object(moments, "_CHECKS", [_check_fine])
        assert list(uncoupled.diagnostics(7)) == list(uncoupled.diagnostics(7))

    def test_is_lazy(self, mocker):
        broken = mocker.Mock(side_effect=RuntimeError)
        mocker.patch.object(moments, "_CHECKS", [_check_fine, broken])
        checks = uncoupled.diagnostics()
        assert next(checks).name == "fine"
        broken.assert_not_called()

    @pytest.mark.slow
    def test_all_pass(self):
        checks = list(uncoupled.diagnostics())
        assert len(checks) == 13
        assert len({c.name for c in checks}) == 13
        assert [c.name for c in checks if not c.passed] == []
        assert len(uncoupled.report(checks).splitlines()) == 13

    @pytest.mark.slow
    def test_detects_unmatched_priors(self, mocker):
        matched = uncoupled.moment_matched_pair

        def perturbed(k, V):
            P, Q = matched(k, V)
            return P, GridMeasure(Q.atoms * 0.9, Q.weights)

        mocker.patch.object(moments, "moment_matched_pair", perturbed)
        failed = [c.name for c in uncoupled.diagnostics() if not c.passed]
        assert failed == ["moment_matched_priors", "chi_square"]
