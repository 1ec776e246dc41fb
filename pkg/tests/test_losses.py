import math

import numpy as np
import pytest

from divlab.errors import (
    InvalidLossError,
    InvalidUtilityError,
    NegativeArgumentError,
)
from divlab.losses import (
    LossFn,
    UtilityFn,
    check_log_subadditive,
    check_oce_inequality,
    conjugate_eval,
    numeric_conjugate,
)


class TestLossConjugates:
    def test_exponential_at_one(self):
        # l(x) = e^x has l*(y) = y log y - y, so l*(1) = -1
        loss = LossFn.exponential(1.0)
        assert conjugate_eval(loss, 1.0) == pytest.approx(-1.0, abs=1e-12)

    def test_exponential_at_zero_is_neg_inf_of_loss(self):
        assert conjugate_eval(LossFn.exponential(1.0), 0.0) == 0.0
        assert conjugate_eval(LossFn.power_plus(2.0), 0.0) == 0.0

    def test_negative_argument_rejected(self):
        with pytest.raises(NegativeArgumentError):
            conjugate_eval(LossFn.exponential(1.0), -0.5)

    def test_power_plus_one(self):
        loss = LossFn.power_plus(1.0)
        assert conjugate_eval(loss, 0.5) == -0.5
        assert conjugate_eval(loss, 2.0) == math.inf

    @pytest.mark.parametrize("loss", [
        LossFn.exponential(1.0),
        LossFn.exponential(2.5),
        LossFn.power_plus(2.0),
        LossFn.power_plus(3.5),
    ])
    def test_closed_forms_match_numeric_oracle(self, loss):
        for y in [0.0, 0.3, 1.0, 2.0, 5.0]:
            exact = conjugate_eval(loss, y)
            brute = numeric_conjugate(loss, y)
            if math.isfinite(exact):
                assert exact == pytest.approx(brute, abs=1e-6)
            else:
                assert brute > 1e3

    @pytest.mark.parametrize("loss", [
        LossFn.exponential(1.0),
        LossFn.power_plus(2.0),
        LossFn.custom(np.linspace(-3, 3, 25), np.exp(np.linspace(-3, 3, 25))),
    ])
    def test_fenchel_young(self, loss):
        xs = np.linspace(-3, 3, 13)
        for y in [0.0, 0.25, 1.0, 3.0]:
            star = conjugate_eval(loss, y)
            if not math.isfinite(star):
                continue
            vals = np.asarray(loss(xs), dtype=float)
            assert np.all(xs * y <= vals + star + 1e-8)

    def test_array_matches_scalar(self):
        ys = np.array([0.0, 0.5, 1.0, 2.0, 7.0])
        for loss in [LossFn.exponential(1.3), LossFn.power_plus(2.0)]:
            arr = loss.conjugate_array(ys)
            for y, v in zip(ys, arr):
                assert v == pytest.approx(loss.conjugate(float(y)), abs=1e-12)

    def test_custom_table_conjugate_range(self):
        # tabulated e^x on [-2, 2]: slopes span roughly [e^-2, e^2]
        xs = np.linspace(-2, 2, 41)
        loss = LossFn.custom(xs, np.exp(xs))
        table = loss.conjugate_table()
        assert conjugate_eval(loss, 1.0) == pytest.approx(-1.0, abs=1e-3)
        assert conjugate_eval(loss, table.y_hi * 2) == math.inf


class TestLossValidation:
    def test_decreasing_table_rejected(self):
        with pytest.raises(InvalidLossError):
            LossFn.custom([0.0, 1.0, 2.0], [1.0, 0.5, 2.0])

    def test_concave_table_rejected(self):
        with pytest.raises(InvalidLossError):
            LossFn.custom([-1.0, 0.0, 1.0], [0.0, 1.0, 1.5])

    def test_wrong_normalization_rejected(self):
        with pytest.raises(InvalidLossError):
            LossFn.custom([-1.0, 0.0, 1.0], [1.0, 2.0, 4.0])

    def test_bad_eta(self):
        with pytest.raises(InvalidLossError):
            LossFn.exponential(0.0)

    def test_bad_power(self):
        with pytest.raises(InvalidLossError):
            LossFn.power_plus(0.5)

    def test_json_round_trip(self):
        for loss in [LossFn.exponential(2.0), LossFn.power_plus(3.0)]:
            again = LossFn.from_json(loss.as_json())
            assert again.kind == loss.kind


class TestUtilityConjugates:
    def test_exp_shift_normalization(self):
        # phi(x) = e^{x-1} has phi*(y) = y log y, so phi*(1) = 0
        assert conjugate_eval(UtilityFn.exp_shift(), 1.0) == 0.0

    def test_exp_shift_is_ylogy(self):
        phi = UtilityFn.exp_shift()
        for y in [0.5, 1.0, 2.0, 3.0]:
            assert conjugate_eval(phi, y) == pytest.approx(y * math.log(y), abs=1e-12)

    def test_identity_conjugate(self):
        phi = UtilityFn.identity()
        assert conjugate_eval(phi, 1.0) == 0.0
        assert conjugate_eval(phi, 2.0) == math.inf

    def test_hinge_power_two_is_squared_distance(self):
        phi = UtilityFn.hinge_power(2.0)
        for y in [0.0, 0.5, 1.0, 2.0, 4.0]:
            assert conjugate_eval(phi, y) == pytest.approx((y - 1.0) ** 2, abs=1e-12)

    @pytest.mark.parametrize("phi", [
        UtilityFn.exp_shift(),
        UtilityFn.hinge_power(2.0),
        UtilityFn.hinge_power(3.0),
    ])
    def test_closed_forms_match_numeric_oracle(self, phi):
        for y in [0.0, 0.5, 1.0, 2.0, 5.0]:
            exact = conjugate_eval(phi, y)
            brute = numeric_conjugate(phi, y)
            assert exact == pytest.approx(brute, abs=1e-6)

    def test_bad_normalization_rejected(self):
        # phi(x) = x^2 on a table has sup_x(x - phi(x)) = 1/4, not 0
        xs = np.linspace(-2, 2, 41)
        with pytest.raises(InvalidUtilityError):
            UtilityFn.custom(xs, xs**2)

    def test_custom_accepts_normalized_table(self):
        xs = np.linspace(-4.0, 4.0, 161)
        phi = UtilityFn.custom(xs, np.exp(xs - 1.0))
        assert abs(conjugate_eval(phi, 1.0)) <= 1e-9


class TestLogSubadditivity:
    def test_exponential_passes_with_zero_violation(self):
        grid = np.linspace(-3, 3, 25)
        report = check_log_subadditive(LossFn.exponential(1.0), grid)
        assert report.passes
        assert abs(report.worst_violation) <= 1e-10

    def test_power_plus_fails(self):
        # l(-1) = 0 forces l(y) <= l(y-1) * l(1)... with a zero factor
        grid = np.linspace(-3, 3, 25)
        report = check_log_subadditive(LossFn.power_plus(2.0), grid)
        assert not report.passes
        assert report.worst_violation > 1e-3

    def test_singleton_grid_is_trivially_fine(self):
        report = check_log_subadditive(LossFn.power_plus(2.0), [0.0])
        assert report.passes


class TestOceInequality:
    def test_ylogy_is_additive(self):
        grid = np.linspace(0.0, 4.0, 17)
        report = check_oce_inequality(UtilityFn.exp_shift(), grid)
        assert report.classification == "additive"

    def test_pair_with_one_is_equality(self):
        phi = UtilityFn.hinge_power(2.0)
        # y*phi*(1) + 1*phi*(y) = phi*(y) exactly, by phi*(1) = 0
        for y in [0.0, 0.5, 2.0]:
            lhs = y * phi.conjugate(1.0) + 1.0 * phi.conjugate(y)
            assert lhs == pytest.approx(phi.conjugate(y), abs=1e-12)

    def test_squared_distance_point_evaluation(self):
        phi = UtilityFn.hinge_power(2.0)
        x = y = 2.0
        lhs = y * phi.conjugate(x) + x * phi.conjugate(y)
        assert lhs == pytest.approx(4.0)
        assert phi.conjugate(x * y) == pytest.approx(9.0)

    def test_squared_distance_is_neither(self):
        # <= fails at (2, 0) and >= fails elsewhere, so the sweep lands on
        # "neither" over a grid containing 0
        grid = np.linspace(0.0, 4.0, 17)
        report = check_oce_inequality(UtilityFn.hinge_power(2.0), grid)
        assert report.classification == "neither"

    def test_negative_grid_rejected(self):
        with pytest.raises(NegativeArgumentError):
            check_oce_inequality(UtilityFn.exp_shift(), [-1.0, 0.0])
