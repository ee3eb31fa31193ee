"""
Unit tests for the theory-driven schedules and the constants they use.
"""

import math
import sys
from pathlib import Path

import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from models import TheoryConstants
from sopo.core.errors import EpsilonTooLarge
from sopo.core.schedules import hessian_batch_size, theory_schedule


@pytest.fixture
def unit_constants():
    return TheoryConstants(G_g=1.0, G_H=1.0, M=1.0, delta_J=1.0)


class TestDimensionReducedSchedule:
    """Schedules of the basic dimension-reduced variant."""

    def test_gradient_batch(self, unit_constants):
        """G_g = 1, ε = 0.01: |𝓜_g| = 144/ε² = 1,440,000."""
        schedule = theory_schedule(unit_constants, 0.01, 10, "dr")
        assert schedule.batch_grad == 1_440_000

    def test_radius(self, unit_constants):
        """M = 1, ε = 0.01: Δ = 2√ε/M = 0.2."""
        assert theory_schedule(unit_constants, 0.01, 10).delta == pytest.approx(0.2)

    def test_iterations(self, unit_constants):
        """M = 1, Δ_J = 1, ε = 0.01: T = 24,000."""
        assert theory_schedule(unit_constants, 0.01, 10).iterations == 24_000

    def test_hessian_batch(self, unit_constants):
        expected = math.ceil(22 * 24 ** 2 * math.log(10) / 0.01)
        assert theory_schedule(unit_constants, 0.01, 10).batch_hess == expected
        assert hessian_batch_size(unit_constants, 0.01, 10) == expected

    def test_hessian_batch_in_one_dimension(self, unit_constants):
        """log 1 = 0 still leaves one trajectory."""
        assert hessian_batch_size(unit_constants, 0.01, 1) == 1

    def test_total_samples(self, unit_constants):
        schedule = theory_schedule(unit_constants, 0.01, 10)
        assert schedule.total_samples == pytest.approx((schedule.batch_grad + schedule.batch_hess) * 24_000)
        assert schedule.q == 1

    def test_fdtr_shares_the_schedule(self, unit_constants):
        dr = theory_schedule(unit_constants, 0.04, 5, "dr")
        fdtr = theory_schedule(unit_constants, 0.04, 5, "fdtr")
        assert dr.model_dump() == fdtr.model_dump()


class TestVarianceReducedSchedule:
    """Schedules of the variance-reduced variant."""

    def test_epoch_length(self, unit_constants):
        """ε = 0.01: q = ⌈1/(8·0.1)⌉ = 2."""
        schedule = theory_schedule(unit_constants, 0.01, 10, "dvr")
        assert schedule.q == 2

    def test_batches(self, unit_constants):
        schedule = theory_schedule(unit_constants, 0.01, 10, "dvr")
        assert schedule.batch_0 == 2_880_000
        assert schedule.batch_havr == 288_000
        assert schedule.iterations == 24_000

    def test_epsilon_too_large(self):
        """ε = 0.04 with G_H = 0.2 violates ε ≤ G_H²/4 = 0.01."""
        constants = TheoryConstants(G_g=1.0, G_H=0.2, M=1.0, delta_J=1.0)
        with pytest.raises(EpsilonTooLarge):
            theory_schedule(constants, 0.04, 10, "dvr")

    def test_boundary_epsilon_allowed(self):
        constants = TheoryConstants(G_g=1.0, G_H=0.2, M=1.0, delta_J=1.0)
        assert theory_schedule(constants, 0.01, 10, "fdtr-vr").q == 2


class TestScheduleValidation:
    """Rejected inputs."""

    def test_unknown_variant(self, unit_constants):
        with pytest.raises(ValueError) as exc_info:
            theory_schedule(unit_constants, 0.01, 10, "adam")
        assert "Invalid schedule variant" in str(exc_info.value)

    def test_nonpositive_epsilon(self, unit_constants):
        with pytest.raises(ValueError):
            theory_schedule(unit_constants, 0.0, 10)

    def test_nonpositive_dimension(self, unit_constants):
        with pytest.raises(ValueError):
            theory_schedule(unit_constants, 0.01, 0)


class TestTheoryConstants:
    """Derived bounds."""

    def test_derived_gradient_bound(self):
        constants = TheoryConstants(R=1.0, G=math.sqrt(2), gamma=0.9)
        assert constants.G_g == pytest.approx(math.sqrt(2) / 0.1 ** 1.5)

    def test_derived_hessian_bound(self):
        constants = TheoryConstants(R=1.0, G=math.sqrt(2), L=0.5, gamma=0.9, H=10)
        expected = math.sqrt(10 ** 4 * 4 / 0.01 + 0.25 / 0.1 ** 4)
        assert constants.G_H == pytest.approx(expected)
        assert constants.G_H_split > 0

    def test_supplied_bounds_kept(self, unit_constants):
        assert unit_constants.G_g == 1.0
        assert unit_constants.G_H == 1.0

    def test_tightest_biased_bound_below_unbiased(self):
        """The μ-weighted bound at the optimal weight never exceeds the μ = 1 bound."""
        constants = TheoryConstants(R=1.0, G=math.sqrt(2), L=0.5, gamma=0.9, H=10)
        assert constants.tightest_biased_bound <= constants.biased_mse_bound(1.0)
        assert constants.C_tilde == pytest.approx(1 / 24)

    def test_invalid_gamma(self):
        with pytest.raises(ValidationError):
            TheoryConstants(gamma=1.0)
