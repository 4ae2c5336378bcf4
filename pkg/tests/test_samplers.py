import math

import numpy as np
import pytest
import torch

from diffusion.forward_process import noise_generator
from diffusion.samplers import (
    SamplerKind,
    SamplerPlan,
    SigmaMode,
    SigmaRule,
    ddim_moments,
    ddim_sigma,
    ddim_step,
    ddpm_ancestral_step,
    ddpm_posterior_moments,
    posterior_sigma,
    strided_subset,
)
from diffusion.schedules import make_linear_schedule
from utils.errors import PlanError


class TestStridedSubset:
    def test_reference_stride(self):
        steps = strided_subset(1000, 100)
        assert steps == tuple(range(1, 1000, 100))
        assert len(steps) == 10
        assert steps[-1] == 901

    def test_unit_stride_is_full_sequence(self):
        assert strided_subset(10, 1) == tuple(range(1, 11))

    def test_last_step_can_hit_horizon(self):
        assert strided_subset(7, 3) == (1, 4, 7)

    def test_random_law(self, rng):
        for _ in range(200):
            horizon = int(rng.integers(1, 2000))
            stride = int(rng.integers(1, horizon + 1))
            steps = strided_subset(horizon, stride)
            assert steps[0] == 1
            assert all(b - a == stride for a, b in zip(steps, steps[1:]))
            assert steps[-1] <= horizon < steps[-1] + stride
            assert len(steps) == math.ceil(horizon / stride)

    @pytest.mark.parametrize("stride", [0, -3, 11])
    def test_invalid_stride(self, stride):
        with pytest.raises(PlanError):
            strided_subset(10, stride)


class TestSamplerPlan:
    def test_ddpm_full_plan(self):
        plan = SamplerPlan.ddpm_full(5)
        assert plan.kind == SamplerKind.DDPM_FULL
        assert plan.timesteps == (1, 2, 3, 4, 5)
        assert plan.sigma_rule.mode == SigmaMode.DDPM_EQUIVALENT

    def test_full_plan_requires_every_step(self):
        with pytest.raises(PlanError):
            SamplerPlan(SamplerKind.DDPM_FULL, (1, 3, 5), SigmaRule.ddpm_equivalent())

    def test_full_plan_requires_ddpm_sigma(self):
        with pytest.raises(PlanError):
            SamplerPlan(SamplerKind.DDPM_FULL, (1, 2, 3), SigmaRule.deterministic())

    def test_timesteps_must_increase(self):
        with pytest.raises(PlanError):
            SamplerPlan(SamplerKind.DDIM, (1, 5, 5), SigmaRule.deterministic())
        with pytest.raises(PlanError):
            SamplerPlan(SamplerKind.DDIM, (0, 5), SigmaRule.deterministic())

    def test_pairs_close_at_zero(self):
        plan = SamplerPlan.ddim(7, 3)
        assert plan.pairs() == [(7, 4), (4, 1), (1, 0)]

    def test_validate_against_horizon(self):
        plan = SamplerPlan.ddim(100, 10)
        with pytest.raises(PlanError):
            plan.validate(make_linear_schedule(50, 1e-4, 0.02))

    def test_negative_eta_rejected(self):
        with pytest.raises(PlanError):
            SigmaRule.with_eta(-0.5)


class TestDDIMSigma:
    def test_deterministic_is_zero(self):
        assert ddim_sigma(0.9, 0.72, SigmaRule.deterministic()) == 0.0

    def test_ddpm_equivalent_value(self):
        # sqrt(0.1 / 0.28) * sqrt(1 - 0.72 / 0.9)
        expected = math.sqrt(0.1 / 0.28) * math.sqrt(0.2)
        assert ddim_sigma(0.9, 0.72, SigmaRule.ddpm_equivalent()) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.26726, abs=1e-5)

    def test_eta_one_matches_ddpm(self, rng):
        for _ in range(50):
            alpha_prev = float(rng.uniform(0.05, 0.99))
            alpha_cur = alpha_prev * float(rng.uniform(0.05, 0.99))
            assert ddim_sigma(alpha_prev, alpha_cur, SigmaRule.with_eta(1.0)) == pytest.approx(
                ddim_sigma(alpha_prev, alpha_cur, SigmaRule.ddpm_equivalent()), rel=1e-12
            )

    def test_eta_scales(self):
        full = ddim_sigma(0.8, 0.5, SigmaRule.ddpm_equivalent())
        assert ddim_sigma(0.8, 0.5, SigmaRule.with_eta(0.5)) == pytest.approx(0.5 * full)

    def test_stochastic_flag(self):
        assert not SigmaRule.deterministic().is_stochastic
        assert not SigmaRule.with_eta(0.0).is_stochastic
        assert SigmaRule.ddpm_equivalent().is_stochastic


class TestDDIMDDPMEquivalence:
    def test_consecutive_step_moments_agree(self, rng):
        x_t = torch.randn(3, 4, 4, dtype=torch.float64, generator=noise_generator(0))
        eps = torch.randn(3, 4, 4, dtype=torch.float64, generator=noise_generator(1))
        for _ in range(100):
            beta = float(rng.uniform(1e-5, 0.5))
            alpha_prev = float(rng.uniform(1e-3, 0.999))
            alpha_cur = alpha_prev * (1.0 - beta)
            sigma = ddim_sigma(alpha_prev, alpha_cur, SigmaRule.ddpm_equivalent())
            ddim_mean, ddim_scale = ddim_moments(x_t, eps, alpha_prev, alpha_cur, sigma)
            ddpm_mean, ddpm_scale = ddpm_posterior_moments(x_t, eps, beta, alpha_cur, alpha_prev)
            torch.testing.assert_close(ddim_mean, ddpm_mean, rtol=1e-6, atol=1e-9)
            assert ddim_scale == pytest.approx(ddpm_scale, rel=1e-6)

    def test_schedule_steps_agree(self, reference_schedule):
        for t in (2, 10, 500, 1000):
            sigma = ddim_sigma(reference_schedule.alpha_cum_at(t - 1), reference_schedule.alpha_cum_at(t),
                               SigmaRule.ddpm_equivalent())
            assert sigma == pytest.approx(posterior_sigma(reference_schedule, t), rel=1e-6)


class TestDDIMStep:
    def test_deterministic_step_is_repeatable(self, reference_schedule):
        x_t = torch.randn(3, 8, 8, generator=noise_generator(2))
        eps = torch.randn(3, 8, 8, generator=noise_generator(3))
        a = ddim_step(x_t, eps, 500, 480, 0.0, reference_schedule, noise_generator(4))
        b = ddim_step(x_t, eps, 500, 480, 0.0, reference_schedule, noise_generator(5))
        assert torch.equal(a, b)

    def test_true_noise_lands_on_closed_form(self, reference_schedule):
        x0 = torch.randn(3, 8, 8, dtype=torch.float64, generator=noise_generator(6))
        eps = torch.randn(3, 8, 8, dtype=torch.float64, generator=noise_generator(7))

        def noised(t):
            alpha = reference_schedule.alpha_cum_or_one(t)
            return math.sqrt(alpha) * x0 + math.sqrt(1 - alpha) * eps

        out = ddim_step(noised(600), eps, 600, 580, 0.0, reference_schedule)
        torch.testing.assert_close(out, noised(580), rtol=1e-5, atol=1e-5)
        final = ddim_step(noised(20), eps, 20, 0, 0.0, reference_schedule)
        torch.testing.assert_close(final, x0, rtol=1e-5, atol=1e-5)

    def test_sigma_too_large(self, reference_schedule):
        x = torch.zeros(3, 2, 2)
        with pytest.raises(PlanError):
            ddim_step(x, x, 5, 0, 0.1, reference_schedule)

    def test_order_enforced(self, reference_schedule):
        x = torch.zeros(3, 2, 2)
        with pytest.raises(PlanError):
            ddim_step(x, x, 5, 5, 0.0, reference_schedule)

    def test_stochastic_step_adds_sigma_noise(self, reference_schedule):
        x = torch.zeros(3, 4, 4, dtype=torch.float64)
        sigma = 0.05
        out = ddim_step(x, x, 300, 200, sigma, reference_schedule, noise_generator(8))
        noise = torch.randn(3, 4, 4, dtype=torch.float64, generator=noise_generator(8))
        torch.testing.assert_close(out, sigma * noise)


class TestDDPMAncestralStep:
    def test_final_step_is_deterministic(self, reference_schedule):
        x_t = torch.randn(3, 4, 4, generator=noise_generator(9))
        eps = torch.randn(3, 4, 4, generator=noise_generator(10))
        a = ddpm_ancestral_step(x_t, eps, 1, reference_schedule, noise_generator(11))
        b = ddpm_ancestral_step(x_t, eps, 1, reference_schedule, noise_generator(12))
        assert torch.equal(a, b)

    def test_zero_inputs_give_posterior_noise(self, reference_schedule):
        x = torch.zeros(3, 4, 4, dtype=torch.float64)
        out = ddpm_ancestral_step(x, x, 50, reference_schedule, noise_generator(13))
        noise = torch.randn(3, 4, 4, dtype=torch.float64, generator=noise_generator(13))
        torch.testing.assert_close(out, posterior_sigma(reference_schedule, 50) * noise)

    def test_posterior_mean(self, reference_schedule):
        x_t = torch.randn(3, 4, 4, dtype=torch.float64, generator=noise_generator(14))
        eps = torch.randn(3, 4, 4, dtype=torch.float64, generator=noise_generator(15))
        beta = reference_schedule.beta_at(1)
        alpha = reference_schedule.alpha_cum_at(1)
        expected = (x_t - beta / math.sqrt(1 - alpha) * eps) / math.sqrt(1 - beta)
        torch.testing.assert_close(ddpm_ancestral_step(x_t, eps, 1, reference_schedule), expected)

    def test_posterior_sigma_vanishes_at_first_step(self, reference_schedule):
        assert posterior_sigma(reference_schedule, 1) == 0.0
        assert posterior_sigma(reference_schedule, 2) > 0.0
