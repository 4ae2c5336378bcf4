# Diffusion Package
from .schedules import NoiseSchedule, alpha_cum_at, make_linear_schedule, make_schedule
from .forward_process import NoisedPair, noise_generator, predict_x0_from_eps, q_sample, q_step
from .samplers import (
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
from .sampler_manager import SamplerManager, generate
