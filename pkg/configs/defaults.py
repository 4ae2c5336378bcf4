"""
Run Defaults
This module contains the default run configuration. Every key a user file
or a ``--set`` override may name appears here; anything else is rejected.
"""

import copy
from typing import Any, Dict


class RunDefaults:
    """Predefined defaults for every section of a run configuration."""

    SEED = 0
    DEVICE = "cpu"

    SCHEDULE = {
        "family": "linear",
        "num_steps": 1000,
        "beta_start": 1e-4,
        "beta_end": 0.02,
    }

    # Sized for 32x32 fields: depth 2 leaves an 8x8 latent, i.e. 64 tokens.
    BACKBONE = {
        "image_size": 32,
        "input_channels": 6,
        "output_channels": 3,
        "base_width": 64,
        "depth": 2,
        "attn_levels": None,
        "latent_kind": "dit",
        "latent_blocks": 8,
        "latent_heads": 4,
        "embed_dim": 256,
        "patch_size": 1,
        "time_embed_dim": 256,
        "mlp_ratio": 4.0,
        "norm_groups": 8,
    }

    TRAINING = {
        "iterations": 10000,
        "batch_size": 32,
        "learning_rate": 2e-4,
        "optimizer": "adam",
        "weight_decay": 0.0,
        "ema_decay": None,
        "checkpoint_every": 1000,
        "log_every": 100,
        "resume_from": None,
    }

    SAMPLER = {
        "kind": "ddim",
        "stride": 20,
        "sigma": "deterministic",
        "eta": 1.0,
    }

    DATA = {
        "root": None,
        "workers": 4,
    }

    EVALUATION = {
        "ensemble_size": 20,
        "subset": "Test",
        "case_ids": None,
        "shared_noise": False,
        "dump_fields": False,
        "use_ema": False,
    }

    SAMPLE = {
        "reynolds": 7.5e6,
        "alpha_deg": 20.0,
        "re_max": None,
        "mask_from": None,
        "radius": 0.25,
        "count": 20,
    }

    ABLATION = {
        "case_ids": [7],
        "variants": ["dit", "unet_mid", "none_skipless_dit", "ddpm_full"],
    }

    SYNTHETIC = {
        "grid": 16,
        "replicates": 20,
        "noise_scale": 0.05,
        "alpha_deg": 20.0,
        "case_ids": None,
        "radius": 0.25,
        "circulation": True,
    }

    @classmethod
    def tree(cls) -> Dict[str, Any]:
        """A fresh copy of the full default tree."""
        return copy.deepcopy({
            "seed": cls.SEED,
            "device": cls.DEVICE,
            "schedule": cls.SCHEDULE,
            "backbone": cls.BACKBONE,
            "training": cls.TRAINING,
            "sampler": cls.SAMPLER,
            "data": cls.DATA,
            "evaluation": cls.EVALUATION,
            "sample": cls.SAMPLE,
            "ablation": cls.ABLATION,
            "synthetic": cls.SYNTHETIC,
        })
