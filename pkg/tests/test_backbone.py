import numpy as np
import pytest
import torch

from models.config import DenoiserConfig, LatentKind
from models.denoiser import DenoiserBackbone, build_denoiser, count_parameters, predict_noise
from models.encoder_decoder import Decoder, Encoder
from models.latent import DiTLatent, UNetMidLatent, UViTLatent, build_latent
from models.layers import MultiHeadSelfAttention, ResidualBlock, TimestepEmbedder, unpatchify
from utils.errors import ConfigError, InferenceError, NumericalError

from conftest import tiny_config

KINDS = [kind.value for kind in LatentKind]


def _inputs(config: DenoiserConfig, batch: int = 2, seed: int = 0, dtype=torch.float32):
    generator = torch.Generator().manual_seed(seed)
    size = config.image_size
    x_t = torch.randn(batch, 3, size, size, generator=generator, dtype=dtype)
    condition = torch.randn(batch, 3, size, size, generator=generator, dtype=dtype)
    return x_t, condition


class TestDenoiserConfig:
    def test_reference_defaults(self):
        config = DenoiserConfig()
        assert config.latent_size == 8
        assert config.num_tokens == 64
        assert config.stage_channels() == [64, 128, 256]
        assert config.stage_resolutions() == [32, 16]

    def test_doubling_width_doubles_stages(self):
        narrow = DenoiserConfig(base_width=32).summary()["stage_channels"]
        wide = DenoiserConfig(base_width=64).summary()["stage_channels"]
        assert wide == [2 * c for c in narrow]

    @pytest.mark.parametrize("changes", [
        {"image_size": 9},
        {"patch_size": 3},
        {"embed_dim": 30, "latent_heads": 4},
        {"attn_levels": [7]},
        {"latent_kind": "resnet"},
        {"time_embed_dim": 15},
    ])
    def test_invalid_configs(self, changes):
        with pytest.raises(ConfigError):
            tiny_config(**changes)

    def test_dict_round_trip(self):
        config = tiny_config("uvit", attn_levels=[8])
        assert DenoiserConfig.from_dict(config.to_dict()) == config

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            DenoiserConfig.from_dict({"widht": 3})

    def test_with_kind(self):
        assert tiny_config().with_kind(LatentKind.UNET_MID).latent_kind == LatentKind.UNET_MID


class TestLayers:
    def test_attention_rows_sum_to_one(self):
        torch.manual_seed(0)
        attention = MultiHeadSelfAttention(16, 4)
        _, weights = attention(torch.randn(2, 10, 16), need_weights=True)
        assert weights.shape == (2, 4, 10, 10)
        torch.testing.assert_close(weights.sum(dim=-1), torch.ones(2, 4, 10), atol=1e-6, rtol=0)

    def test_residual_identity_when_branch_is_zero(self):
        block = ResidualBlock(8, emb_dim=4, groups=4)
        block.zero_init_()
        y = torch.randn(2, 8, 5, 5)
        assert torch.equal(block(y, torch.randn(2, 4)), y)

    def test_timestep_embedding_shape(self):
        embedder = TimestepEmbedder(12, 16)
        assert embedder(torch.tensor([1, 500, 1000])).shape == (3, 12)

    def test_unpatchify_layout(self):
        tokens = torch.arange(2 * 4 * 12, dtype=torch.float32).reshape(2, 4, 12)
        image = unpatchify(tokens, channels=3, patch_size=2, grid=2)
        assert image.shape == (2, 3, 4, 4)
        # token 1 is the top-right patch, channel 0 of its first pixel
        assert image[0, 0, 0, 2] == tokens[0, 1, 0]


class TestEncoderDecoder:
    def test_reference_shapes(self):
        config = DenoiserConfig(base_width=8, embed_dim=16, latent_blocks=1, latent_heads=2, time_embed_dim=16,
                                norm_groups=4)
        encoder = Encoder(config)
        x = torch.randn(1, 6, 32, 32)
        z, skips = encoder(x, torch.zeros(1, 16))
        assert z.shape == (1, 32, 8, 8)
        assert [s.shape[-1] for s in skips] == [32, 16]
        out = Decoder(config)(z, skips, torch.zeros(1, 16))
        assert out.shape == (1, 3, 32, 32)

    def test_indivisible_spatial_size(self):
        encoder = Encoder(tiny_config())
        with pytest.raises(ConfigError):
            encoder(torch.randn(1, 6, 7, 7), torch.zeros(1, 16))

    def test_missing_skips(self):
        config = tiny_config()
        decoder = Decoder(config)
        with pytest.raises(InferenceError):
            decoder(torch.randn(1, 16, 4, 4), [], torch.zeros(1, 16))

    def test_skipless_decoder_takes_no_skips(self):
        config = tiny_config("none_skipless_dit")
        out = Decoder(config)(torch.randn(1, 16, 4, 4), [], torch.zeros(1, 16))
        assert out.shape == (1, 3, 8, 8)


class TestLatent:
    @pytest.mark.parametrize("kind", KINDS)
    def test_identity_at_init(self, kind):
        model = build_denoiser(tiny_config(kind), seed=0)
        z = torch.randn(2, 16, 4, 4)
        cond = model.embed_condition(torch.randn(2, 3, 8, 8))
        t_embed = model.embed_timestep(torch.tensor([3, 700]), 2, "cpu")
        assert torch.equal(model.latent_transform(z, cond, t_embed), z)

    def test_builder_dispatch(self):
        assert isinstance(build_latent(tiny_config("dit")), DiTLatent)
        assert isinstance(build_latent(tiny_config("none_skipless_dit")), DiTLatent)
        assert isinstance(build_latent(tiny_config("uvit")), UViTLatent)
        assert isinstance(build_latent(tiny_config("unet_mid")), UNetMidLatent)

    @pytest.mark.parametrize("blocks", [2, 3, 4])
    def test_uvit_keeps_token_width(self, blocks):
        latent = UViTLatent(tiny_config("uvit", latent_blocks=blocks))
        tokens = torch.randn(2, 16, 16)
        c = torch.randn(2, 16)
        assert latent.blocks_forward(tokens, c).shape == tokens.shape
        assert (latent.mid_block is not None) == bool(blocks % 2)

    def test_token_count_mismatch(self):
        latent = DiTLatent(tiny_config())
        with pytest.raises(ConfigError):
            latent.tokens(torch.randn(1, 16, 2, 2))


class TestBackbone:
    @pytest.mark.parametrize("kind", KINDS)
    def test_shape_law(self, kind):
        model = build_denoiser(tiny_config(kind), seed=0)
        x_t, condition = _inputs(model.config)
        assert predict_noise(model, x_t, condition, torch.tensor([1, 20])).shape == x_t.shape

    def test_reference_output_shape(self):
        config = DenoiserConfig(base_width=8, embed_dim=16, latent_blocks=2, latent_heads=2, time_embed_dim=16,
                                norm_groups=4)
        model = DenoiserBackbone(config)
        x_t, condition = _inputs(config, batch=1)
        assert model(x_t, condition, 10).shape == (1, 3, 32, 32)

    def test_fresh_model_output_is_small(self):
        model = build_denoiser(tiny_config(), seed=0)
        x_t, condition = _inputs(model.config, batch=4)
        out = model(x_t, condition, torch.tensor([1, 10, 100, 1000]))
        assert torch.isfinite(out).all()
        assert out.abs().max().item() < 1.0

    def test_same_input_same_output(self):
        model = build_denoiser(tiny_config("uvit"), seed=0)
        x_t, condition = _inputs(model.config)
        t = torch.tensor([5, 50])
        assert torch.equal(model(x_t, condition, t), model(x_t, condition, t))

    @pytest.mark.parametrize("kind", KINDS)
    def test_conditioning_is_live(self, kind):
        model = build_denoiser(tiny_config(kind), seed=0)
        x_t, condition = _inputs(model.config)
        permuted = condition[:, [2, 0, 1]]
        delta = (model(x_t, condition, 10) - model(x_t, permuted, 10)).abs().max().item()
        assert delta > 0

    def test_uvit_has_more_parameters(self):
        dit = count_parameters(build_denoiser(tiny_config("dit")))
        uvit = count_parameters(build_denoiser(tiny_config("uvit")))
        assert uvit > dit

    def test_unet_mid_has_no_condition_embedder(self):
        model = build_denoiser(tiny_config("unet_mid"))
        assert model.cond_embedder is None
        assert model.embed_condition(torch.zeros(1, 3, 8, 8)) is None

    def test_seeded_builds_match(self):
        a = build_denoiser(tiny_config(), seed=3)
        b = build_denoiser(tiny_config(), seed=3)
        for (name, p), (_, q) in zip(a.state_dict().items(), b.state_dict().items()):
            assert torch.equal(p, q), name

    def test_shape_errors(self):
        model = build_denoiser(tiny_config())
        with pytest.raises(InferenceError):
            model(torch.zeros(1, 3, 8, 8), torch.zeros(1, 2, 8, 8), 1)
        with pytest.raises(InferenceError):
            model(torch.zeros(1, 3, 8, 8), torch.zeros(2, 3, 8, 8), 1)
        with pytest.raises(InferenceError):
            model(torch.zeros(1, 3, 16, 16), torch.zeros(1, 3, 16, 16), 1)
        with pytest.raises(InferenceError):
            model(torch.zeros(2, 3, 8, 8), torch.zeros(2, 3, 8, 8), torch.tensor([1, 2, 3]))

    def test_wrong_input_channels(self):
        with pytest.raises(ConfigError, match="backbone.input_channels") as info:
            DenoiserBackbone(tiny_config(input_channels=5))
        assert not isinstance(info.value, InferenceError)
        assert info.value.exit_code == 2

    def test_non_finite_activations_name_the_stage(self):
        model = build_denoiser(tiny_config())
        x_t, condition = _inputs(model.config, batch=1)
        x_t[0, 0, 0, 0] = float("nan")
        with pytest.raises(NumericalError) as info:
            model(x_t, condition, 1)
        assert info.value.snapshot["stage"] == "encoder"

    def test_describe(self):
        info = build_denoiser(tiny_config()).describe()
        assert info["latent_kind"] == "dit"
        assert info["num_tokens"] == 16
        assert info["parameters"] > 0


class TestGradientCheck:
    @pytest.mark.parametrize("kind", KINDS)
    def test_finite_differences(self, kind):
        model = build_denoiser(tiny_config(kind), seed=1).double()
        x_t, condition = _inputs(model.config, batch=2, seed=2, dtype=torch.float64)
        t = torch.tensor([3, 400])
        weights = torch.randn(x_t.shape, generator=torch.Generator().manual_seed(5), dtype=torch.float64)

        def loss():
            return (model(x_t, condition, t) * weights).sum()

        model.zero_grad()
        loss().backward()
        params = [p for p in model.parameters() if p.requires_grad]
        sizes = np.array([p.numel() for p in params])
        rng = np.random.default_rng(7)
        picks = rng.choice(sizes.sum(), size=200, replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])

        h = 1e-3
        agree = 0
        with torch.no_grad():
            for flat in picks:
                which = int(np.searchsorted(offsets, flat, side="right") - 1)
                index = int(flat - offsets[which])
                values = params[which].view(-1)
                original = values[index].item()
                values[index] = original + h
                plus = loss().item()
                values[index] = original - h
                minus = loss().item()
                values[index] = original
                numeric = (plus - minus) / (2 * h)
                analytic = params[which].grad.view(-1)[index].item()
                if abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric)) + 1e-6:
                    agree += 1
        assert agree >= 198
