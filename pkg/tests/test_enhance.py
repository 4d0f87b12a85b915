import numpy as np
import pytest
import torch

from oracles import losses_oracle, mlp_oracle, mutual_attention_oracle, nonlocal_oracle

from vidsev import (
    ConfigError,
    DomainError,
    LossWeights,
    MutualAttentionBlock,
    MutualAttentionStage,
    NoiseSeparator,
    NonLocalBlock,
    NsConfig,
    SeverityCategory,
    ShortTermOutputs,
    compute_losses,
    ns_forward,
)


def _block_params(block):
    return dict(
        beta_w=block.beta.weight.detach().numpy(),
        beta_b=block.beta.bias.detach().numpy(),
        omega_w=block.omega.weight.detach().numpy(),
        omega_b=block.omega.bias.detach().numpy(),
        gamma_w=float(block.gamma.weight.detach()),
        gamma_b=float(block.gamma.bias.detach()),
    )


def _set_identity(block):
    with torch.no_grad():
        block.beta.weight.fill_(1.0)
        block.beta.bias.zero_()
        block.omega.weight.fill_(1.0)
        block.omega.bias.zero_()
        block.gamma.weight.fill_(1.0)
        block.gamma.bias.zero_()


class TestMutualAttentionBlock:
    def test_zero_value_projection_is_identity(self):
        torch.manual_seed(0)
        block = MutualAttentionBlock(latent_channels=3)
        with torch.no_grad():
            block.gamma.weight.zero_()
            block.gamma.bias.zero_()
        f1 = torch.rand(2, 5, dtype=torch.float64)
        f2 = torch.rand(2, 5, dtype=torch.float64)
        block.double()
        torch.testing.assert_close(block(f1, f2), f1)

    def test_hand_computed_identity_projections(self):
        # identity projections, f1 = (1, 0), f2 = (0, 1): the similarity maps
        # are the outer products, their cross product vanishes, the softmax
        # spreads uniformly, so the output is f1 + (0.5, 0.5) = (1.5, 0.5)
        block = MutualAttentionBlock(latent_channels=1).double()
        _set_identity(block)
        out = block(torch.tensor([[1.0, 0.0]]).double(), torch.tensor([[0.0, 1.0]]).double())
        np.testing.assert_allclose(out[0].detach().numpy(), [1.5, 0.5], atol=1e-12)

    def test_matches_oracle_on_random_params(self):
        torch.manual_seed(1)
        for d in (2, 3, 8):
            block = MutualAttentionBlock(latent_channels=2).double()
            f1 = torch.randn(1, d, dtype=torch.float64)
            f2 = torch.randn(1, d, dtype=torch.float64)
            got = block(f1, f2)[0].detach().numpy()
            want = mutual_attention_oracle(f1[0].numpy(), f2[0].numpy(), **_block_params(block))
            np.testing.assert_allclose(got, want, atol=1e-10)
            assert got.shape == (d,)

    def test_dimension_mismatch(self):
        block = MutualAttentionBlock()
        with pytest.raises(DomainError):
            block(torch.zeros(1, 3), torch.zeros(1, 4))


class TestNonLocalBlock:
    def test_matches_oracle(self):
        torch.manual_seed(2)
        block = NonLocalBlock(latent_channels=3).double()
        f = torch.randn(1, 6, dtype=torch.float64)
        got = block(f)[0].detach().numpy()
        want = nonlocal_oracle(f[0].numpy(), **_block_params(block))
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_zero_value_projection_is_identity(self):
        torch.manual_seed(3)
        block = NonLocalBlock(latent_channels=2).double()
        with torch.no_grad():
            block.gamma.weight.zero_()
            block.gamma.bias.zero_()
        f = torch.randn(2, 4, dtype=torch.float64)
        torch.testing.assert_close(block(f), f)


class TestMutualAttentionStage:
    def test_requires_two_scales(self):
        with pytest.raises(ConfigError):
            MutualAttentionStage(num_scales=1, dim=4)

    def test_fused_width(self):
        torch.manual_seed(4)
        stage = MutualAttentionStage(num_scales=3, dim=64)
        fused, p = stage(torch.rand(2, 3, 64))
        assert fused.shape == (2, 192)
        assert p.shape == (2,)

    def test_zero_attention_is_concatenation(self):
        torch.manual_seed(5)
        stage = MutualAttentionStage(num_scales=3, dim=5).double()
        with torch.no_grad():
            for block in (*stage.self_blocks, *stage.pair_blocks):
                block.gamma.weight.zero_()
                block.gamma.bias.zero_()
        feats = torch.randn(2, 3, 5, dtype=torch.float64)
        fused, _ = stage(feats)
        torch.testing.assert_close(fused, feats.reshape(2, 15))

    def test_matches_straight_line_oracle(self):
        torch.manual_seed(6)
        k, d = 3, 4
        stage = MutualAttentionStage(num_scales=k, dim=d, latent_channels=2).double()
        feats = torch.randn(1, k, d, dtype=torch.float64)
        fused, p = stage(feats)

        raw = [feats[0, i].numpy() for i in range(k)]
        focused = [nonlocal_oracle(raw[i], **_block_params(stage.self_blocks[i])) for i in range(k)]
        enhanced = [
            mutual_attention_oracle(focused[i], focused[(i + 1) % k], **_block_params(stage.pair_blocks[i]))
            for i in range(k)
        ]
        want_fused = np.concatenate(enhanced)
        np.testing.assert_allclose(fused[0].detach().numpy(), want_fused, atol=1e-10)
        aux_w = stage.aux_head.weight.detach().numpy()[0]
        aux_b = float(stage.aux_head.bias.detach())
        np.testing.assert_allclose(float(p[0].detach()), aux_w @ want_fused + aux_b, atol=1e-10)


class TestNoiseSeparator:
    def test_toy_preset_shapes(self):
        torch.manual_seed(7)
        sep = NoiseSeparator(input_dim=128, config=NsConfig(encoder_widths=(64, 32, 16), bottleneck=8, decoder_widths=(16, 32)))
        pair = ns_forward(sep, np.random.default_rng(1).normal(size=128))
        assert pair.f_dep.shape == (8,)
        assert pair.f_non.shape == (8,)
        assert pair.f_dec.shape == (128,)
        assert isinstance(pair.p_ns, float)

    def test_zero_input_zero_bias(self):
        torch.manual_seed(8)
        sep = NoiseSeparator(input_dim=10, config=NsConfig(encoder_widths=(6,), bottleneck=4, decoder_widths=(6,)))
        with torch.no_grad():
            for name, p in sep.named_parameters():
                if "bias" in name:
                    p.zero_()
        pair = ns_forward(sep, np.zeros(10))
        np.testing.assert_allclose(pair.f_dep, 0.0, atol=1e-9)
        np.testing.assert_allclose(pair.f_non, 0.0, atol=1e-9)
        np.testing.assert_allclose(pair.f_dec, 0.0, atol=1e-9)
        assert pair.p_ns == 0.0

    def test_matches_mlp_oracle(self):
        torch.manual_seed(9)
        cfg = NsConfig(encoder_widths=(5, 4), bottleneck=3, decoder_widths=(4, 5))
        sep = NoiseSeparator(input_dim=6, config=cfg).double()
        x = np.random.default_rng(2).normal(size=6)
        pair = ns_forward(sep, x)

        def layers(seq):
            return [(m.weight.detach().numpy(), m.bias.detach().numpy()) for m in seq if isinstance(m, torch.nn.Linear)]

        dep = mlp_oracle(x, layers(sep.dep_encoder))
        non = mlp_oracle(x, layers(sep.non_encoder))
        dec = mlp_oracle(np.concatenate([dep, non]), layers(sep.decoder))
        reg = mlp_oracle(dep, [(sep.regressor.weight.detach().numpy(), sep.regressor.bias.detach().numpy())], relu_last=True)
        np.testing.assert_allclose(pair.f_dep, dep, atol=1e-10)
        np.testing.assert_allclose(pair.f_non, non, atol=1e-10)
        np.testing.assert_allclose(pair.f_dec, dec, atol=1e-10)
        assert pair.p_ns == pytest.approx(float(reg[0]), abs=1e-10)


def _outputs(p_ns, p_mta, f_dep, f_non, f_dec, fused):
    to = lambda v: torch.as_tensor(np.asarray(v, dtype=np.float64))
    return ShortTermOutputs(
        fused=to(fused), p_mta=to(p_mta), f_dep=to(f_dep), f_non=to(f_non), f_dec=to(f_dec), p_ns=to(p_ns)
    )


class TestComputeLosses:
    def test_all_zero_case(self):
        out = _outputs(
            p_ns=[1.0, 2.0],
            p_mta=[1.0, 2.0],
            f_dep=[[1.0, 0.0], [1.0, 0.0]],
            f_non=[[0.0, 1.0], [0.0, 1.0]],
            f_dec=[[0.5, 0.5], [0.5, 0.5]],
            fused=[[0.5, 0.5], [0.5, 0.5]],
        )
        lb = compute_losses(out, torch.tensor([1.0, 2.0]), [SeverityCategory.MILD] * 2)
        for value in lb.as_floats().values():
            assert value == pytest.approx(0.0, abs=1e-12)

    def test_similarity_hand_value(self):
        out = _outputs(
            p_ns=[0.0, 0.0],
            p_mta=[0.0, 0.0],
            f_dep=[[0.0, 0.0], [2.0, 2.0]],
            f_non=[[0.0, 0.0], [0.0, 0.0]],
            f_dec=[[0.0], [0.0]],
            fused=[[0.0], [0.0]],
        )
        lb = compute_losses(out, torch.tensor([0.0, 0.0]), [SeverityCategory.MILD] * 2)
        assert float(lb.l_sim) == pytest.approx(2.0, abs=1e-12)

    def test_orthogonality_hand_value(self):
        out = _outputs(
            p_ns=[0.0],
            p_mta=[0.0],
            f_dep=[[1.0, 1.0]],
            f_non=[[1.0, 1.0]],
            f_dec=[[0.0]],
            fused=[[0.0]],
        )
        lb = compute_losses(out, torch.tensor([0.0]), [SeverityCategory.SEVERE])
        assert float(lb.l_dsim) == pytest.approx(4.0, abs=1e-12)

    def _random_outputs(self, rng, n=4, d=3, j=5):
        return _outputs(
            p_ns=rng.normal(size=n),
            p_mta=rng.normal(size=n),
            f_dep=rng.normal(size=(n, d)),
            f_non=rng.normal(size=(n, d)),
            f_dec=rng.normal(size=(n, j)),
            fused=rng.normal(size=(n, j)),
        )

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(1, 6))
            out = self._random_outputs(rng, n=n)
            labels = rng.normal(size=n)
            w = tuple(rng.uniform(0.1, 2.0, size=4))
            lb = compute_losses(
                out, torch.as_tensor(labels), [SeverityCategory.MODERATE] * n, LossWeights(*w)
            )
            want = losses_oracle(
                out.p_ns.numpy(), out.p_mta.numpy(), out.f_dep.numpy(), out.f_non.numpy(),
                out.f_dec.numpy(), out.fused.numpy(), labels, w,
            )
            got = lb.as_floats()
            for key, value in want.items():
                assert got[key] == pytest.approx(value, abs=1e-9), key

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        out = self._random_outputs(rng, n=5)
        labels = rng.normal(size=5)
        base = compute_losses(out, torch.as_tensor(labels), [SeverityCategory.MILD] * 5).as_floats()
        perm = rng.permutation(5)
        shuffled = _outputs(
            out.p_ns.numpy()[perm], out.p_mta.numpy()[perm], out.f_dep.numpy()[perm],
            out.f_non.numpy()[perm], out.f_dec.numpy()[perm], out.fused.numpy()[perm],
        )
        moved = compute_losses(shuffled, torch.as_tensor(labels[perm]), [SeverityCategory.MILD] * 5).as_floats()
        for key in base:
            assert moved[key] == pytest.approx(base[key], abs=1e-10)

    def test_orthogonality_scales_quadratically(self):
        rng = np.random.default_rng(5)
        out = self._random_outputs(rng, n=3)
        labels = rng.normal(size=3)
        cats = [SeverityCategory.MILD] * 3
        base = float(compute_losses(out, torch.as_tensor(labels), cats).l_dsim)
        scaled_out = _outputs(
            out.p_ns.numpy(), out.p_mta.numpy(), 3.0 * out.f_dep.numpy(), out.f_non.numpy(),
            out.f_dec.numpy(), out.fused.numpy(),
        )
        scaled = float(compute_losses(scaled_out, torch.as_tensor(labels), cats).l_dsim)
        assert scaled == pytest.approx(9.0 * base, rel=1e-10)

    def test_mixed_categories_rejected(self):
        rng = np.random.default_rng(6)
        out = self._random_outputs(rng, n=2)
        with pytest.raises(DomainError):
            compute_losses(out, torch.zeros(2), [SeverityCategory.MILD, SeverityCategory.SEVERE])

    def test_empty_batch_rejected(self):
        out = _outputs(p_ns=[], p_mta=[], f_dep=np.zeros((0, 2)), f_non=np.zeros((0, 2)), f_dec=np.zeros((0, 2)), fused=np.zeros((0, 2)))
        with pytest.raises(DomainError):
            compute_losses(out, torch.zeros(0), [])

    def test_weighted_sum_identity(self):
        rng = np.random.default_rng(7)
        out = self._random_outputs(rng, n=3)
        labels = rng.normal(size=3)
        w = LossWeights(0.5, 1.5, 2.0, 0.25)
        lb = compute_losses(out, torch.as_tensor(labels), [SeverityCategory.MILD] * 3, w)
        f = lb.as_floats()
        expected = f["l_ns"] + 0.5 * f["l_mta"] + 1.5 * f["l_sim"] + 2.0 * f["l_dsim"] + 0.25 * f["l_rec"]
        assert f["l_short"] == pytest.approx(expected, rel=1e-12)
        assert all(v >= 0 for v in f.values())
