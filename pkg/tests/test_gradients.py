"""Central-difference gradient checks at 64-bit precision.

Every learnable parameter of the slice pipeline (backbone through attention
through separation) and of the video-level heads is compared against a
numeric gradient of the same loss; agreement is required to a relative
error below 1e-4.
"""

import numpy as np
import pytest
import torch

from oracles import finite_difference_param_grads, max_relative_gradient_error

from vidsev import (
    GatConfig,
    GraphRegressor,
    MlpHead,
    Conv1dHead,
    MtbConfig,
    NsConfig,
    SeverityCategory,
    ShortTermModel,
    SliceFeatureMatrix,
    build_seg,
    build_spg,
    compute_losses,
)

RTOL = 1e-4


def _analytic_grads(loss_fn, params):
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return [
        np.zeros(tuple(p.shape)) if g is None else g.detach().numpy().copy()
        for p, g in zip(params, grads)
    ]


def _toy_model(seed: int) -> ShortTermModel:
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    factors = [(1, 2), (1, 3), (1, 2, 3)][seed % 3]
    k = len(factors)
    return ShortTermModel(
        MtbConfig(
            spatial_scales=tuple([1.0, 0.5, 1.0][:k]),
            temporal_factors=factors,
            channel_widths=(2,) * k,
            output_dim=int(rng.integers(3, 5)),
            aligned_channels=2,
        ),
        NsConfig(encoder_widths=(6, 4), bottleneck=3, decoder_widths=(4, 6)),
        latent_channels=2,
        dtype=torch.float64,
    )


class TestShortTermGradients:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_full_loss_gradient(self, seed):
        model = _toy_model(seed)
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(2, 4))
        x = torch.as_tensor(rng.random((n, 1, 6, 6, 6)), dtype=torch.float64)
        labels = torch.as_tensor(rng.normal(size=n), dtype=torch.float64)
        cats = [SeverityCategory.MILD] * n

        def loss_fn():
            return compute_losses(model(x), labels, cats).l_short

        params = [p for p in model.parameters() if p.requires_grad]
        analytic = _analytic_grads(loss_fn, params)
        numeric = finite_difference_param_grads(loss_fn, params)
        err = max_relative_gradient_error(analytic, numeric)
        assert err < RTOL, f"seed {seed}: max relative gradient error {err:.3e}"


class TestHeadGradients:
    def _spg(self, seed, s=8, m=3, bins=16, top=5):
        rng = np.random.default_rng(seed)
        feats = SliceFeatureMatrix(rng.normal(size=(s, m)).astype(np.float32), parent_id="v")
        return build_spg(feats, bins, top)

    def test_graph_head_gradient(self):
        torch.manual_seed(10)
        head = GraphRegressor(5, GatConfig(hidden_dim=3, fc_widths=(4, 3, 1)))
        graph = self._spg(0)  # 3 vertices <= 6
        target = 0.7

        def loss_fn():
            return (head.score(graph) - target) ** 2

        params = list(head.parameters())
        analytic = _analytic_grads(loss_fn, params)
        numeric = finite_difference_param_grads(loss_fn, params)
        assert max_relative_gradient_error(analytic, numeric) < RTOL

    def test_typed_graph_head_gradient(self):
        torch.manual_seed(11)
        rng = np.random.default_rng(12)
        feats = SliceFeatureMatrix(rng.normal(size=(5, 3)).astype(np.float32), parent_id="v")
        graph = build_seg(feats, windows=(1, 2))
        head = GraphRegressor(3, GatConfig(hidden_dim=3, fc_widths=(4, 3, 1)), edge_types=(1, 2))

        def loss_fn():
            return (head.score(graph) - 0.3) ** 2

        params = list(head.parameters())
        analytic = _analytic_grads(loss_fn, params)
        numeric = finite_difference_param_grads(loss_fn, params)
        assert max_relative_gradient_error(analytic, numeric) < RTOL

    def test_mlp_head_gradient(self):
        torch.manual_seed(13)
        head = MlpHead(6, widths=(5, 4, 1))
        vec = np.random.default_rng(14).normal(size=6)

        def loss_fn():
            return (head.score(vec) - 0.2) ** 2

        params = list(head.parameters())
        analytic = _analytic_grads(loss_fn, params)
        numeric = finite_difference_param_grads(loss_fn, params)
        assert max_relative_gradient_error(analytic, numeric) < RTOL

    def test_conv_head_gradient(self):
        torch.manual_seed(15)
        head = Conv1dHead(channels=3, bins=6, conv_widths=(4, 3))
        heat = np.random.default_rng(16).normal(size=(3, 6))

        def loss_fn():
            return (head.score(heat) - 0.1) ** 2

        params = list(head.parameters())
        analytic = _analytic_grads(loss_fn, params)
        numeric = finite_difference_param_grads(loss_fn, params)
        assert max_relative_gradient_error(analytic, numeric) < RTOL
