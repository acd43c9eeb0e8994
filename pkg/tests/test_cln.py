"""Conditional layer normalization: algebra, invariances, gradients, ablations."""

import numpy as np
import pytest
import torch

from gradcheck import assert_matches_finite_differences
from punchline_tts.errors import ConfigError
from punchline_tts.model import AcousticModel, apply_ablation, desk_profile
from punchline_tts.model.cln import (
    ClnAdapter,
    conditional_layer_norm,
    normalize_features,
)

torch.manual_seed(0)


def make_adapter(cond_dim=6, width=10, seed=3) -> ClnAdapter:
    torch.manual_seed(seed)
    adapter = ClnAdapter(cond_dim, width, "encoder").double()
    # give the (zero-initialized) bias map some content for the algebra tests
    with torch.no_grad():
        adapter.bias_map.weight.normal_(std=0.1)
    return adapter


class TestAdapterAlgebra:
    def test_zero_condition_gives_zero_params(self):
        adapter = make_adapter()
        gamma, beta = adapter.params(torch.zeros(6, dtype=torch.float64))
        assert torch.all(gamma == 0) and torch.all(beta == 0)

    def test_homogeneity_exact(self):
        adapter = make_adapter()
        e = torch.randn(6, dtype=torch.float64)
        g1, b1 = adapter.params(e)
        g2, b2 = adapter.params(2 * e)
        assert torch.equal(g2, 2 * g1)
        assert torch.equal(b2, 2 * b1)

    def test_matches_hand_computed_matrix_product(self):
        adapter = ClnAdapter(2, 3, "encoder").double()
        w_gamma = torch.tensor([[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]], dtype=torch.float64)
        w_beta = torch.tensor([[0.0, 1.0], [2.0, -1.0], [1.0, 1.0]], dtype=torch.float64)
        with torch.no_grad():
            adapter.scale_map.weight.copy_(w_gamma)
            adapter.bias_map.weight.copy_(w_beta)
        e = torch.tensor([2.0, -1.0], dtype=torch.float64)
        gamma, beta = adapter.params(e)
        # explicit arithmetic, row by row
        assert gamma.tolist() == [1 * 2 + (-2) * (-1), 0.5 * 2 + 0 * (-1), 3 * 2 + 1 * (-1)]
        assert beta.tolist() == [0 * 2 + 1 * (-1), 2 * 2 + (-1) * (-1), 1 * 2 + 1 * (-1)]

    def test_dimension_mismatch_rejected(self):
        adapter = make_adapter(cond_dim=6)
        with pytest.raises(ConfigError, match="condition dim"):
            adapter.params(torch.zeros(5, dtype=torch.float64))

    def test_calibration_keeps_linearity_and_hits_one(self):
        adapter = make_adapter()
        probe = torch.randn(6, dtype=torch.float64)
        adapter.calibrate(probe)
        gamma, _ = adapter.params(probe)
        assert torch.allclose(gamma, torch.ones_like(gamma), atol=1e-10)
        # pure linearity survives the rank-one shift (power-of-two factor is
        # exact in floating point)
        e = torch.randn(6, dtype=torch.float64)
        g1, _ = adapter.params(e)
        g2, _ = adapter.params(4 * e)
        assert torch.equal(g2, 4 * g1)


class TestConditionalLayerNorm:
    def test_identity_conditioning_is_plain_layer_norm(self):
        x = torch.randn(4, 6, dtype=torch.float64)
        out = conditional_layer_norm(
            x, torch.ones(6, dtype=torch.float64), torch.zeros(6, dtype=torch.float64)
        )
        assert torch.allclose(out.mean(dim=-1), torch.zeros(4, dtype=torch.float64), atol=1e-6)
        assert torch.allclose(out.var(dim=-1, unbiased=False), torch.ones(4, dtype=torch.float64), atol=1e-5)
        assert torch.allclose(out, normalize_features(x), atol=1e-12)

    def test_constant_row_maps_to_zero(self):
        x = torch.full((1, 8), 3.7, dtype=torch.float64)
        out = conditional_layer_norm(
            x, torch.ones(8, dtype=torch.float64), torch.zeros(8, dtype=torch.float64)
        )
        assert torch.allclose(out, torch.zeros_like(out), atol=1e-6)

    def test_matches_numpy_oracle(self):
        """Independent per-row mean/std computation in numpy."""
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 6))
        gamma = rng.standard_normal(6)
        beta = rng.standard_normal(6)
        eps = 1e-5
        expected = np.empty_like(x)
        for i in range(4):
            mean = x[i].mean()
            var = x[i].var()
            expected[i] = gamma * ((x[i] - mean) / np.sqrt(var + eps)) + beta
        out = conditional_layer_norm(
            torch.from_numpy(x), torch.from_numpy(gamma), torch.from_numpy(beta)
        )
        assert np.allclose(out.numpy(), expected, atol=1e-12)

    def test_shift_invariance(self):
        x = torch.randn(3, 7, dtype=torch.float64)
        gamma = torch.randn(7, dtype=torch.float64)
        beta = torch.randn(7, dtype=torch.float64)
        shifted = conditional_layer_norm(x + 11.5, gamma, beta)
        assert torch.allclose(shifted, conditional_layer_norm(x, gamma, beta), atol=1e-5)

    def test_scale_invariance(self):
        # feature variance well above eps keeps the eps-induced drift tiny
        x = 2.0 * torch.randn(3, 7, dtype=torch.float64)
        gamma = torch.rand(7, dtype=torch.float64) * 2 - 1
        beta = torch.randn(7, dtype=torch.float64)
        scaled = conditional_layer_norm(4.0 * x, gamma, beta)
        assert torch.allclose(scaled, conditional_layer_norm(x, gamma, beta), atol=1e-5)

    def test_zero_width_rejected(self):
        with pytest.raises(ConfigError, match="zero-width"):
            normalize_features(torch.zeros(3, 0))

    def test_width_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="width"):
            conditional_layer_norm(torch.randn(2, 4), torch.ones(3), torch.zeros(3))


class TestGradients:
    def test_gradient_wrt_input_matches_finite_differences(self):
        torch.manual_seed(1)
        x = torch.randn(3, 5, dtype=torch.float64, requires_grad=True)
        gamma = torch.randn(5, dtype=torch.float64)
        beta = torch.randn(5, dtype=torch.float64)
        weights = torch.randn(3, 5, dtype=torch.float64)  # random scalarization

        def scalar():
            return (conditional_layer_norm(x, gamma, beta) * weights).sum()

        loss = scalar()
        (analytic,) = torch.autograd.grad(loss, x)
        assert_matches_finite_differences(scalar, x.data, analytic)

    def test_gradient_wrt_condition_matches_finite_differences(self):
        adapter = make_adapter()
        x = torch.randn(4, 10, dtype=torch.float64)
        e = torch.randn(6, dtype=torch.float64, requires_grad=True)
        weights = torch.randn(4, 10, dtype=torch.float64)

        def scalar():
            return (adapter(x, e) * weights).sum()

        (analytic,) = torch.autograd.grad(scalar(), e)
        assert_matches_finite_differences(scalar, e.data, analytic)

    def test_gradient_wrt_adapter_weights(self):
        adapter = make_adapter()
        x = torch.randn(4, 10, dtype=torch.float64)
        e = torch.randn(6, dtype=torch.float64)
        weights = torch.randn(4, 10, dtype=torch.float64)

        def scalar():
            return (adapter(x, e) * weights).sum()

        loss = scalar()
        (analytic,) = torch.autograd.grad(loss, adapter.scale_map.weight)
        assert_matches_finite_differences(scalar, adapter.scale_map.weight.data, analytic)


class TestAblationStructure:
    """Config toggles change the parameter set exactly at the toggled sites."""

    def _param_names(self, config):
        torch.manual_seed(0)
        return AcousticModel(config).parameter_names()

    def test_default_sites(self, symbol_table):
        config = desk_profile(symbol_count=len(symbol_table))
        names = self._param_names(config)
        assert any("duration_predictor" in n and "scale_map" in n for n in names)
        assert not any("pitch_predictor" in n and "scale_map" in n for n in names)
        assert not any("energy_predictor" in n and "scale_map" in n for n in names)

    def test_remove_duration_cln_drops_exactly_those_adapters(self, symbol_table):
        base = desk_profile(symbol_count=len(symbol_table))
        ablated = apply_ablation(base, "no_duration_cln")
        assert ablated.cln_sites == ("encoder", "decoder")
        removed = self._param_names(base) - self._param_names(ablated)
        assert removed == {
            n
            for n in self._param_names(base)
            if "duration_predictor" in n and ("scale_map" in n or "bias_map" in n)
        }
        assert all("duration_predictor" in n for n in removed)
        assert len(removed) == 4  # two norm sites x (scale, bias)

    def test_add_pitch_energy_cln_adds_exactly_those_adapters(self, symbol_table):
        base = desk_profile(symbol_count=len(symbol_table))
        extended = apply_ablation(base, "pitch_energy_cln")
        added = self._param_names(extended) - self._param_names(base)
        assert added and all(
            ("pitch_predictor" in n or "energy_predictor" in n)
            and ("scale_map" in n or "bias_map" in n)
            for n in added
        )
        assert len(added) == 8  # two predictors x two norm sites x (scale, bias)

    def test_remove_special_tokens_shrinks_symbol_table(self, registry):
        from punchline_tts.frontend import FillerRegistry, build_symbol_table, mandarin_inventory

        full = build_symbol_table(mandarin_inventory(), registry)
        bare = build_symbol_table(mandarin_inventory(), FillerRegistry.empty())
        assert len(full) - len(bare) == len(registry)
        config = apply_ablation(desk_profile(), "no_special_tokens")
        assert config.use_special_tokens is False

    def test_duration_predictor_invariant_to_condition_when_unconditioned(self, symbol_table):
        config = apply_ablation(
            desk_profile(symbol_count=len(symbol_table), dtype="float64"),
            "no_duration_cln",
        )
        torch.manual_seed(2)
        model = AcousticModel(config).eval()
        hidden = torch.randn(5, config.hidden_width, dtype=torch.float64)
        e1 = torch.randn(config.prosody.dim, dtype=torch.float64)
        e2 = torch.randn(config.prosody.dim, dtype=torch.float64)
        with torch.no_grad():
            d1 = model.predict_duration(hidden, e1)
            d2 = model.predict_duration(hidden, e2)
        assert torch.equal(d1, d2)

    def test_duration_predictor_responds_to_condition_by_default(self, symbol_table):
        config = desk_profile(symbol_count=len(symbol_table), dtype="float64")
        torch.manual_seed(2)
        model = AcousticModel(config).eval()
        hidden = torch.randn(5, config.hidden_width, dtype=torch.float64)
        e1 = torch.randn(config.prosody.dim, dtype=torch.float64)
        e2 = torch.randn(config.prosody.dim, dtype=torch.float64)
        with torch.no_grad():
            d1 = model.predict_duration(hidden, e1)
            d2 = model.predict_duration(hidden, e2)
        assert float((d1 - d2).abs().max()) > 0
