import numpy as np
import pytest
import torch

from ldct_trainer.unet import ParamMapNet


def small_net(out_scale=1.0, seed=0):
    torch.manual_seed(seed)
    return ParamMapNet(depth=2, base_channels=4, out_scale=out_scale)


class TestConstruction:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(depth=0), dict(base_channels=0), dict(out_scale=0.0), dict(out_scale=-2.0)],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ParamMapNet(**kwargs)

    def test_channel_widths_double_per_level(self):
        net = ParamMapNet(depth=3, base_channels=8)
        widths = [enc.body[0].out_channels for enc in net.encoders]
        assert widths == [8, 16, 32]
        assert net.bottleneck.body[0].out_channels == 64

    def test_out_scale_multiplies_output(self):
        a = small_net(out_scale=1.0, seed=3)
        b = small_net(out_scale=1000.0, seed=3)
        x = torch.randn(2, 16, 16)
        with torch.no_grad():
            assert torch.equal(b(x), 1000.0 * a(x))


class TestForward:
    def test_output_shape(self):
        net = small_net()
        assert net(torch.randn(3, 16, 16)).shape == (3, 2, 16, 16)
        assert net(torch.randn(3, 1, 16, 16)).shape == (3, 2, 16, 16)

    def test_rejects_bad_rank_or_channels(self):
        net = small_net()
        with pytest.raises(ValueError):
            net(torch.randn(16, 16))
        with pytest.raises(ValueError):
            net(torch.randn(2, 3, 16, 16))

    def test_rejects_indivisible_size(self):
        with pytest.raises(ValueError):
            small_net()(torch.randn(1, 18, 18))
        net = ParamMapNet(depth=3, base_channels=4)
        with pytest.raises(ValueError):
            net(torch.randn(1, 20, 20))

    def test_nonnegative_for_any_input_and_weights(self):
        # softplus output head: nonnegative regardless of what the
        # convolutions produce, including freshly randomized weights and
        # extreme inputs (float32 softplus underflows to exactly zero for
        # very negative pre-activations, so the guarantee is >= 0)
        net = small_net()
        inputs = [
            torch.zeros(1, 16, 16),
            torch.full((1, 16, 16), -1e3),
            torch.full((1, 16, 16), 1e3),
            torch.randn(2, 16, 16),
        ]
        for round_ in range(3):
            if round_:
                with torch.no_grad():
                    for p in net.parameters():
                        p.copy_(3.0 * torch.randn_like(p))
            for x in inputs:
                out = net(x)
                assert torch.all(out >= 0)
                assert torch.all(torch.isfinite(out))

    def test_positive_at_initialization(self):
        # near-zero head output puts fresh maps around softplus(0), well
        # away from the underflow region
        net = small_net()
        for x in [torch.zeros(1, 16, 16), torch.randn(2, 16, 16)]:
            assert torch.all(net(x) > 0)

    def test_duplicated_inputs_get_duplicated_maps(self):
        net = small_net()
        net.eval()
        x = torch.randn(1, 16, 16)
        with torch.no_grad():
            out = net(torch.cat([x, x]))
        assert torch.equal(out[0], out[1])

    def test_eval_mode_is_deterministic(self):
        net = small_net()
        net.eval()
        x = torch.randn(2, 16, 16)
        with torch.no_grad():
            assert torch.equal(net(x), net(x))

    def test_init_output_sits_near_log2_times_scale(self):
        # near initialization the head output is small, so the map is close
        # to softplus(0) = log 2 scaled by out_scale
        net = small_net(out_scale=1000.0, seed=0)
        with torch.no_grad():
            out = net(torch.rand(2, 16, 16))
        assert 0.3 * 1000.0 < out.mean().item() < 1.5 * 1000.0

    def test_gradients_reach_every_parameter(self):
        net = small_net()
        out = net(torch.randn(1, 16, 16))
        out.sum().backward()
        for name, p in net.named_parameters():
            assert p.grad is not None, name
            assert np.isfinite(float(p.grad.abs().sum()))
