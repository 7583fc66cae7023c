"""Central-finite-difference verification of every differentiable layer.

The oracle is independent of autograd: it re-evaluates the scalar objective
f = <w, layer(x)> at parameter/input coordinates displaced by +-eps and
compares (f+ - f-) / (2 eps) against the backward-pass gradient. All checks
run in float64 with eps = 1e-5 and require relative error <= 1e-4 per
tensor. Layers with batch statistics or random masks are handled by keeping
the forward pure: batch-norm runs in train mode (batch stats are a pure
function of the input), dropout is re-seeded identically before every
evaluation so its mask is fixed.
"""

import numpy as np
import pytest
import torch
import torch.nn as nn

from chanlab.models import CsiNetPlus, GruPredictor, build_model, l2_normalize, nmse_loss

EPS = 1e-5
TOL = 1e-4
N_CONFIGS = 20


def _fd_check(make_forward, params, tol=TOL, eps=EPS):
    """Compare autograd gradients of f() against central differences.

    make_forward() must be a pure function of `params` (list of tensors with
    requires_grad). Returns the worst relative error across tensors.
    """
    f = make_forward()
    for p in params:
        if p.grad is not None:
            p.grad = None
    f.backward()
    worst = 0.0
    for p in params:
        grad = p.grad.detach().clone()
        fd = torch.zeros_like(grad)
        flat = p.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = make_forward().item()
            flat[i] = orig - eps
            f_minus = make_forward().item()
            flat[i] = orig
            fd_flat[i] = (f_plus - f_minus) / (2 * eps)
        denom = max(grad.norm().item(), 1e-12)
        rel = (fd - grad).norm().item() / denom
        worst = max(worst, rel)
        assert rel <= tol, f"relative FD error {rel:.3e} on tensor of shape {tuple(p.shape)}"
    return worst


def _projection(shape, seed):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float64)


def _layer_case(module, x, seed, pre_forward=None):
    """Build the closure f = <w, module(x)> over (params, input)."""
    x = x.clone().requires_grad_(True)
    w = None

    def forward():
        nonlocal w
        if pre_forward is not None:
            pre_forward()
        y = module(x)
        if w is None:
            w = _projection(y.shape, seed)
        return (w * y).sum()

    params = [p for p in module.parameters()] + [x]
    return forward, params


def _run_configs(make_case, n=N_CONFIGS):
    for cfg in range(n):
        forward, params = make_case(cfg)
        _fd_check(forward, params)


@pytest.mark.parametrize("ksize", [7, 5, 3])
def test_conv2d_gradients(ksize):
    def make_case(cfg):
        g = torch.Generator().manual_seed(1000 + ksize * 100 + cfg)
        c_in = int(torch.randint(1, 3, (1,), generator=g))
        c_out = int(torch.randint(1, 3, (1,), generator=g))
        h = int(torch.randint(ksize, ksize + 3, (1,), generator=g))
        wdt = int(torch.randint(ksize, ksize + 3, (1,), generator=g))
        torch.manual_seed(2000 + ksize * 100 + cfg)
        conv = nn.Conv2d(c_in, c_out, ksize, padding=ksize // 2).double()
        x = torch.randn(2, c_in, h, wdt, generator=g, dtype=torch.float64)
        return _layer_case(conv, x, seed=cfg)

    _run_configs(make_case)


def test_dense_gradients():
    def make_case(cfg):
        g = torch.Generator().manual_seed(3000 + cfg)
        n_in = int(torch.randint(2, 12, (1,), generator=g))
        n_out = int(torch.randint(1, 8, (1,), generator=g))
        torch.manual_seed(3100 + cfg)
        fc = nn.Linear(n_in, n_out).double()
        x = torch.randn(3, n_in, generator=g, dtype=torch.float64)
        return _layer_case(fc, x, seed=cfg)

    _run_configs(make_case)


def test_batchnorm2d_gradients():
    def make_case(cfg):
        g = torch.Generator().manual_seed(4000 + cfg)
        c = int(torch.randint(1, 4, (1,), generator=g))
        torch.manual_seed(4100 + cfg)
        bn = nn.BatchNorm2d(c).double().train()
        with torch.no_grad():
            bn.weight.mul_(0.5).add_(0.8)
            bn.bias.add_(0.1)
        x = torch.randn(3, c, 4, 5, generator=g, dtype=torch.float64)
        return _layer_case(bn, x, seed=cfg)

    _run_configs(make_case)


def test_batchnorm1d_gradients():
    def make_case(cfg):
        g = torch.Generator().manual_seed(5000 + cfg)
        c = int(torch.randint(2, 8, (1,), generator=g))
        torch.manual_seed(5100 + cfg)
        bn = nn.BatchNorm1d(c).double().train()
        x = torch.randn(4, c, generator=g, dtype=torch.float64)
        return _layer_case(bn, x, seed=cfg)

    _run_configs(make_case)


def test_gru_cell_gradients():
    def make_case(cfg):
        g = torch.Generator().manual_seed(6000 + cfg)
        n_in = int(torch.randint(2, 5, (1,), generator=g))
        hidden = int(torch.randint(2, 5, (1,), generator=g))
        t_len = int(torch.randint(2, 4, (1,), generator=g))
        torch.manual_seed(6100 + cfg)
        gru = nn.GRU(n_in, hidden, num_layers=1, batch_first=True).double()

        class LastStep(nn.Module):
            def __init__(self, core):
                super().__init__()
                self.core = core

            def forward(self, x):
                out, _ = self.core(x)
                return out

        x = torch.randn(2, t_len, n_in, generator=g, dtype=torch.float64)
        return _layer_case(LastStep(gru), x, seed=cfg)

    _run_configs(make_case)


def test_leaky_relu_gradients():
    act = nn.LeakyReLU(0.3)

    def make_case(cfg):
        g = torch.Generator().manual_seed(7000 + cfg)
        x = torch.randn(3, 6, generator=g, dtype=torch.float64)
        # keep samples away from the kink so central differences are valid
        x = torch.where(x.abs() < 1e-2, x + 0.5, x)
        return _layer_case(act, x, seed=cfg)

    _run_configs(make_case)


def test_tanh_gradients():
    def make_case(cfg):
        g = torch.Generator().manual_seed(8000 + cfg)
        x = torch.randn(3, 5, generator=g, dtype=torch.float64)
        return _layer_case(nn.Tanh(), x, seed=cfg)

    _run_configs(make_case)


def test_l2_normalization_gradients():
    class Norm(nn.Module):
        def forward(self, x):
            return l2_normalize(x)

    def make_case(cfg):
        g = torch.Generator().manual_seed(9000 + cfg)
        x = torch.randn(3, 7, generator=g, dtype=torch.float64) + 0.2
        return _layer_case(Norm(), x, seed=cfg)

    _run_configs(make_case)


def test_dropout_fixed_mask_gradients():
    def make_case(cfg):
        drop = nn.Dropout(0.5).train()

        def reseed():
            torch.manual_seed(9900 + cfg)  # same mask at every evaluation

        g = torch.Generator().manual_seed(10_000 + cfg)
        x = torch.randn(3, 8, generator=g, dtype=torch.float64)
        return _layer_case(drop, x, seed=cfg, pre_forward=reseed)

    _run_configs(make_case)


# ---------------------------------------------------------------------------
# Whole-model spot checks on 4-sample batches (sampled coordinates).

def _model_fd_spot_check(model, x, t, rescale, eps=EPS, tol=TOL):
    """Directional central differences per parameter tensor.

    A random unit direction per tensor aggregates the whole gradient, so the
    check is well-posed even when isolated activations sit near a LeakyReLU
    kink (where single-coordinate differences are undefined).
    """
    model = model.double()
    model.train()

    def forward():
        torch.manual_seed(31337)  # freeze dropout masks
        return nmse_loss(model(xt), tt, rescale)

    xt = torch.as_tensor(x, dtype=torch.float64)
    tt = torch.as_tensor(t, dtype=torch.float64)
    for p in model.parameters():
        p.grad = None
    forward().backward()

    g = torch.Generator().manual_seed(0)
    for name, p in model.named_parameters():
        grad = p.grad.detach().reshape(-1)
        v = torch.randn(grad.numel(), generator=g, dtype=torch.float64)
        v = v / v.norm()
        flat = p.data.reshape(-1)
        orig = flat.clone()
        flat.add_(eps * v)
        f_plus = forward().item()
        flat.copy_(orig).add_(-eps * v)
        f_minus = forward().item()
        flat.copy_(orig)
        fd = (f_plus - f_minus) / (2 * eps)
        an = float(grad @ v)
        # mixed tolerance: parameters whose true gradient is structurally zero
        # (e.g. conv bias ahead of batch norm) sit at the FD noise floor
        assert abs(fd - an) <= 1e-9 + tol * abs(an), (
            f"{name}: directional fd={fd:.6e} autograd={an:.6e}"
        )


def test_full_compression_model_gradients():
    # reduced-width instance of the same architecture (runtime)
    torch.manual_seed(1)
    model = CsiNetPlus(n_delay=6, n_t=8)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 2, 6, 8))
    _model_fd_spot_check(model, x, x, rescale=True)


def test_full_prediction_model_gradients():
    torch.manual_seed(2)
    model = GruPredictor(n_features=4, hidden=8, layers=2, dropout=0.5)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 6, 4))
    t = rng.standard_normal((4, 4))
    _model_fd_spot_check(model, x, t, rescale=False)
