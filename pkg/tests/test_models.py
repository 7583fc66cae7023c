"""Metric trivials, architecture contracts, checkpoints, determinism."""

import numpy as np
import pytest
import torch

from chanlab.metrics import batch_nmse_db, nmse_db, nmse_linear, to_db
from chanlab.models import (
    CsiNetPlus,
    GruPredictor,
    build_model,
    forward_backward,
    l2_normalize,
    load_checkpoint,
    nmse_loss,
    param_tensors,
    save_checkpoint,
)


class TestNmse:
    def test_exact_match_clamps_at_minus_300(self):
        x = np.array([1.0, 2.0, 3.0])
        assert nmse_db(x, x) == pytest.approx(-300.0)

    def test_zero_estimate_is_zero_db(self):
        x = np.array([1.0 + 1.0j, -2.0])
        assert nmse_db(x, np.zeros(2)) == pytest.approx(0.0, abs=1e-12)

    def test_double_estimate_is_zero_db(self):
        x = np.array([3.0, -1.0, 0.5])
        assert nmse_db(x, 2 * x) == pytest.approx(0.0, abs=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            nmse_linear(np.zeros(3), np.ones(3))

    def test_batch_averages_linear_ratios(self):
        t = np.array([[1.0, 0.0], [1.0, 0.0]])
        e = np.array([[1.0, 0.0], [0.0, 0.0]])  # ratios 0 and 1
        assert batch_nmse_db(t, e) == pytest.approx(10 * np.log10(0.5))

    def test_torch_loss_matches_numpy_metric(self):
        rng = np.random.default_rng(0)
        t = rng.standard_normal((5, 8))
        p = rng.standard_normal((5, 8))
        loss = nmse_loss(torch.as_tensor(p), torch.as_tensor(t)).item()
        assert to_db(loss) == pytest.approx(batch_nmse_db(t, p), abs=1e-9)


class TestCsiNetPlus:
    def test_shapes_and_code_dim(self):
        m = build_model("csinet_plus", seed=0).double().eval()
        x = torch.randn(3, 2, 16, 32, dtype=torch.float64)
        code = m.encode(x)
        assert code.shape == (3, 32)
        y = m(x)
        assert y.shape == (3, 2, 16, 32)

    def test_output_unit_norm(self):
        m = build_model("csinet_plus", seed=1).double().eval()
        x = torch.randn(4, 2, 16, 32, dtype=torch.float64)
        y = m(x)
        norms = y.reshape(4, -1).norm(dim=1)
        assert torch.allclose(norms, torch.ones(4, dtype=torch.float64), atol=1e-9)

    def test_zmuv_targets_have_norm_sqrt_n(self):
        # ZMUV over 1024 entries -> ||target|| = 32 exactly, so rescaling the
        # unit-norm output by the target norm loses nothing.
        rng = np.random.default_rng(2)
        from chanlab.preprocess import zmuv
        x = rng.standard_normal((16, 32)) + 1j * rng.standard_normal((16, 32))
        t = zmuv(x).tensor
        assert np.linalg.norm(t) == pytest.approx(32.0, abs=1e-9)

    def test_train_eval_mode_mismatch_detectable(self):
        m = build_model("csinet_plus", seed=3).double()
        x = torch.randn(8, 2, 16, 32, dtype=torch.float64)
        m.train()
        with torch.no_grad():
            y_train = m(x)
        m.eval()
        with torch.no_grad():
            y_eval = m(x)
        assert not torch.allclose(y_train, y_eval)


class TestGruPredictor:
    def test_output_shape(self):
        m = build_model("gru_predictor", seed=0).eval()
        y = m(torch.randn(5, 20, 4))
        assert y.shape == (5, 4)

    def test_dropout_only_in_train_mode(self):
        m = build_model("gru_predictor", seed=1)
        x = torch.randn(6, 20, 4)
        m.train()
        torch.manual_seed(0)
        a = m(x)
        torch.manual_seed(1)
        b = m(x)
        assert not torch.allclose(a, b)  # different dropout masks
        m.eval()
        with torch.no_grad():
            c, d = m(x), m(x)
        assert torch.allclose(c, d)

    def test_zero_weight_head_gives_zero_db(self):
        m = build_model("gru_predictor", seed=2)
        with torch.no_grad():
            m.head.weight.zero_()
            m.head.bias.zero_()
        m.eval()
        x = torch.randn(4, 20, 4)
        t = torch.randn(4, 4)
        loss = nmse_loss(m(x), t)
        assert loss.item() == pytest.approx(1.0, abs=1e-12)  # 0 dB

    def test_recurrent_kernels_orthogonal(self):
        m = build_model("gru_predictor", seed=3)
        w = m.gru.weight_hh_l0
        h = w.shape[1]
        for g in range(3):
            block = w[g * h:(g + 1) * h].detach()
            np.testing.assert_allclose(block @ block.T, np.eye(h), atol=1e-5)


class TestParamSurface:
    def test_param_tensors_shapes_and_grads(self):
        m = build_model("gru_predictor", seed=0).double().eval()
        x = np.random.default_rng(0).standard_normal((4, 20, 4))
        t = np.random.default_rng(1).standard_normal((4, 4))
        loss, grads = forward_backward(m, (x, t))
        assert np.isfinite(loss)
        for pt in param_tensors(m):
            assert pt.grad.shape == pt.values.shape
            assert np.all(np.isfinite(pt.grad))
            assert pt.name in grads

    def test_nonfinite_loss_aborts(self):
        m = build_model("gru_predictor", seed=0).double().eval()
        x = np.full((2, 20, 4), np.nan)
        t = np.ones((2, 4))
        with pytest.raises(FloatingPointError, match="batch"):
            forward_backward(m, (x, t))

    def test_identical_step_identical_gradients(self):
        x = np.random.default_rng(2).standard_normal((4, 20, 4))
        t = np.random.default_rng(3).standard_normal((4, 4))
        runs = []
        for _ in range(2):
            m = build_model("gru_predictor", seed=7).double()
            m.train()
            torch.manual_seed(123)  # fixes dropout masks
            _, grads = forward_backward(m, (x, t))
            runs.append(grads)
        for name in runs[0]:
            np.testing.assert_array_equal(runs[0][name], runs[1][name])


class TestBuildAndCheckpoint:
    def test_seeded_build_is_deterministic(self):
        a = build_model("csinet_plus", seed=11)
        b = build_model("csinet_plus", seed=11)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_unknown_arch(self):
        with pytest.raises(ValueError):
            build_model("mlp", seed=0)

    def test_checkpoint_roundtrip(self, tmp_path):
        m = build_model("gru_predictor", seed=5).eval()
        prefix = tmp_path / "ckpt"
        save_checkpoint(m, prefix, {"seed": 5, "epoch": 3, "val_nmse_db": -12.5})
        m2, manifest = load_checkpoint(prefix)
        m2.eval()
        assert manifest["arch"] == "gru_predictor"
        assert manifest["epoch"] == 3
        x = torch.randn(3, 20, 4)
        with torch.no_grad():
            assert torch.allclose(m(x), m2(x.clone()))

    def test_l2_normalize_guards_zero(self):
        x = torch.zeros(2, 3)
        y = l2_normalize(x)
        assert torch.all(torch.isfinite(y))
