"""Task models and the differentiable NMSE objective (torch, CPU).

Two architectures:

  * CsiNetPlus - convolutional autoencoder for angle-delay snapshot
    compression: two 7x7 conv blocks into a 32-dim code, mirrored decoder,
    six residual refinement blocks (7x7 / 5x5 / 3x3), and a per-sample L2
    normalization of the output for stability. Input/output (2, 16, 32),
    i.e. compression rate 32 on 1024 features.
  * GruPredictor - two-layer gated recurrent stack (input 4, hidden 64,
    inter-layer dropout 0.5), last-step BatchNorm1d and a 64->4 affine head.

Both train on the mean of per-sample linear NMSE ratios; reports convert to
dB after averaging. Training runs in float32; gradient verification casts
the same modules to float64.

Checkpoints are plain npz parameter containers with a JSON manifest, so an
artifact can be rebuilt from (architecture id, seed, config hash) alone.
"""

import json
from dataclasses import dataclass
from pathlib import Path as FilePath

import numpy as np
import torch
import torch.nn as nn

LEAKY_SLOPE = 0.3
CODE_DIM = 32


def l2_normalize(x: torch.Tensor) -> torch.Tensor:
    """Scale each sample of a batch to unit L2 norm."""
    flat = x.reshape(x.shape[0], -1)
    norm = flat.norm(dim=1).clamp_min(1e-30)
    return x / norm.view(-1, *([1] * (x.dim() - 1)))


def nmse_loss(pred: torch.Tensor, target: torch.Tensor, rescale_to_target_norm: bool = False) -> torch.Tensor:
    """Mean over the batch of ||t - p||^2 / ||t||^2.

    With `rescale_to_target_norm`, the prediction is rescaled per sample to
    the target's norm first (used with the autoencoder's unit-norm output;
    ZMUV targets all share norm sqrt(n), so no information is lost).
    """
    t = target.reshape(target.shape[0], -1)
    p = pred.reshape(pred.shape[0], -1)
    t_norm2 = (t**2).sum(dim=1).clamp_min(1e-30)
    if rescale_to_target_norm:
        p = p * t_norm2.sqrt().unsqueeze(1)
    ratio = ((t - p) ** 2).sum(dim=1) / t_norm2
    return ratio.mean()


class RefineBlock(nn.Module):
    """Residual refinement: 7x7 -> 5x5 -> 3x3 convs with an additive skip."""

    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(2, 8, 7, padding=3)
        self.bn1 = nn.BatchNorm2d(8)
        self.conv2 = nn.Conv2d(8, 16, 5, padding=2)
        self.bn2 = nn.BatchNorm2d(16)
        self.conv3 = nn.Conv2d(16, 2, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(2)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x):
        y = self.act(self.bn1(self.conv1(x)))
        y = self.act(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        return self.act(x + y)


class CsiNetPlus(nn.Module):
    """Autoencoder over (2, n_delay, n_t) snapshots with a 32-dim code."""

    def __init__(self, n_delay: int = 16, n_t: int = 32, code_dim: int = CODE_DIM):
        super().__init__()
        self.n_delay = n_delay
        self.n_t = n_t
        self.code_dim = code_dim
        n_feat = 2 * n_delay * n_t

        self.enc_conv1 = nn.Conv2d(2, 2, 7, padding=3)
        self.enc_bn1 = nn.BatchNorm2d(2)
        self.enc_conv2 = nn.Conv2d(2, 2, 7, padding=3)
        self.enc_bn2 = nn.BatchNorm2d(2)
        self.enc_fc = nn.Linear(n_feat, code_dim)

        self.dec_fc = nn.Linear(code_dim, n_feat)
        self.dec_conv = nn.Conv2d(2, 2, 7, padding=3)
        self.dec_bn = nn.BatchNorm2d(2)
        self.refine = nn.ModuleList(RefineBlock() for _ in range(6))
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def encode(self, x):
        y = self.act(self.enc_bn1(self.enc_conv1(x)))
        y = self.act(self.enc_bn2(self.enc_conv2(y)))
        return self.enc_fc(y.reshape(y.shape[0], -1))

    def decode(self, code):
        y = self.dec_fc(code).reshape(-1, 2, self.n_delay, self.n_t)
        y = torch.tanh(self.dec_bn(self.dec_conv(y)))
        for block in self.refine:
            y = block(y)
        return l2_normalize(y)

    def forward(self, x):
        return self.decode(self.encode(x))


class GruPredictor(nn.Module):
    """Single-step channel predictor over flattened I/Q feature windows."""

    def __init__(self, n_features: int = 4, hidden: int = 64, layers: int = 2, dropout: float = 0.5):
        super().__init__()
        self.gru = nn.GRU(
            n_features, hidden, num_layers=layers, batch_first=True,
            dropout=dropout if layers > 1 else 0.0,
        )
        self.bn = nn.BatchNorm1d(hidden)
        self.head = nn.Linear(hidden, n_features)
        self._orthogonal_recurrent_init()

    def _orthogonal_recurrent_init(self):
        # Recurrent kernels orthogonal per gate block; input kernels keep the
        # default fan-in-scaled uniform init.
        with torch.no_grad():
            for name, param in self.gru.named_parameters():
                if name.startswith("weight_hh"):
                    hidden = param.shape[1]
                    for g in range(param.shape[0] // hidden):
                        nn.init.orthogonal_(param[g * hidden:(g + 1) * hidden])

    def forward(self, x):
        out, _ = self.gru(x)
        return self.head(self.bn(out[:, -1]))


ARCHITECTURES = {
    "csinet_plus": CsiNetPlus,
    "gru_predictor": GruPredictor,
}


def build_model(arch: str, seed: int, **kwargs) -> nn.Module:
    """Construct a model with a fully seeded initialization."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    torch.manual_seed(seed)
    model = ARCHITECTURES[arch](**kwargs)
    model.arch_id = arch
    model.arch_kwargs = kwargs
    return model


# ---------------------------------------------------------------------------
# Parameter container surface

@dataclass
class ParamTensor:
    """Named view of one parameter tensor and its gradient."""

    name: str
    values: np.ndarray
    grad: np.ndarray


def param_tensors(model: nn.Module) -> list[ParamTensor]:
    out = []
    for name, p in model.named_parameters():
        grad = p.grad.detach().numpy() if p.grad is not None else np.zeros_like(p.detach().numpy())
        out.append(ParamTensor(name=name, values=p.detach().numpy(), grad=grad))
    return out


def forward_backward(model: nn.Module, batch, rescale_to_target_norm: bool = False):
    """One loss evaluation with gradients populated on every parameter.

    `batch` is an (inputs, targets) pair of arrays or tensors. Returns
    (loss value, {name: gradient array}). A non-finite loss aborts with a
    description of the offending batch.
    """
    inputs, targets = batch
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(np.asarray(inputs), dtype=dtype)
    t = torch.as_tensor(np.asarray(targets), dtype=dtype)
    model.zero_grad(set_to_none=False)
    loss = nmse_loss(model(x), t, rescale_to_target_norm)
    if not torch.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss {loss.item()!r} on batch of shape {tuple(x.shape)}"
        )
    loss.backward()
    grads = {n: p.grad.detach().clone().numpy() for n, p in model.named_parameters()}
    return float(loss.item()), grads


# ---------------------------------------------------------------------------
# Checkpoints: npz parameter container + JSON manifest

def save_checkpoint(model: nn.Module, path_prefix: str | FilePath, manifest: dict):
    """Write <prefix>.npz (parameters + buffers) and <prefix>.json."""
    prefix = FilePath(path_prefix)
    state = model.state_dict()
    arrays = {k: v.detach().numpy() for k, v in state.items()}
    np.savez(prefix.with_suffix(".npz"), **arrays)
    doc = dict(manifest)
    doc.setdefault("arch", getattr(model, "arch_id", model.__class__.__name__))
    doc.setdefault("arch_kwargs", getattr(model, "arch_kwargs", {}))
    with open(prefix.with_suffix(".json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True, default=str)


def load_checkpoint(path_prefix: str | FilePath) -> tuple[nn.Module, dict]:
    """Rebuild a model from its manifest and parameter container."""
    prefix = FilePath(path_prefix)
    with open(prefix.with_suffix(".json")) as f:
        manifest = json.load(f)
    model = build_model(manifest["arch"], seed=0, **manifest.get("arch_kwargs", {}))
    with np.load(prefix.with_suffix(".npz")) as data:
        state = {k: torch.as_tensor(data[k]) for k in data.files}
    model.load_state_dict(state)
    return model, manifest
