"""Encoders, projection head and linear classifier on top of torch autograd."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .dataset import IMAGE_SIZE, NUM_CLASSES

# fixed input standardization applied inside the encoders
INPUT_MEAN = 0.5
INPUT_STD = 0.25
ENCODER_DIMS = {"tiny_cnn": (64, 32), "resnet18_gray": (512, 128)}


class NumericalWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ModelConfig:
    encoder_kind: str = "tiny_cnn"
    rep_dim: int | None = None
    proj_dim: int | None = None
    num_classes: int = NUM_CLASSES
    parameter_seed: int = 0

    def __post_init__(self):
        if self.encoder_kind not in ENCODER_DIMS:
            raise ValueError(f"unknown encoder {self.encoder_kind!r}; choose from {sorted(ENCODER_DIMS)}")
        rep, proj = ENCODER_DIMS[self.encoder_kind]
        if self.rep_dim is None:
            object.__setattr__(self, "rep_dim", rep)
        if self.proj_dim is None:
            object.__setattr__(self, "proj_dim", proj)
        if self.rep_dim != rep:
            raise ValueError(f"{self.encoder_kind} produces representations of size {rep}")
        if not 0 < self.proj_dim < self.rep_dim:
            raise ValueError("projection dimension must be positive and smaller than the representation")

    def to_dict(self) -> dict:
        return {
            "encoder_kind": self.encoder_kind,
            "rep_dim": self.rep_dim,
            "proj_dim": self.proj_dim,
            "num_classes": self.num_classes,
            "parameter_seed": self.parameter_seed,
        }


class TinyCNN(nn.Module):
    """Three conv-SiLU-avgpool blocks (16/32/64 channels) and global average pooling.

    Every operation is smooth, so finite-difference gradient checks are exact
    up to truncation error rather than spoiled by activation kinks.
    """

    rep_dim = 64

    def __init__(self):
        super().__init__()
        layers = []
        c_in = 1
        for c_out in (16, 32, 64):
            layers += [nn.Conv2d(c_in, c_out, 3, padding=1), nn.BatchNorm2d(c_out), nn.SiLU(), nn.AvgPool2d(2)]
            c_in = c_out
        self.features = nn.Sequential(*layers)

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        return self.features((x - INPUT_MEAN) / INPUT_STD)

    def pool(self, a: torch.Tensor) -> torch.Tensor:
        return a.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.forward_features(x))


class ResNet18Gray(nn.Module):
    """ResNet-18 with a single input channel and a small-image stem.

    The stem is a stride-1 3x3 convolution without max pooling, as commonly
    used for 32-64 pixel inputs, so the last stage still has 6x6 maps.
    """

    rep_dim = 512

    def __init__(self):
        super().__init__()
        from torchvision.models import resnet18

        net = resnet18(weights=None)
        net.conv1 = nn.Conv2d(1, 64, kernel_size=3, stride=1, padding=1, bias=False)
        net.maxpool = nn.Identity()
        net.fc = nn.Identity()
        for m in net.modules():
            if isinstance(m, nn.BatchNorm2d):
                # running = 0.9 * running + 0.1 * batch
                m.momentum = 0.1
        self.net = net

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        n = self.net
        x = n.relu(n.bn1(n.conv1((x - INPUT_MEAN) / INPUT_STD)))
        return n.layer4(n.layer3(n.layer2(n.layer1(x))))

    def pool(self, a: torch.Tensor) -> torch.Tensor:
        return a.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.forward_features(x))


class ProjectionHead(nn.Module):
    """One SiLU hidden layer of the representation width, then L2 normalization.

    A row that is exactly zero before normalization is replaced by the first
    unit basis vector and a :class:`NumericalWarning` is emitted.
    """

    def __init__(self, rep_dim: int, proj_dim: int):
        super().__init__()
        self.rep_dim = rep_dim
        self.hidden = nn.Linear(rep_dim, rep_dim)
        self.out = nn.Linear(rep_dim, proj_dim)

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        y = self.out(F.silu(self.hidden(r)))
        norms = y.norm(dim=1, keepdim=True)
        zero = norms.squeeze(1) == 0
        if bool(zero.any()):
            warnings.warn("zero projection replaced by a unit basis vector", NumericalWarning, stacklevel=2)
            basis = torch.zeros_like(y)
            basis[:, 0] = 1.0
            y = torch.where(zero[:, None], basis, y)
            norms = torch.where(zero[:, None], torch.ones_like(norms), norms)
        return y / norms


class LinearClassifier(nn.Module):
    def __init__(self, rep_dim: int, num_classes: int = NUM_CLASSES):
        super().__init__()
        self.rep_dim = rep_dim
        self.fc = nn.Linear(rep_dim, num_classes)

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        return self.fc(r)


class ContrastiveModel(nn.Module):
    def __init__(self, encoder: nn.Module, head: ProjectionHead):
        super().__init__()
        self.encoder = encoder
        self.head = head

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.encoder(x))


class ClassifierModel(nn.Module):
    """Encoder followed by a linear classifier; used by the probe, the
    supervised baseline and Grad-CAM."""

    def __init__(self, encoder: nn.Module, classifier: LinearClassifier):
        super().__init__()
        self.encoder = encoder
        self.classifier = classifier

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder.forward_features(x)

    def logits_from_features(self, a: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.encoder.pool(a))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.encoder(x))


def init_parameters(module: nn.Module, seed: int) -> nn.Module:
    """Fan-in scaled uniform weights, zero biases, deterministic in ``seed``."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                fan_in = m.weight[0].numel()
                bound = math.sqrt(6.0 / fan_in)
                m.weight.copy_(torch.rand(m.weight.shape, generator=gen, dtype=torch.float64).mul(2 * bound).sub(bound))
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.reset_running_stats()
    return module


def build_encoder(config: ModelConfig, seed: int | None = None) -> nn.Module:
    enc = TinyCNN() if config.encoder_kind == "tiny_cnn" else ResNet18Gray()
    return init_parameters(enc, config.parameter_seed if seed is None else seed)


def build_head(config: ModelConfig, seed: int | None = None) -> ProjectionHead:
    s = config.parameter_seed if seed is None else seed
    return init_parameters(ProjectionHead(config.rep_dim, config.proj_dim), s + 1)


def build_classifier(config: ModelConfig, seed: int | None = None) -> LinearClassifier:
    s = config.parameter_seed if seed is None else seed
    return init_parameters(LinearClassifier(config.rep_dim, config.num_classes), s + 2)


def _as_image_batch(image) -> torch.Tensor:
    x = image if isinstance(image, torch.Tensor) else torch.tensor(np.asarray(image))
    if x.dim() == 2:
        x = x[None, None]
    elif x.dim() == 3:
        x = x[:, None] if x.shape[1:] == (IMAGE_SIZE, IMAGE_SIZE) else x[None]
    if x.dim() != 4 or tuple(x.shape[1:]) != (1, IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected 48x48 grayscale input, got shape {tuple(x.shape)}")
    return x


def encode(encoder: nn.Module, image) -> torch.Tensor:
    """Representations for a 48x48 image or an (N, 48, 48) / (N, 1, 48, 48) batch."""
    x = _as_image_batch(image)
    param = next(encoder.parameters())
    return encoder(x.to(param.dtype))


def _check_rep(module: nn.Module, r: torch.Tensor) -> torch.Tensor:
    r = torch.as_tensor(r)
    if r.dim() == 1:
        r = r[None]
    if r.shape[-1] != module.rep_dim:
        raise ValueError(f"representation has dimension {r.shape[-1]}, expected {module.rep_dim}")
    return r


def project(head: ProjectionHead, r) -> torch.Tensor:
    return head(_check_rep(head, r))


def classify(classifier: LinearClassifier, r) -> torch.Tensor:
    return classifier(_check_rep(classifier, r))


def _sample_entries(params: list[tuple[str, torch.Tensor]], fraction: float, min_count: int, rng) -> list[tuple[int, int]]:
    sizes = [p.numel() for _, p in params]
    total = sum(sizes)
    count = min(total, max(min_count, int(math.ceil(fraction * total))))
    flat = np.sort(rng.choice(total, size=count, replace=False))
    offsets = np.cumsum([0] + sizes)
    out = []
    for f in flat:
        k = int(np.searchsorted(offsets, f, side="right") - 1)
        out.append((k, int(f - offsets[k])))
    return out


def gradient_check(
    loss_fn: Callable[[], torch.Tensor],
    module: nn.Module,
    h: float = 1e-3,
    fraction: float = 0.01,
    min_count: int = 50,
    seed: int = 0,
    analytic: list[torch.Tensor] | None = None,
    entries: list[tuple[int, int]] | None = None,
) -> float:
    """Max relative error between autograd and central-difference gradients.

    ``loss_fn`` re-evaluates the scalar loss from the current parameters of
    ``module``. A random subsample of parameter entries is checked; the
    relative error uses the denominator ``max(|analytic|, |numeric|, 1e-8)``.
    Pass ``analytic`` to check externally supplied gradients.
    """
    params = [(n, p) for n, p in module.named_parameters() if p.requires_grad]
    if analytic is None:
        loss = loss_fn()
        if not torch.isfinite(loss):
            raise FloatingPointError("non-finite loss in gradient check")
        analytic = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)
        analytic = [torch.zeros_like(p) if g is None else g for g, (_, p) in zip(analytic, params)]
    if entries is None:
        entries = _sample_entries(params, fraction, min_count, np.random.default_rng(seed))
    worst = 0.0
    with torch.no_grad():
        for k, idx in entries:
            flat = params[k][1].view(-1)
            orig = flat[idx].item()
            flat[idx] = orig + h
            up = loss_fn().item()
            flat[idx] = orig - h
            down = loss_fn().item()
            flat[idx] = orig
            numeric = (up - down) / (2 * h)
            a = analytic[k].reshape(-1)[idx].item()
            if not (math.isfinite(numeric) and math.isfinite(a)):
                raise FloatingPointError(f"non-finite gradient for {params[k][0]}[{idx}]")
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
