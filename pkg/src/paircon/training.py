"""Contrastive pre-training, linear probe and the supervised baseline."""
from __future__ import annotations

import copy
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np
import torch
from torch import nn

from . import losses
from .augment import AugmentationPolicy, materialize
from .batching import Composition, iter_epoch
from .dataset import LabeledDataset, Role
from .evalstats import top1_accuracy
from .nn import ClassifierModel, ContrastiveModel, LinearClassifier

logger = logging.getLogger(__name__)

MetricsCallback = Callable[[dict], None]


class Strategy(str, enum.Enum):
    TWO_VIEW_C = "two_view_c"
    UNION_CA = "union_ca"
    CROSS_CA = "cross_ca"
    SUPERVISED_C = "supervised_c"
    SUPERVISED_CA = "supervised_ca"

    @property
    def contrastive(self) -> bool:
        return self in (Strategy.TWO_VIEW_C, Strategy.UNION_CA, Strategy.CROSS_CA)

    @property
    def uses_b(self) -> bool:
        return self in (Strategy.UNION_CA, Strategy.CROSS_CA, Strategy.SUPERVISED_CA)

    @property
    def composition(self) -> Composition:
        return {
            Strategy.TWO_VIEW_C: Composition.TWO_VIEW,
            Strategy.UNION_CA: Composition.UNION,
            Strategy.CROSS_CA: Composition.CROSS,
        }[self]


class ConfigurationError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    def __init__(self, stage: str, epoch: int, batch: int, value: float):
        self.stage, self.epoch, self.batch, self.value = stage, epoch, batch, value
        super().__init__(f"non-finite {stage} loss {value} at epoch {epoch}, batch {batch}")


@dataclass(frozen=True)
class TrainConfig:
    n_epochs: int = 250
    batch_size: int = 32
    initial_lr: float = 0.05
    momentum: float = 0.9
    decay_factor: float = 0.1
    probe_epochs: int = 50
    probe_lr: float = 1e-4
    augmentation_ratio: int = 1
    strategy: Strategy = Strategy.TWO_VIEW_C
    seed: int = 0
    temperature: float = losses.DEFAULT_TEMPERATURE
    contrastive_loss: str = "supcon"
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        for name in ("initial_lr", "probe_lr", "momentum", "decay_factor", "temperature"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.n_epochs < 1 or self.probe_epochs < 1:
            raise ConfigurationError("epoch counts must be at least 1")
        if self.augmentation_ratio < 1 or int(self.augmentation_ratio) != self.augmentation_ratio:
            raise ConfigurationError("augmentation_ratio must be a positive integer")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigurationError(f"batch size must be even, got {self.batch_size}")
        if self.strategy is Strategy.UNION_CA and self.batch_size % 4:
            raise ConfigurationError(f"union strategy needs a batch size divisible by 4, got {self.batch_size}")
        if self.strategy is Strategy.SUPERVISED_CA and self.batch_size % 2:
            raise ConfigurationError("supervised_ca needs an even batch size")
        if self.contrastive_loss not in ("supcon", "simclr"):
            raise ConfigurationError("contrastive_loss must be 'supcon' or 'simclr'")
        if self.strategy is Strategy.CROSS_CA and self.contrastive_loss != "supcon":
            raise ConfigurationError("cross-dataset composition needs labels and so the SupCon loss")


def decay_epochs(n_epochs: int) -> tuple[int, int, int]:
    """Epochs at which the learning rate drops: ``n - 0.1 n {3, 2, 1}``, rounded half up."""
    return tuple(int(math.floor(n_epochs - 0.1 * n_epochs * k + 0.5)) for k in (3, 2, 1))


def lr_at(config: TrainConfig, epoch: int, stage: str = "train") -> float:
    """Learning rate for ``epoch`` (0-based) of the main or the ``"probe"`` stage."""
    if stage == "probe":
        n, base = config.probe_epochs, config.probe_lr
    else:
        n, base = config.n_epochs, config.initial_lr
    if not 0 <= epoch < n:
        raise ValueError(f"epoch {epoch} outside [0, {n})")
    drops = sum(d <= epoch for d in decay_epochs(n))
    return base * config.decay_factor**drops


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for g in opt.param_groups:
        g["lr"] = lr


def make_optimizer(params, config: TrainConfig, lr: float) -> torch.optim.SGD:
    # torch's SGD: v <- momentum * v + g; theta <- theta - lr * v
    return torch.optim.SGD(params, lr=lr, momentum=config.momentum, dampening=0.0, weight_decay=0.0)


def _images_tensor(pixels: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(pixels))[:, None].to(dtype)


def _rng(config: TrainConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng((config.seed, stream))


@dataclass
class TrainingSets:
    """Materialized augmented sets consumed by one run."""

    a: LabeledDataset
    b: LabeledDataset | None = None
    b_pool: LabeledDataset | None = None


def build_training_sets(train_a: LabeledDataset, config: TrainConfig, dataset_b: LabeledDataset | None = None) -> TrainingSets:
    """Materialize A at the augmentation ratio; add what the strategy needs from B.

    Union and supervised_ca use a fixed random subset of B with as many images
    as A's training set, materialized at the same ratio. Cross composition
    augments B images on the fly, so B is kept whole as a pool.
    """
    s = config.strategy
    if s.uses_b and dataset_b is None:
        raise ConfigurationError(f"strategy {s.value} needs dataset B")
    m_a = materialize(train_a, config.augmentation_ratio, config.policy, seed=config.seed * 4 + 1)
    if s in (Strategy.UNION_CA, Strategy.SUPERVISED_CA):
        if len(dataset_b) < len(train_a):
            raise ConfigurationError("dataset B is smaller than A's training set")
        pick = np.sort(_rng(config, 3).choice(len(dataset_b), size=len(train_a), replace=False))
        sub = dataset_b.subset(pick, name=f"{dataset_b.name}:subset", role=Role.B)
        m_b = materialize(sub, config.augmentation_ratio, config.policy, seed=config.seed * 4 + 2)
        return TrainingSets(m_a, b=m_b)
    if s is Strategy.CROSS_CA:
        return TrainingSets(m_a, b_pool=dataset_b.with_role(Role.B))
    return TrainingSets(m_a)


@dataclass
class ContrastiveResult:
    encoder_state: dict[str, torch.Tensor]
    loss_history: list[float]
    batch_origins: list[list[str]] = field(default_factory=list)
    training_set: LabeledDataset | None = None


def contrastive_batches(sets: TrainingSets, config: TrainConfig, rng: np.random.Generator):
    comp = config.strategy.composition
    other = sets.b if comp is Composition.UNION else sets.b_pool
    return iter_epoch(comp, sets.a, config.batch_size, config.policy, rng, dataset_b=other)


def train_contrastive(
    model: ContrastiveModel,
    train_a: LabeledDataset,
    config: TrainConfig,
    dataset_b: LabeledDataset | None = None,
    on_metrics: MetricsCallback | None = None,
    record_batches: bool = False,
) -> ContrastiveResult:
    """SGD with momentum on the contrastive loss for ``n_epochs`` epochs.

    The optimized quantity is the per-anchor mean loss; the recorded epoch
    loss is the mean over batches of that value.
    """
    if not config.strategy.contrastive:
        raise ConfigurationError(f"{config.strategy.value} is not a contrastive strategy")
    sets = build_training_sets(train_a, config, dataset_b)
    rng = _rng(config, 2)
    dtype = next(model.parameters()).dtype
    opt = make_optimizer(model.parameters(), config, config.initial_lr)
    history: list[float] = []
    origins: list[list[str]] = []
    model.train()
    for epoch in range(config.n_epochs):
        lr = lr_at(config, epoch)
        _set_lr(opt, lr)
        total, count = 0.0, 0
        for k, batch in enumerate(contrastive_batches(sets, config, rng)):
            if record_batches:
                origins.append(batch.origin_ids)
            z = model(_images_tensor(batch.images, dtype))
            if config.contrastive_loss == "supcon":
                loss = losses.supcon_loss(z, torch.from_numpy(batch.labels), config.temperature, reduction="mean")
            else:
                loss = losses.simclr_loss(z, batch.pairing, config.temperature, reduction="mean")
            if not torch.isfinite(loss):
                raise TrainingDivergedError("contrastive", epoch, k, loss.item())
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item()
            count += 1
        if count == 0:
            raise ConfigurationError("training set smaller than one batch")
        history.append(total / count)
        if on_metrics:
            on_metrics({"epoch": epoch, "stage": "contrastive", "loss": history[-1], "validation_accuracy": None, "lr": lr})
    return ContrastiveResult(copy.deepcopy(model.encoder.state_dict()), history, origins, sets.a)


class BestTracker:
    """Keep a copy of the state with the strictly highest score seen so far."""

    def __init__(self):
        self.best_score = -math.inf
        self.best_epoch = -1
        self.best_state: dict | None = None

    def update(self, epoch: int, score: float, state: dict) -> bool:
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.best_state = copy.deepcopy(state)
            return True
        return False


@torch.no_grad()
def predict_logits(model: nn.Module, dataset: LabeledDataset, chunk: int = 256) -> np.ndarray:
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    out = [model(_images_tensor(dataset.pixels[s : s + chunk], dtype)).double().numpy() for s in range(0, len(dataset), chunk)]
    model.train(was_training)
    return np.concatenate(out)


def evaluate_accuracy(model: ClassifierModel, dataset: LabeledDataset) -> float:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return top1_accuracy(predict_logits(model, dataset), dataset.labels)


@torch.no_grad()
def _features(encoder: nn.Module, dataset: LabeledDataset, chunk: int = 256) -> torch.Tensor:
    encoder.eval()
    dtype = next(encoder.parameters()).dtype
    return torch.cat([encoder(_images_tensor(dataset.pixels[s : s + chunk], dtype)) for s in range(0, len(dataset), chunk)])


@dataclass
class ProbeResult:
    classifier_state: dict[str, torch.Tensor]
    best_epoch: int
    best_validation_accuracy: float
    validation_history: list[float]
    loss_history: list[float]
    optimizer_state: dict[str, torch.Tensor] = field(default_factory=dict)


def momentum_buffers(opt: torch.optim.Optimizer, module: nn.Module) -> dict[str, torch.Tensor]:
    out = {}
    for name, p in module.named_parameters():
        buf = opt.state.get(p, {}).get("momentum_buffer")
        if buf is not None:
            out[name] = buf.detach().clone()
    return out


def train_probe(
    encoder: nn.Module,
    classifier: LinearClassifier,
    train: LabeledDataset,
    validation: LabeledDataset,
    config: TrainConfig,
    on_metrics: MetricsCallback | None = None,
) -> ProbeResult:
    """Cross-entropy training of ``classifier`` on frozen encoder features.

    Features are computed once with the encoder in eval mode; no gradient
    reaches the encoder. The classifier is restored to its best-validation
    state before returning.
    """
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    for p in encoder.parameters():
        p.requires_grad_(False)
    try:
        f_train = _features(encoder, train)
        f_val = _features(encoder, validation)
    finally:
        for p in encoder.parameters():
            p.requires_grad_(True)
    y_train = torch.from_numpy(train.labels)
    y_val = validation.labels
    rng = _rng(config, 5)
    opt = make_optimizer(classifier.parameters(), config, config.probe_lr)
    tracker = BestTracker()
    val_hist, loss_hist = [], []
    b = config.batch_size
    for epoch in range(config.probe_epochs):
        lr = lr_at(config, epoch, stage="probe")
        _set_lr(opt, lr)
        perm = torch.from_numpy(rng.permutation(len(train)))
        total, count = 0.0, 0
        for s in range(0, len(perm), b):
            idx = perm[s : s + b]
            loss = losses.cross_entropy(classifier(f_train[idx]), y_train[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError("probe", epoch, count, loss.item())
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item()
            count += 1
        with torch.no_grad():
            acc = top1_accuracy(classifier(f_val).double().numpy(), y_val)
        val_hist.append(acc)
        loss_hist.append(total / count)
        tracker.update(epoch, acc, classifier.state_dict())
        if on_metrics:
            on_metrics({"epoch": epoch, "stage": "probe", "loss": loss_hist[-1], "validation_accuracy": acc, "lr": lr})
    classifier.load_state_dict(tracker.best_state)
    return ProbeResult(tracker.best_state, tracker.best_epoch, tracker.best_score, val_hist, loss_hist, momentum_buffers(opt, classifier))


@dataclass
class SupervisedResult:
    model_state: dict[str, torch.Tensor]
    best_epoch: int
    best_validation_accuracy: float
    validation_history: list[float]
    loss_history: list[float]
    batch_origins: list[list[str]] = field(default_factory=list)
    optimizer_state: dict[str, torch.Tensor] = field(default_factory=dict)


def supervised_batches(sets: TrainingSets, config: TrainConfig, rng: np.random.Generator) -> Iterator[tuple[np.ndarray, np.ndarray, list[str]]]:
    """Batches of already-augmented images; supervised_ca takes half from each set."""
    b = config.batch_size
    if sets.b is None:
        perm = rng.permutation(len(sets.a))
        for s in range(0, len(perm) - b + 1, b):
            idx = perm[s : s + b]
            yield sets.a.pixels[idx], sets.a.labels[idx], [sets.a.ids[i] for i in idx]
        return
    half = b // 2
    pa = rng.permutation(len(sets.a))
    pb = rng.permutation(len(sets.b))
    for k in range(min(len(pa), len(pb)) // half):
        ia = pa[k * half : (k + 1) * half]
        ib = pb[k * half : (k + 1) * half]
        px = np.concatenate([sets.a.pixels[ia], sets.b.pixels[ib]])
        lab = np.concatenate([sets.a.labels[ia], sets.b.labels[ib]])
        yield px, lab, [sets.a.ids[i] for i in ia] + [sets.b.ids[i] for i in ib]


def train_supervised(
    model: ClassifierModel,
    train_a: LabeledDataset,
    validation: LabeledDataset,
    config: TrainConfig,
    dataset_b: LabeledDataset | None = None,
    on_metrics: MetricsCallback | None = None,
    record_batches: bool = False,
) -> SupervisedResult:
    """End-to-end cross-entropy training with best-validation tracking."""
    if config.strategy not in (Strategy.SUPERVISED_C, Strategy.SUPERVISED_CA):
        raise ConfigurationError(f"{config.strategy.value} is not a supervised strategy")
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    sets = build_training_sets(train_a, config, dataset_b)
    rng = _rng(config, 2)
    dtype = next(model.parameters()).dtype
    opt = make_optimizer(model.parameters(), config, config.initial_lr)
    tracker = BestTracker()
    val_hist, loss_hist, origins = [], [], []
    for epoch in range(config.n_epochs):
        lr = lr_at(config, epoch)
        _set_lr(opt, lr)
        model.train()
        total, count = 0.0, 0
        for k, (px, lab, ids) in enumerate(supervised_batches(sets, config, rng)):
            if record_batches:
                origins.append(ids)
            loss = losses.cross_entropy(model(_images_tensor(px, dtype)), torch.from_numpy(lab))
            if not torch.isfinite(loss):
                raise TrainingDivergedError("supervised", epoch, k, loss.item())
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item()
            count += 1
        if count == 0:
            raise ConfigurationError("training set smaller than one batch")
        acc = evaluate_accuracy(model, validation)
        val_hist.append(acc)
        loss_hist.append(total / count)
        tracker.update(epoch, acc, model.state_dict())
        if on_metrics:
            on_metrics({"epoch": epoch, "stage": "supervised", "loss": loss_hist[-1], "validation_accuracy": acc, "lr": lr})
    model.load_state_dict(tracker.best_state)
    return SupervisedResult(tracker.best_state, tracker.best_epoch, tracker.best_score, val_hist, loss_hist, origins, momentum_buffers(opt, model))
