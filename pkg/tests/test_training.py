import numpy as np
import pytest
import torch
from torch import nn

from paircon import nn as pnn
from paircon.augment import AugmentationPolicy
from paircon.dataset import SplitSpec, split_balanced
from paircon.synthetic import make_glyph_dataset
from paircon.training import (
    BestTracker,
    ConfigurationError,
    Strategy,
    TrainConfig,
    TrainingDivergedError,
    build_training_sets,
    decay_epochs,
    evaluate_accuracy,
    lr_at,
    make_optimizer,
    train_contrastive,
    train_probe,
    train_supervised,
)

CFG = pnn.ModelConfig()


def test_schedule_plateaus():
    c = TrainConfig(n_epochs=250)
    assert decay_epochs(250) == (175, 200, 225)
    assert lr_at(c, 0) == 0.05 and lr_at(c, 174) == 0.05
    assert lr_at(c, 175) == pytest.approx(5e-3, rel=1e-12)
    assert lr_at(c, 200) == pytest.approx(5e-4, rel=1e-12)
    assert lr_at(c, 249) == pytest.approx(5e-5, rel=1e-12)
    with pytest.raises(ValueError):
        lr_at(c, 250)
    p = TrainConfig(probe_epochs=50, probe_lr=1e-4)
    assert lr_at(p, 34, "probe") == 1e-4 and lr_at(p, 35, "probe") == pytest.approx(1e-5)


def test_momentum_step_on_quadratic():
    # f(w) = 0.5 * a * w^2, so g = a * w
    a, w0, lr, mu = 3.0, 2.0, 0.05, 0.9
    w = torch.tensor([w0], dtype=torch.float64, requires_grad=True)
    opt = make_optimizer([w], TrainConfig(momentum=mu), lr)
    v, ref = 0.0, w0
    for _ in range(5):
        opt.zero_grad()
        (0.5 * a * w**2).sum().backward()
        opt.step()
        v = mu * v + a * ref
        ref = ref - lr * v
        assert abs(w.item() - ref) < 1e-9


def test_config_errors():
    with pytest.raises(ConfigurationError, match="divisible by 4"):
        TrainConfig(strategy=Strategy.UNION_CA, batch_size=6)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=5)
    with pytest.raises(ConfigurationError):
        TrainConfig(strategy=Strategy.CROSS_CA, contrastive_loss="simclr")
    with pytest.raises(ConfigurationError):
        TrainConfig(initial_lr=0)


def test_training_sets(glyphs):
    a, b = glyphs
    cfg = TrainConfig(strategy=Strategy.UNION_CA, augmentation_ratio=2, batch_size=8)
    sets = build_training_sets(a, cfg, b)
    assert len(sets.a) == len(sets.b) == 2 * len(a)
    with pytest.raises(ConfigurationError):
        build_training_sets(a, TrainConfig(strategy=Strategy.SUPERVISED_CA), None)
    cross = build_training_sets(a, TrainConfig(strategy=Strategy.CROSS_CA), b)
    assert len(cross.b_pool) == len(b)


def _toy_two_class():
    ds = make_glyph_dataset(4, "A", seed=0)
    keep = np.flatnonzero(ds.labels < 2)
    return ds.subset(keep)


def test_contrastive_descends_and_is_deterministic():
    train = _toy_two_class()
    assert len(train) == 8
    cfg = TrainConfig(n_epochs=5, batch_size=4, strategy=Strategy.TWO_VIEW_C, seed=1, initial_lr=0.05)

    def run():
        m = pnn.ContrastiveModel(pnn.build_encoder(CFG, 0), pnn.build_head(CFG, 0))
        return train_contrastive(m, train, cfg, record_batches=True)

    r1, r2 = run(), run()
    assert r1.loss_history[-1] < r1.loss_history[0]
    assert r1.loss_history == r2.loss_history
    assert r1.batch_origins == r2.batch_origins
    assert len(r1.batch_origins) == 5 * 4


def test_union_and_cross_train_one_epoch(glyphs):
    a, b = glyphs
    for strategy in (Strategy.UNION_CA, Strategy.CROSS_CA):
        cfg = TrainConfig(n_epochs=1, batch_size=8, strategy=strategy)
        m = pnn.ContrastiveModel(pnn.build_encoder(CFG, 0), pnn.build_head(CFG, 0))
        res = train_contrastive(m, a, cfg, dataset_b=b, record_batches=True)
        assert np.isfinite(res.loss_history[0])
        assert len(res.batch_origins) > 0


def test_divergence_names_epoch_and_batch():
    cfg = TrainConfig(n_epochs=3, batch_size=4, initial_lr=1e30, strategy=Strategy.TWO_VIEW_C)
    m = pnn.ContrastiveModel(pnn.build_encoder(CFG, 0), pnn.build_head(CFG, 0))
    with pytest.raises(TrainingDivergedError) as info:
        train_contrastive(m, _toy_two_class(), cfg)
    assert info.value.epoch >= 0 and info.value.batch >= 0
    assert "epoch" in str(info.value)


def test_best_tracker():
    t = BestTracker()
    for epoch, acc in enumerate([0.2, 0.9, 0.5]):
        t.update(epoch, acc, {"w": torch.tensor([float(epoch)])})
    assert t.best_epoch == 1 and t.best_score == 0.9
    assert t.best_state["w"].item() == 1.0
    assert not t.update(3, 0.9, {"w": torch.tensor([3.0])})


class OneHotOfLabel(nn.Module):
    """Reads the label from a uniform image value and emits its one-hot code."""

    def __init__(self):
        super().__init__()
        self.rep_dim = 7
        self.dummy = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        code = torch.round(x.mean(dim=(1, 2, 3)) * 10).long()
        return torch.nn.functional.one_hot(code, 7).to(x.dtype) + 0 * self.dummy


def _coded_dataset(n_per_class, seed):
    from paircon.dataset import EmotionLabel, LabeledDataset, LabeledImage

    ims = [
        LabeledImage(np.full((48, 48), c / 10), EmotionLabel(c), f"{seed}-{c}-{k}")
        for c in range(7)
        for k in range(n_per_class)
    ]
    return LabeledDataset(tuple(ims))


def test_probe_separable_and_frozen():
    enc = OneHotOfLabel()
    train, val = _coded_dataset(6, 0), _coded_dataset(3, 1)
    clf = pnn.LinearClassifier(7)
    before = {k: v.clone() for k, v in enc.state_dict().items()}
    res = train_probe(enc, clf, train, val, TrainConfig(probe_epochs=30, probe_lr=0.5, batch_size=8))
    assert res.best_validation_accuracy == 1.0
    assert all(torch.equal(before[k], v) for k, v in enc.state_dict().items())
    with pytest.raises(ValueError):
        train_probe(enc, clf, train, val.subset([]), TrainConfig())


def test_probe_leaves_real_encoder_untouched(glyphs):
    a, _ = glyphs
    split = split_balanced(a, SplitSpec(0.5, seed=0))
    enc = pnn.build_encoder(CFG, 0)
    before = {k: v.clone() for k, v in enc.state_dict().items()}
    train_probe(enc, pnn.build_classifier(CFG, 0), split.train, split.validation, TrainConfig(probe_epochs=2))
    for k, v in enc.state_dict().items():
        assert torch.equal(before[k], v), k
    assert all(p.requires_grad for p in enc.parameters())


def test_supervised_reaches_high_accuracy():
    ds = make_glyph_dataset(20, "A", seed=2)
    split = split_balanced(ds, SplitSpec(0.5, seed=0))
    cfg = TrainConfig(n_epochs=50, batch_size=16, strategy=Strategy.SUPERVISED_C, augmentation_ratio=1,
                      policy=AugmentationPolicy.identity(), seed=0)

    def run():
        model = pnn.ClassifierModel(pnn.build_encoder(CFG, 0), pnn.build_classifier(CFG, 0))
        return model, train_supervised(model, split.train, split.validation, cfg)

    model, res = run()
    assert res.best_validation_accuracy >= 0.95
    assert evaluate_accuracy(model, split.validation) == res.best_validation_accuracy
    _, again = run()
    assert again.validation_history == res.validation_history and again.loss_history == res.loss_history


def test_supervised_ca_requires_b(glyphs):
    a, _ = glyphs
    cfg = TrainConfig(n_epochs=1, strategy=Strategy.SUPERVISED_CA)
    model = pnn.ClassifierModel(pnn.build_encoder(CFG, 0), pnn.build_classifier(CFG, 0))
    with pytest.raises(ConfigurationError):
        train_supervised(model, a, a, cfg, dataset_b=None)


def test_supervised_ca_batches_are_half_and_half(glyphs):
    a, b = glyphs
    cfg = TrainConfig(n_epochs=1, batch_size=8, strategy=Strategy.SUPERVISED_CA)
    model = pnn.ClassifierModel(pnn.build_encoder(CFG, 0), pnn.build_classifier(CFG, 0))
    res = train_supervised(model, a, a, cfg, dataset_b=b, record_batches=True)
    a_ids = set(a.ids)
    for ids in res.batch_origins:
        from_a = sum(i.split("#")[0] in a_ids for i in ids)
        assert from_a == 4
