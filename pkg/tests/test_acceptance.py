"""Acceptance criteria 1-12. Each test prints a PASS/FAIL line in the summary.

Criterion 7 trains 10 models and takes roughly 20 minutes on one core.
"""
import itertools
import math
import os
import time

import numpy as np
import pytest
import torch

from paircon import cli
from paircon import losses
from paircon import nn as pnn
from paircon.augment import AugmentationPolicy
from paircon.batching import Composition, batch_similarity, compose_cross, compose_two_view, compose_union
from paircon.dataset import SplitSpec, save_npz, split_balanced
from paircon.evalstats import mann_whitney_u
from paircon.experiment import run_experiment, spec_from_mapping
from paircon.explain import feature_gradients, grad_cam, render_overlay
from paircon.synthetic import make_glyph_pair
from paircon.training import TrainConfig, lr_at

from conftest import random_dataset
from test_dataset import check_split


# direct-summation oracles on a precomputed cosine matrix (no torch involved)
def _cos_matrix(z):
    norms = [math.sqrt(sum(v * v for v in row)) for row in z]
    return [[sum(a * b for a, b in zip(z[i], z[j])) / (norms[i] * norms[j]) for j in range(len(z))] for i in range(len(z))]


def _simclr_oracle(z, pairing, tau):
    s = _cos_matrix(z)
    total = 0.0
    for i in range(len(z)):
        denom = sum(math.exp(s[i][q] / tau) for q in range(len(z)) if q != i)
        total += -math.log(math.exp(s[i][pairing[i]] / tau) / denom)
    return total


def _supcon_oracle(z, labels, tau):
    s = _cos_matrix(z)
    total = 0.0
    for i in range(len(z)):
        pos = [p for p in range(len(z)) if p != i and labels[p] == labels[i]]
        if not pos:
            continue
        denom = sum(math.exp(s[i][q] / tau) for q in range(len(z)) if q != i)
        total += -sum(math.log(math.exp(s[i][p] / tau) / denom) for p in pos) / len(pos)
    return total


def test_criterion_01_loss_oracle(record_property):
    """criterion 1: losses match a direct-summation oracle within 1e-6 relative"""
    rng = np.random.default_rng(101)
    grid = list(itertools.product([4, 8, 32], [2, 128], [0.1, 0.5, 1.0]))
    worst = 0.0
    start = time.perf_counter()
    for k in range(100):
        b, dim, tau = grid[k % len(grid)]
        z = rng.normal(size=(b, dim))
        pairing = [i ^ 1 for i in range(b)]
        labels = rng.integers(0, max(2, b // 4), size=b)
        labels[1] = labels[0]
        got_u = losses.simclr_loss(torch.tensor(z), pairing, tau).item()
        got_s = losses.supcon_loss(torch.tensor(z), torch.tensor(labels), tau).item()
        ref_u = _simclr_oracle(z.tolist(), pairing, tau)
        ref_s = _supcon_oracle(z.tolist(), labels.tolist(), tau)
        worst = max(worst, abs(got_u - ref_u) / abs(ref_u), abs(got_s - ref_s) / abs(ref_s))
    elapsed = time.perf_counter() - start
    record_property("max_rel_err", f"{worst:.2e}")
    record_property("seconds", f"{elapsed:.1f}")
    assert worst < 1e-6
    assert elapsed < 10


def test_criterion_02_closed_forms(record_property):
    """criterion 2: closed-form loss values within 1e-9"""
    e = math.e
    ones = torch.ones(4, 3, dtype=torch.float64)
    ang = torch.tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], dtype=torch.float64)
    cases = [
        (losses.simclr_loss(torch.randn(2, 3, dtype=torch.float64), [1, 0], 1.0).item(), 0.0),
        (losses.simclr_loss(ones, [1, 0, 3, 2], 1.0).item(), 4 * math.log(3)),
        (losses.simclr_loss(ang, [1, 0, 3, 2], 1.0).item(), 4 * math.log(1 + 2 / e)),
        (losses.supcon_loss(ones, [0, 0, 0, 0], 1.0).item(), 4 * math.log(3)),
        (losses.supcon_loss(ang, [0, 0, 1, 1], 1.0).item(), 4 * math.log(1 + 2 / e)),
        (losses.supcon_loss(ang, [0, 0, 0, 0], 1.0).item(), (4 / 3) * (math.log(1 + 2 / e) + 2 * math.log(e + 2))),
    ]
    worst = max(abs(a - b) for a, b in cases)
    record_property("max_abs_err", f"{worst:.1e}")
    assert worst < 1e-9


def test_criterion_03_supcon_reduces_to_simclr(record_property):
    """criterion 3: SupCon equals SimCLR under unique-per-pair labels (1e-9)"""
    rng = np.random.default_rng(303)
    worst = 0.0
    for k in range(100):
        b = [4, 8, 16, 32][k % 4]
        z = torch.tensor(rng.normal(size=(b, int(rng.integers(2, 64)))))
        tau = float(rng.choice([0.1, 0.5, 1.0]))
        labels = torch.arange(b) // 2
        pairing = [i ^ 1 for i in range(b)]
        worst = max(worst, abs(losses.supcon_loss(z, labels, tau).item() - losses.simclr_loss(z, pairing, tau).item()))
    record_property("max_abs_diff", f"{worst:.1e}")
    assert worst < 1e-9


def test_criterion_04_gradient_checks(record_property):
    """criterion 4: autograd vs central differences below 1e-3 (h=1e-3, float64)"""
    start = time.perf_counter()
    cfg = pnn.ModelConfig()
    x = torch.rand(4, 1, 48, 48, dtype=torch.float64, generator=torch.Generator().manual_seed(4))
    errors = {}
    for name in ("supcon", "simclr"):
        m = pnn.ContrastiveModel(pnn.build_encoder(cfg, 4), pnn.build_head(cfg, 4)).double()
        if name == "supcon":
            fn = lambda: losses.supcon_loss(m(x), [0, 0, 1, 1], 0.1)  # noqa: E731
        else:
            fn = lambda: losses.simclr_loss(m(x), [1, 0, 3, 2], 0.1)  # noqa: E731
        errors[name] = pnn.gradient_check(fn, m, h=1e-3)
    y = torch.arange(16) % 7
    xs = torch.rand(16, 1, 48, 48, dtype=torch.float64, generator=torch.Generator().manual_seed(5))
    # linear classifier on features of a fresh encoder
    enc = pnn.build_encoder(cfg, 4).double().eval()
    with torch.no_grad():
        r = enc(xs)
    clf = pnn.build_classifier(cfg, 4).double()
    errors["classifier_ce"] = pnn.gradient_check(lambda: losses.cross_entropy(clf(r), y), clf, h=1e-3, fraction=1.0)
    # and end to end through the encoder
    full = pnn.ClassifierModel(pnn.build_encoder(cfg, 4), pnn.build_classifier(cfg, 4)).double()
    errors["encoder_classifier_ce"] = pnn.gradient_check(lambda: losses.cross_entropy(full(xs), y), full, h=1e-3)
    elapsed = time.perf_counter() - start
    for k, v in errors.items():
        record_property(k, f"{v:.1e}")
    record_property("seconds", f"{elapsed:.1f}")
    assert max(errors.values()) < 1e-3
    assert elapsed < 120


def test_criterion_05_batch_invariants(record_property):
    """criterion 5: 1000 composed batches per strategy, zero invariant violations"""
    rng = np.random.default_rng(505)
    a, b = make_glyph_pair(280, 2800, seed=0)
    policy = AugmentationPolicy()
    composers = {
        Composition.TWO_VIEW: lambda: compose_two_view(a, 32, policy, rng),
        Composition.UNION: lambda: compose_union(a, b, 32, policy, rng),
        Composition.CROSS: lambda: compose_cross(a, b, 32, policy, rng),
    }
    violations = {}
    for comp, make in composers.items():
        count = 0
        for _ in range(1000):
            batch = make()
            v = batch.violations()
            n_a = sum(s.value == "A" for s in batch.sources)
            expected_a = {Composition.TWO_VIEW: 32, Composition.UNION: 16, Composition.CROSS: 16}[comp]
            if n_a != expected_a:
                v = v + ["source count"]
            count += bool(v)
        violations[comp.value] = count
        record_property(comp.value, count)
    assert sum(violations.values()) == 0


def test_criterion_06_diversity(record_property):
    """criterion 6: two_view batches are more self-similar than cross batches (MW p<0.01)"""
    a, b = make_glyph_pair(280, 2800, seed=0)

    def unit_rows(ds, c):
        x = ds.pixels[ds.indices_by_label[c]].reshape(-1, 48 * 48).astype(np.float64)
        x -= x.mean(axis=1, keepdims=True)
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    within, cross = [], []
    for c in range(7):
        xa, xb = unit_rows(a, c), unit_rows(b, c)
        s = xa @ xa.T
        within.append((s.sum() - len(xa)) / (len(xa) * (len(xa) - 1)))
        cross.append((xa @ xb.T).mean())
    # precondition on the synthetic pair
    assert np.mean(within) > np.mean(cross)
    rng = np.random.default_rng(606)
    policy = AugmentationPolicy()
    tv = [batch_similarity(compose_two_view(a, 32, policy, rng)) for _ in range(200)]
    cr = [batch_similarity(compose_cross(a, b, 32, policy, rng)) for _ in range(200)]
    res = mann_whitney_u(tv, cr)
    record_property("two_view", f"{np.mean(tv):.4f}")
    record_property("cross", f"{np.mean(cr):.4f}")
    record_property("p", f"{res.pvalue:.1e}")
    assert np.mean(tv) > np.mean(cr)
    assert res.pvalue < 0.01


@pytest.mark.slow
def test_criterion_07_desk_experiment(tmp_path, record_property):
    """criterion 7: SC_cross mean test accuracy >= SC_two_view - 0.01, both >= 1.5/7"""
    a, b = make_glyph_pair(280, 2800, seed=0)
    spec = spec_from_mapping(
        {
            "grid.strategies": "SC_c, SC_ca_cross",
            "grid.train_fractions": "0.5",
            "grid.aug_ratios": "5",
            "grid.repetitions": "5",
            "model.encoder": "tiny_cnn",
            "train.n_epochs": "50",
            "train.probe_epochs": "20",
            "train.batch_size": "32",
            # the default probe rate does not move a fresh linear layer in 20 epochs
            "train.probe_lr": "0.05",
        }
    )
    jobs = max(1, min(4, os.cpu_count() or 1))
    start = time.perf_counter()
    out = run_experiment(spec, tmp_path, jobs=jobs, datasets=(a, b))
    elapsed = time.perf_counter() - start
    assert out.exit_code == 0
    acc = {s: np.mean([r.test_accuracy for r in out.rows if r.strategy == s]) for s in ("SC_c", "SC_ca_cross")}
    record_property("SC_c", f"{acc['SC_c']:.4f}")
    record_property("SC_ca_cross", f"{acc['SC_ca_cross']:.4f}")
    record_property("minutes", f"{elapsed / 60:.1f} on {jobs} worker(s)")
    assert acc["SC_ca_cross"] >= acc["SC_c"] - 0.01
    assert min(acc.values()) >= 1.5 / 7
    assert elapsed < 30 * 60


def test_criterion_08_schedule(record_property):
    """criterion 8: lr plateaus 0.05/0.005/5e-4/5e-5 with drops at 175/200/225"""
    cfg = TrainConfig(n_epochs=250)
    lrs = [lr_at(cfg, e) for e in range(250)]
    drops = [e for e in range(1, 250) if lrs[e] != lrs[e - 1]]
    plateaus = sorted(set(lrs), reverse=True)
    record_property("drops", drops)
    assert drops == [175, 200, 225]
    expected = [0.05, 0.005, 5e-4, 5e-5]
    assert len(plateaus) == 4 and all(abs(p - q) <= 1e-15 for p, q in zip(plateaus, expected))


def test_criterion_09_mann_whitney_exact(record_property):
    """criterion 9: exact MW p-values equal brute-force enumeration for sizes <= 7"""
    start = time.perf_counter()
    checked = 0
    for n in range(1, 8):
        for m in range(1, 8):
            null = []
            arrangements = list(itertools.combinations(range(n + m), n))
            for chosen in arrangements:
                rest = [r for r in range(n + m) if r not in chosen]
                null.append(sum(a > b for a in chosen for b in rest))
            null = np.array(null)
            for chosen, u in zip(arrangements, null):
                x = list(chosen)
                y = [r for r in range(n + m) if r not in chosen]
                res = mann_whitney_u(x, y)
                expected = np.count_nonzero(null >= u) / len(null)
                assert res.exact and res.statistic == u
                assert res.pvalue == pytest.approx(expected, rel=1e-12, abs=0), (n, m, x)
                checked += 1
    elapsed = time.perf_counter() - start
    record_property("arrangements", checked)
    record_property("seconds", f"{elapsed:.1f}")
    assert elapsed < 60


def test_criterion_10_grad_cam(record_property):
    """criterion 10: zero-gradient map flagged, dA matches finite differences, maps in [0,1]"""
    cfg = pnn.ModelConfig()
    model = pnn.ClassifierModel(pnn.build_encoder(cfg, 10), pnn.build_classifier(cfg, 10)).double()
    images = np.random.default_rng(10).random((5, 48, 48)).astype(np.float32)

    flat = pnn.ClassifierModel(pnn.build_encoder(cfg, 10), pnn.build_classifier(cfg, 10)).double()
    with torch.no_grad():
        flat.classifier.fc.weight.zero_()
    zero = grad_cam(flat, images[0], 0)
    assert zero.degenerate and not zero.values.any()

    rng = np.random.default_rng(0)
    worst = 0.0
    h = 1e-3
    for img in images[:2]:
        for target in (0, 4):
            a, grad, _ = feature_gradients(model, img, target)
            with torch.no_grad():
                for _ in range(40):
                    idx = tuple(int(rng.integers(s)) for s in a.shape)
                    up, down = a.clone(), a.clone()
                    up[idx] += h
                    down[idx] -= h
                    num = (model.logits_from_features(up[None])[0, target] - model.logits_from_features(down[None])[0, target]).item() / (2 * h)
                    ana = grad[idx].item()
                    worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    record_property("max_rel_err", f"{worst:.1e}")
    assert worst < 1e-3

    for img in images:
        for c in range(7):
            cam = grad_cam(model, img, c)
            assert 0.0 <= cam.values.min() and cam.values.max() <= 1.0
            rgb = render_overlay(img, cam)
            assert 0.0 <= rgb.min() and rgb.max() <= 1.0


def test_criterion_11_determinism(tmp_path, record_property):
    """criterion 11: two identical `train` runs give bitwise-equal accuracies and batch sequences"""
    a, b = make_glyph_pair(105, 700, seed=11)
    save_npz(a, tmp_path / "a.npz")
    save_npz(b, tmp_path / "b.npz")
    cfg = tmp_path / "cell.cfg"
    cfg.write_text(
        "data.a_path = a.npz\ndata.b_path = b.npz\n"
        "grid.strategies = SC_ca_cross\ngrid.train_fractions = 0.5\ngrid.aug_ratios = 2\n"
        "grid.repetitions = 2\nseed = 11\n"
        "train.n_epochs = 3\ntrain.probe_epochs = 3\ntrain.batch_size = 16\ntrain.probe_lr = 0.05\n"
    )
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["train", "--config", str(cfg), "--out", str(out), "--no-checkpoints"]) == 0
        outs.append(out)

    def accuracy_fields(out):
        lines = (out / "rows.csv").read_text().splitlines()
        header = lines[0].split(",")
        keep = [header.index("validation_accuracy"), header.index("test_accuracy")]
        return [[line.split(",")[i] for i in keep] for line in lines[1:]]

    def batch_logs(out):
        return {p.name: p.read_text() for p in sorted((out / "logs").glob("*_batches.txt"))}

    first, second = accuracy_fields(outs[0]), accuracy_fields(outs[1])
    record_property("rows", len(first))
    assert len(first) == 2 and first == second
    logs0, logs1 = batch_logs(outs[0]), batch_logs(outs[1])
    assert len(logs0) == 2 and all(logs0.values())
    assert logs0 == logs1


def test_criterion_12_split_invariants(record_property):
    """criterion 12: split_balanced invariants hold over 100 random datasets"""
    rng = np.random.default_rng(1212)
    failures = 0
    for k in range(100):
        counts = rng.integers(2, 30, size=7)
        counts[rng.random(7) < 0.15] = 0
        if not counts.any():
            counts[0] = 5
        ds = random_dataset(rng, counts.tolist(), prefix=f"d{k}_")
        m = counts[counts > 0].min()
        fraction = float(rng.uniform(max(0.5, 1.0 / m), 0.95))
        split = split_balanced(ds, SplitSpec(fraction, seed=k))
        failures += bool(check_split(ds, split, fraction))
    record_property("violating_datasets", failures)
    assert failures == 0
