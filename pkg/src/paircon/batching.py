"""Mini-batch composition: two-view, union (c+a) and cross-dataset (c<-a).

Indices are 0-based. In every composition the views of one pair sit at
consecutive positions ``(2k, 2k + 1)``; for cross batches position ``2k`` holds
the dataset-A image and ``2k + 1`` its same-label dataset-B partner.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .augment import AugmentationPolicy, apply_pixels, draw
from .dataset import EmotionLabel, LabeledDataset, Role


class Composition(str, enum.Enum):
    TWO_VIEW = "two_view"
    UNION = "union"
    CROSS = "cross"


class BatchCompositionError(ValueError):
    pass


@dataclass(frozen=True)
class BatchEntry:
    image: np.ndarray
    label: EmotionLabel
    origin_id: str
    source: Role


@dataclass(frozen=True)
class Batch:
    entries: tuple[BatchEntry, ...]
    pairing: tuple[int | None, ...]
    strategy: Composition

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def images(self) -> np.ndarray:
        return np.stack([e.image for e in self.entries])

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(e.label) for e in self.entries], dtype=np.int64)

    @property
    def origin_ids(self) -> list[str]:
        return [e.origin_id for e in self.entries]

    @property
    def sources(self) -> list[Role]:
        return [e.source for e in self.entries]

    def violations(self) -> list[str]:
        """Structural invariant violations; empty for a well-formed batch."""
        out = []
        b = len(self.entries)
        if b == 0 or b % 2:
            out.append(f"batch size {b} is not positive and even")
            return out
        if len(self.pairing) != b:
            return out + ["pairing length differs from batch size"]
        for e in self.entries:
            if e.image.shape != (48, 48) or e.image.min() < 0.0 or e.image.max() > 1.0:
                out.append(f"entry {e.origin_id} image out of range or misshapen")
        for i, j in enumerate(self.pairing):
            if j is None:
                out.append(f"index {i} unpaired")
                continue
            if j == i or not 0 <= j < b or self.pairing[j] != i:
                out.append(f"pairing not a fixed-point-free involution at {i}")
                continue
            ei, ej = self.entries[i], self.entries[j]
            if ei.label != ej.label:
                out.append(f"paired entries {i},{j} differ in label")
            if self.strategy is not Composition.CROSS and (
                ei.origin_id != ej.origin_id or ei.source != ej.source
            ):
                out.append(f"paired views {i},{j} come from different images")
        if self.strategy is Composition.CROSS:
            for k in range(0, b, 2):
                if self.pairing[k] != k + 1:
                    out.append(f"cross pair at {k} not consecutive")
                if (self.entries[k].source, self.entries[k + 1].source) != (Role.A, Role.B):
                    out.append(f"cross pair at {k} has sources other than (A, B)")
        if self.strategy is Composition.UNION:
            n_a = sum(e.source is Role.A for e in self.entries)
            if n_a * 2 != b:
                out.append(f"union batch has {n_a} A entries of {b}")
        elif self.strategy is Composition.TWO_VIEW:
            if any(e.source is not Role.A for e in self.entries):
                out.append("two-view batch contains non-A entries")
        return out


def _random_indices(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    if k > n:
        raise BatchCompositionError(f"need {k} distinct images, dataset has {n}")
    return rng.choice(n, size=k, replace=False)


def _views(dataset: LabeledDataset, indices, policy, rng, source: Role) -> list[BatchEntry]:
    entries = []
    for i in indices:
        im = dataset[int(i)]
        for _ in range(2):
            px = apply_pixels(im.pixels, draw(policy, rng))
            entries.append(BatchEntry(px, im.label, im.id, source))
    return entries


def _consecutive_pairing(b: int) -> tuple[int, ...]:
    return tuple(i + 1 if i % 2 == 0 else i - 1 for i in range(b))


def compose_two_view(
    dataset_a: LabeledDataset,
    b: int,
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    indices: Sequence[int] | None = None,
) -> Batch:
    """``b / 2`` images from A, two independent augmentations each."""
    if b < 2 or b % 2:
        raise BatchCompositionError(f"batch size must be even and >= 2, got {b}")
    if indices is None:
        indices = _random_indices(rng, len(dataset_a), b // 2)
    elif len(indices) != b // 2:
        raise BatchCompositionError("need exactly b/2 indices")
    entries = _views(dataset_a, indices, policy, rng, Role.A)
    return Batch(tuple(entries), _consecutive_pairing(b), Composition.TWO_VIEW)


def compose_union(
    dataset_a: LabeledDataset,
    dataset_b: LabeledDataset,
    b: int,
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    indices_a: Sequence[int] | None = None,
    indices_b: Sequence[int] | None = None,
) -> Batch:
    """``b / 4`` images from each dataset, two augmentations each; A block first."""
    if b < 4 or b % 4:
        raise BatchCompositionError(f"union batch size must be divisible by 4, got {b}")
    q = b // 4
    if indices_a is None:
        indices_a = _random_indices(rng, len(dataset_a), q)
    if indices_b is None:
        indices_b = _random_indices(rng, len(dataset_b), q)
    if len(indices_a) != q or len(indices_b) != q:
        raise BatchCompositionError("need exactly b/4 indices per dataset")
    entries = _views(dataset_a, indices_a, policy, rng, Role.A)
    entries += _views(dataset_b, indices_b, policy, rng, Role.B)
    return Batch(tuple(entries), _consecutive_pairing(b), Composition.UNION)


def check_cross_coverage(dataset_a: LabeledDataset, dataset_b: LabeledDataset, indices=None) -> None:
    labels_a = dataset_a.labels if indices is None else dataset_a.labels[np.asarray(indices, dtype=np.int64)]
    counts_b = dataset_b.class_counts()
    for c in np.unique(labels_a):
        if counts_b[c] == 0:
            raise BatchCompositionError(
                f"label {EmotionLabel(int(c)).label_name!r} has no images in dataset {dataset_b.name!r}"
            )


def compose_cross(
    dataset_a: LabeledDataset,
    dataset_b: LabeledDataset,
    b: int,
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    indices: Sequence[int] | None = None,
) -> Batch:
    """Each A image is paired with an augmentation of a random same-label B image.

    B images are drawn with replacement, so a B image may appear twice in one
    batch.
    """
    if b < 2 or b % 2:
        raise BatchCompositionError(f"batch size must be even and >= 2, got {b}")
    if indices is None:
        indices = _random_indices(rng, len(dataset_a), b // 2)
    elif len(indices) != b // 2:
        raise BatchCompositionError("need exactly b/2 indices")
    check_cross_coverage(dataset_a, dataset_b, indices)
    by_label = dataset_b.indices_by_label
    entries = []
    for i in indices:
        im_a = dataset_a[int(i)]
        pool = by_label[int(im_a.label)]
        im_b = dataset_b[int(pool[rng.integers(len(pool))])]
        entries.append(BatchEntry(apply_pixels(im_a.pixels, draw(policy, rng)), im_a.label, im_a.id, Role.A))
        entries.append(BatchEntry(apply_pixels(im_b.pixels, draw(policy, rng)), im_b.label, im_b.id, Role.B))
    return Batch(tuple(entries), _consecutive_pairing(b), Composition.CROSS)


def iter_epoch(
    strategy: Composition,
    dataset_a: LabeledDataset,
    b: int,
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    dataset_b: LabeledDataset | None = None,
) -> Iterator[Batch]:
    """One pass over ``dataset_a``: shuffle it and consume it in order.

    A trailing remainder smaller than a batch's share of A is dropped. For the
    union strategy ``dataset_b`` is shuffled and consumed in step with A.
    """
    strategy = Composition(strategy)
    if strategy is Composition.TWO_VIEW:
        if b < 2 or b % 2:
            raise BatchCompositionError(f"batch size must be even and >= 2, got {b}")
        perm = rng.permutation(len(dataset_a))
        step = b // 2
        for s in range(0, len(perm) - step + 1, step):
            yield compose_two_view(dataset_a, b, policy, rng, indices=perm[s : s + step])
    elif strategy is Composition.UNION:
        if dataset_b is None:
            raise BatchCompositionError("union composition needs dataset B")
        if b < 4 or b % 4:
            raise BatchCompositionError(f"union batch size must be divisible by 4, got {b}")
        perm_a = rng.permutation(len(dataset_a))
        perm_b = rng.permutation(len(dataset_b))
        step = b // 4
        n = min(len(perm_a), len(perm_b)) // step
        for k in range(n):
            sl = slice(k * step, (k + 1) * step)
            yield compose_union(dataset_a, dataset_b, b, policy, rng, perm_a[sl], perm_b[sl])
    else:
        if dataset_b is None:
            raise BatchCompositionError("cross composition needs dataset B")
        if b < 2 or b % 2:
            raise BatchCompositionError(f"batch size must be even and >= 2, got {b}")
        check_cross_coverage(dataset_a, dataset_b)
        perm = rng.permutation(len(dataset_a))
        step = b // 2
        for s in range(0, len(perm) - step + 1, step):
            yield compose_cross(dataset_a, dataset_b, b, policy, rng, indices=perm[s : s + step])


def positive_sets(labels) -> list[frozenset[int]]:
    """``P(i) = {j != i : label(j) == label(i)}`` for a batch or label sequence."""
    if isinstance(labels, Batch):
        labels = labels.labels
    labels = np.asarray(labels)
    return [frozenset(int(j) for j in np.flatnonzero(labels == labels[i]) if j != i) for i in range(len(labels))]


def batch_similarity(batch: Batch) -> float:
    """Mean pairwise cosine similarity of mean-centered pixel vectors.

    Entries with zero pixel variance contribute 0 to their pairs.
    """
    if len(batch) < 2:
        raise ValueError("batch_similarity needs at least two entries")
    return float(_kernels.centered_cosine_mean(batch.images.reshape(len(batch), -1)))
