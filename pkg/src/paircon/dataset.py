"""Image datasets: ingest, preprocessing to 48x48 grayscale, balanced splits."""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels

logger = logging.getLogger(__name__)

IMAGE_SIZE = 48
NUM_CLASSES = 7
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".pgm")
LUMINANCE = (0.299, 0.587, 0.114)


class EmotionLabel(enum.IntEnum):
    ANGER = 0
    DISGUST = 1
    FEAR = 2
    HAPPINESS = 3
    NEUTRAL = 4
    SADNESS = 5
    SURPRISE = 6

    @property
    def label_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "EmotionLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown label {name!r}") from None


# FER-2013 code -> EmotionLabel
FER_CODES = {
    0: EmotionLabel.ANGER,
    1: EmotionLabel.DISGUST,
    2: EmotionLabel.FEAR,
    3: EmotionLabel.HAPPINESS,
    4: EmotionLabel.SADNESS,
    5: EmotionLabel.SURPRISE,
    6: EmotionLabel.NEUTRAL,
}
FER_CODE_OF = {label: code for code, label in FER_CODES.items()}


class Role(str, enum.Enum):
    A = "A"
    B = "B"


class DatasetParseError(ValueError):
    """A malformed row or file in an input dataset."""

    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class LabeledImage:
    """A 48x48 grayscale image in [0, 1] with its label.

    ``origin_id`` tracks lineage for augmented copies and is ``None`` for
    original images.
    """

    pixels: np.ndarray
    label: EmotionLabel
    id: str
    origin_id: str | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"image {self.id!r} has shape {px.shape}, expected 48x48")
        if not (np.all(px >= 0.0) and np.all(px <= 1.0)):
            raise ValueError(f"image {self.id!r} has intensities outside [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "label", EmotionLabel(self.label))


@dataclass(frozen=True)
class LabeledDataset:
    images: tuple[LabeledImage, ...]
    role: Role = Role.A
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "role", Role(self.role))
        ids = [im.id for im in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError(f"dataset {self.name!r} has duplicate image ids")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> LabeledImage:
        return self.images[i]

    def __iter__(self):
        return iter(self.images)

    @cached_property
    def pixels(self) -> np.ndarray:
        if not self.images:
            return np.zeros((0, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
        return np.stack([im.pixels for im in self.images])

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([int(im.label) for im in self.images], dtype=np.int64)

    @cached_property
    def ids(self) -> list[str]:
        return [im.id for im in self.images]

    @cached_property
    def indices_by_label(self) -> dict[int, np.ndarray]:
        return {c: np.flatnonzero(self.labels == c) for c in range(NUM_CLASSES)}

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=NUM_CLASSES)

    def subset(self, indices, name: str | None = None, role: Role | None = None) -> "LabeledDataset":
        return LabeledDataset(
            tuple(self.images[int(i)] for i in indices),
            role=self.role if role is None else role,
            name=self.name if name is None else name,
        )

    def with_role(self, role: Role) -> "LabeledDataset":
        return LabeledDataset(self.images, role=role, name=self.name)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class DatasetSplit:
    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset


def load_fer_csv(path, role: Role = Role.B, name: str | None = None) -> LabeledDataset:
    """Read a FER-2013 style CSV (``emotion,pixels,Usage``).

    Row numbers in errors count data rows from 1. The Usage column is ignored.
    """
    path = Path(path)
    images = []
    n_pixels = IMAGE_SIZE * IMAGE_SIZE
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["emotion", "pixels"]:
            raise DatasetParseError("expected header 'emotion,pixels,Usage'", path=str(path))
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) < 2:
                raise DatasetParseError("missing pixels column", row=row_no, path=str(path))
            try:
                code = int(row[0])
            except ValueError:
                raise DatasetParseError(f"non-integer emotion code {row[0]!r}", row=row_no, path=str(path)) from None
            if code not in FER_CODES:
                raise DatasetParseError(f"emotion code {code} outside 0-6", row=row_no, path=str(path))
            tokens = row[1].split()
            if len(tokens) != n_pixels:
                raise DatasetParseError(
                    f"expected {n_pixels} pixel values, got {len(tokens)}", row=row_no, path=str(path)
                )
            try:
                values = np.array([int(t) for t in tokens], dtype=np.int64)
            except ValueError:
                raise DatasetParseError("non-integer pixel value", row=row_no, path=str(path)) from None
            if values.min() < 0 or values.max() > 255:
                raise DatasetParseError("pixel value outside 0-255", row=row_no, path=str(path))
            pixels = (values.reshape(IMAGE_SIZE, IMAGE_SIZE) / 255.0).astype(np.float32)
            images.append(LabeledImage(pixels, FER_CODES[code], str(row_no - 1)))
    return LabeledDataset(tuple(images), role=role, name=name or path.stem)


def write_fer_csv(dataset: LabeledDataset, path, usage: str = "Training") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["emotion", "pixels", "Usage"])
        for im in dataset:
            values = np.rint(im.pixels * 255.0).astype(np.int64).ravel()
            writer.writerow([FER_CODE_OF[im.label], " ".join(map(str, values)), usage])


def preprocess_to_square_grayscale(image) -> np.ndarray:
    """Center-crop to a square, convert to grayscale and resize to 48x48.

    ``image`` is an H x W or H x W x C array (C in {1, 3}) with intensities in
    [0, 1]. Portrait images lose rows at top and bottom, landscape images lose
    columns at both sides.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        gray = arr
    elif arr.ndim == 3 and arr.shape[2] == 1:
        gray = arr[:, :, 0]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        gray = arr @ np.array(LUMINANCE)
    else:
        raise ValueError(f"expected H x W x C with C in (1, 3), got shape {arr.shape}")
    h, w = gray.shape
    if h < 1 or w < 1:
        raise ValueError("image must be non-empty")
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    out = _kernels.crop_resize(gray.astype(np.float32), top, left, side, side, IMAGE_SIZE, IMAGE_SIZE)
    return np.clip(out, 0.0, 1.0)


def _read_image_file(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("L", "I;16", "I", "F"):
                arr = np.asarray(img, dtype=np.float64)
                scale = 65535.0 if img.mode == "I;16" else 255.0
                if img.mode == "F":
                    scale = 1.0
                return arr / scale
            return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DatasetParseError(f"cannot decode image: {exc}", path=str(path)) from exc


def load_image_directory(root, role: Role = Role.A, name: str | None = None) -> LabeledDataset:
    """Load ``root/<label-name>/<file>`` images; ids are ``<label>/<filename>``."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    images = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        label = EmotionLabel.from_name(sub.name)
        for f in sorted(sub.iterdir()):
            if f.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            pixels = preprocess_to_square_grayscale(_read_image_file(f))
            images.append(LabeledImage(pixels, label, f"{sub.name}/{f.name}"))
    if not images:
        logger.warning("no images found under %s", root)
    return LabeledDataset(tuple(images), role=role, name=name or root.name)


def save_image_directory(dataset: LabeledDataset, root) -> list[Path]:
    """Write images as 8-bit PNGs under ``root/<label-name>/``."""
    root = Path(root)
    written = []
    for k, im in enumerate(dataset):
        folder = root / im.label.label_name
        folder.mkdir(parents=True, exist_ok=True)
        stem = Path(im.id).stem.replace("#", "_") or f"img{k}"
        target = folder / f"{stem}.png"
        if target.exists():
            target = folder / f"{stem}_{k}.png"
        Image.fromarray(np.rint(im.pixels * 255.0).astype(np.uint8), mode="L").save(target)
        written.append(target)
    return written


def save_npz(dataset: LabeledDataset, path) -> None:
    np.savez_compressed(
        path,
        pixels=dataset.pixels,
        labels=dataset.labels,
        ids=np.array(dataset.ids, dtype=str),
        role=np.array(dataset.role.value),
        name=np.array(dataset.name),
    )


def load_npz(path, role: Role | None = None) -> LabeledDataset:
    with np.load(path, allow_pickle=False) as data:
        images = tuple(
            LabeledImage(px, EmotionLabel(int(lab)), str(i))
            for px, lab, i in zip(data["pixels"], data["labels"], data["ids"])
        )
        stored_role = Role(str(data["role"]))
        name = str(data["name"])
    return LabeledDataset(images, role=role or stored_role, name=name)


def load_dataset(path, role: Role) -> LabeledDataset:
    """Dispatch on path type: directory, FER ``.csv`` or cached ``.npz``."""
    path = Path(path)
    if path.is_dir():
        return load_image_directory(path, role=role)
    if path.suffix == ".csv":
        return load_fer_csv(path, role=role)
    if path.suffix == ".npz":
        return load_npz(path, role=role)
    raise ValueError(f"unsupported dataset path {path}")


def split_balanced(dataset: LabeledDataset, spec: SplitSpec) -> DatasetSplit:
    """Class-balanced train split; the rest alternates into validation and test.

    Each class contributes ``floor(train_fraction * m)`` training images, with
    ``m`` the minority class count. Remaining images of a class are shuffled and
    dealt alternately to validation and test, starting on a side chosen per
    class so neither half systematically gets the odd image.
    """
    counts = dataset.class_counts()
    present = np.flatnonzero(counts)
    if len(present) == 0:
        raise ValueError("cannot split an empty dataset")
    if counts[present].min() < 2:
        raise ValueError("every class needs at least two images")
    m = int(counts[present].min())
    n_train = int(np.floor(spec.train_fraction * m))
    if n_train == 0:
        raise ValueError("training split too small")
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for c in present:
        idx = dataset.indices_by_label[int(c)]
        perm = rng.permutation(idx)
        train.extend(perm[:n_train])
        rest = perm[n_train:]
        first_val = bool(rng.integers(2))
        for k, i in enumerate(rest):
            (val if (k % 2 == 0) == first_val else test).append(i)
    name = dataset.name
    return DatasetSplit(
        train=dataset.subset(sorted(train), name=f"{name}:train"),
        validation=dataset.subset(sorted(val), name=f"{name}:validation"),
        test=dataset.subset(sorted(test), name=f"{name}:test"),
    )
