"""Experiment grid: configuration, per-run orchestration and report files."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from . import nn as pnn
from .augment import AugmentationPolicy
from .checkpoint import Checkpoint
from .dataset import LabeledDataset, Role, SplitSpec, load_dataset, split_balanced
from .evalstats import Aggregate, RunResult, aggregate, aggregate_values, compare_approaches
from .training import (
    ConfigurationError,
    Strategy,
    TrainConfig,
    evaluate_accuracy,
    train_contrastive,
    train_probe,
    train_supervised,
)

logger = logging.getLogger(__name__)

# approach acronym -> (training strategy, contrastive loss)
APPROACHES = {
    "SC_c": (Strategy.TWO_VIEW_C, "supcon"),
    "SC_ca_union": (Strategy.UNION_CA, "supcon"),
    "SC_ca_cross": (Strategy.CROSS_CA, "supcon"),
    "UC_c": (Strategy.TWO_VIEW_C, "simclr"),
    "UC_ca_union": (Strategy.UNION_CA, "simclr"),
    "SL_c": (Strategy.SUPERVISED_C, "supcon"),
    "SL_ca": (Strategy.SUPERVISED_CA, "supcon"),
}
INIT_SEED_OFFSET = 10000
TRAIN_KEYS = {
    "n_epochs": int,
    "batch_size": int,
    "initial_lr": float,
    "momentum": float,
    "decay_factor": float,
    "probe_epochs": int,
    "probe_lr": float,
}
AUGMENT_KEYS = {f.name for f in fields(AugmentationPolicy)}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    dataset_a_path: str | None = None
    dataset_b_path: str | None = None
    strategies: tuple[str, ...] = ("SC_c",)
    train_fractions: tuple[float, ...] = (0.5,)
    augmentation_ratios: tuple[int, ...] = (1,)
    repetitions: int = 10
    base_seed: int = 0
    model: pnn.ModelConfig = field(default_factory=pnn.ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        for s in self.strategies:
            if s == "UC_ca_cross":
                raise SpecError("UC_ca_cross: cross-dataset composition needs labels and cannot be used with SimCLR")
            if s not in APPROACHES:
                raise SpecError(f"unknown strategy {s!r}; choose from {', '.join(APPROACHES)}")
        if not self.strategies or not self.train_fractions or not self.augmentation_ratios:
            raise SpecError("experiment grid is empty")
        if self.repetitions < 1:
            raise SpecError("repetitions must be positive")
        for f in self.train_fractions:
            SplitSpec(f, 0)
        for r in self.augmentation_ratios:
            if int(r) != r or r < 1:
                raise SpecError(f"augmentation ratio {r} is not a positive integer")
        for s in self.strategies:
            self.train_config(s, 1, 0)

    @property
    def needs_b(self) -> bool:
        return any(APPROACHES[s][0].uses_b for s in self.strategies)

    def cells(self) -> list[tuple[str, float, int]]:
        return [(s, f, r) for f in self.train_fractions for r in self.augmentation_ratios for s in self.strategies]

    def train_config(self, strategy: str, ratio: int, repetition: int) -> TrainConfig:
        strat, loss = APPROACHES[strategy]
        try:
            return replace(
                self.train,
                strategy=strat,
                contrastive_loss=loss,
                augmentation_ratio=int(ratio),
                seed=self.base_seed + repetition,
            )
        except ConfigurationError as exc:
            raise SpecError(f"{strategy}: {exc}") from exc

    def validate_paths(self) -> None:
        if self.dataset_a_path is None:
            raise SpecError("data.a_path is required")
        if self.needs_b and self.dataset_b_path is None:
            needing = [s for s in self.strategies if APPROACHES[s][0].uses_b]
            raise SpecError(f"{', '.join(needing)} need data.b_path")
        for p in (self.dataset_a_path, self.dataset_b_path):
            if p is not None and not Path(p).exists():
                raise SpecError(f"dataset path {p} does not exist")


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"config line {n}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def spec_from_mapping(values: dict[str, str], base_dir: Path | None = None) -> ExperimentSpec:
    values = dict(values)

    def path(key):
        v = values.pop(key, None)
        if v in (None, ""):
            return None
        p = Path(v)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return str(p)

    kwargs = {"dataset_a_path": path("data.a_path"), "dataset_b_path": path("data.b_path")}
    if "grid.strategies" in values:
        kwargs["strategies"] = tuple(_split_list(values.pop("grid.strategies")))
    if "grid.train_fractions" in values:
        kwargs["train_fractions"] = tuple(float(v) for v in _split_list(values.pop("grid.train_fractions")))
    if "grid.aug_ratios" in values:
        kwargs["augmentation_ratios"] = tuple(int(v) for v in _split_list(values.pop("grid.aug_ratios")))
    if "grid.repetitions" in values:
        kwargs["repetitions"] = int(values.pop("grid.repetitions"))
    if "seed" in values:
        kwargs["base_seed"] = int(values.pop("seed"))
    model_kwargs = {}
    if "model.encoder" in values:
        model_kwargs["encoder_kind"] = values.pop("model.encoder")
    if "model.proj_dim" in values:
        model_kwargs["proj_dim"] = int(values.pop("model.proj_dim"))
    kwargs["model"] = pnn.ModelConfig(**model_kwargs)
    train_kwargs, aug_kwargs = {}, {}
    if "loss.temperature" in values:
        train_kwargs["temperature"] = float(values.pop("loss.temperature"))
    for key in list(values):
        group, _, name = key.partition(".")
        if group == "train" and name in TRAIN_KEYS:
            train_kwargs[name] = TRAIN_KEYS[name](values.pop(key))
        elif group == "augment" and name in AUGMENT_KEYS:
            aug_kwargs[name] = float(values.pop(key))
    if values:
        raise SpecError(f"unknown config keys: {', '.join(sorted(values))}")
    if aug_kwargs:
        train_kwargs["policy"] = AugmentationPolicy(**aug_kwargs)
    try:
        kwargs["train"] = TrainConfig(**train_kwargs)
    except ConfigurationError as exc:
        raise SpecError(str(exc)) from exc
    return ExperimentSpec(**kwargs)


def load_spec(path=None, overrides: Sequence[str] = (), seed: int | None = None) -> ExperimentSpec:
    values: dict[str, str] = {}
    base = None
    if path is not None:
        path = Path(path)
        values = parse_config_text(path.read_text())
        base = path.parent
    for item in overrides:
        if "=" not in item:
            raise SpecError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    if seed is not None:
        values["seed"] = str(seed)
    return spec_from_mapping(values, base_dir=base)


def fingerprint(spec: ExperimentSpec, strategy: str, fraction: float, ratio: int) -> str:
    blob = json.dumps(
        {
            "strategy": strategy,
            "fraction": fraction,
            "ratio": ratio,
            "model": spec.model.to_dict(),
            "train": {k: v for k, v in asdict(spec.train).items() if k not in ("strategy", "seed", "augmentation_ratio", "contrastive_loss")},
            "seed": spec.base_seed,
        },
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ReportRow:
    strategy: str
    train_fraction: float
    augmentation_ratio: int
    repetition: int
    validation_accuracy: float
    test_accuracy: float
    wall_time_seconds: float

    @property
    def cell(self) -> tuple[str, float, int]:
        return (self.strategy, self.train_fraction, self.augmentation_ratio)


ROW_FIELDS = [f.name for f in fields(ReportRow)]


def run_tag(strategy: str, fraction: float, ratio: int, repetition: int) -> str:
    return f"{strategy}_f{fraction:g}_x{ratio}_rep{repetition}"


@dataclass
class RunArtifacts:
    row: ReportRow
    batch_origins: list[list[str]] = field(default_factory=list)


def run_single(
    spec: ExperimentSpec,
    strategy: str,
    fraction: float,
    ratio: int,
    repetition: int,
    dataset_a: LabeledDataset,
    dataset_b: LabeledDataset | None = None,
    out_dir: Path | None = None,
    save_checkpoint: bool = False,
    record_batches: bool = False,
) -> RunArtifacts:
    """One repetition of one grid cell; validation and test always come from A."""
    start = time.perf_counter()
    torch.manual_seed(spec.base_seed + INIT_SEED_OFFSET + repetition)
    config = spec.train_config(strategy, ratio, repetition)
    split = split_balanced(dataset_a, SplitSpec(fraction, spec.base_seed + repetition))
    init_seed = spec.base_seed + INIT_SEED_OFFSET + repetition
    mcfg = replace(spec.model, parameter_seed=init_seed)
    encoder = pnn.build_encoder(mcfg)
    classifier = pnn.build_classifier(mcfg)
    tag = run_tag(strategy, fraction, ratio, repetition)
    log_fh = None
    if out_dir is not None:
        (out_dir / "logs").mkdir(parents=True, exist_ok=True)
        log_fh = (out_dir / "logs" / f"{tag}.jsonl").open("w")

    def on_metrics(rec):
        if log_fh is not None:
            log_fh.write(json.dumps(rec) + "\n")

    try:
        if config.strategy.contrastive:
            head = pnn.build_head(mcfg)
            res = train_contrastive(pnn.ContrastiveModel(encoder, head), split.train, config, dataset_b, on_metrics, record_batches)
            origins = res.batch_origins
            probe = train_probe(encoder, classifier, res.training_set, split.validation, config, on_metrics)
            best_val, best_epoch = probe.best_validation_accuracy, probe.best_epoch
            optim_state = probe.optimizer_state
        else:
            model = pnn.ClassifierModel(encoder, classifier)
            res = train_supervised(model, split.train, split.validation, config, dataset_b, on_metrics, record_batches)
            origins = res.batch_origins
            best_val, best_epoch = res.best_validation_accuracy, res.best_epoch
            optim_state = res.optimizer_state
    finally:
        if log_fh is not None:
            log_fh.close()
    model = pnn.ClassifierModel(encoder, classifier)
    test_acc = evaluate_accuracy(model, split.test)
    row = ReportRow(strategy, fraction, int(ratio), repetition, best_val, test_acc, time.perf_counter() - start)
    if out_dir is not None and save_checkpoint:
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        Checkpoint(
            model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
            optimizer_state=optim_state,
            epoch=best_epoch,
            best_validation_accuracy=best_val,
            rng_state={"torch": torch.get_rng_state(), "split_seed": spec.base_seed + repetition},
            meta={"model": mcfg.to_dict(), "strategy": strategy, "train_fraction": fraction, "augmentation_ratio": int(ratio), "repetition": repetition},
        ).save(out_dir / "checkpoints" / f"{tag}.pcn")
    if out_dir is not None and record_batches:
        with (out_dir / "logs" / f"{tag}_batches.txt").open("w") as fh:
            for ids in origins:
                fh.write(" ".join(ids) + "\n")
    return RunArtifacts(row, origins)


def load_model_from_checkpoint(path) -> tuple[pnn.ClassifierModel, Checkpoint]:
    ck = Checkpoint.load(path)
    cfg = pnn.ModelConfig(**ck.meta["model"])
    model = pnn.ClassifierModel(pnn.build_encoder(cfg), pnn.build_classifier(cfg))
    model.load_state_dict(ck.model_state)
    model.eval()
    return model, ck


def write_rows(rows: Iterable[ReportRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, f) for f in ROW_FIELDS)])


def read_rows(path) -> list[ReportRow]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ROW_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(ROW_FIELDS)}")
        return [
            ReportRow(
                r["strategy"],
                float(r["train_fraction"]),
                int(r["augmentation_ratio"]),
                int(r["repetition"]),
                float(r["validation_accuracy"]),
                float(r["test_accuracy"]),
                float(r["wall_time_seconds"]),
            )
            for r in reader
        ]


_WORKER: dict = {}


def _worker_init(spec, datasets, num_threads):
    torch.set_num_threads(num_threads)
    _WORKER["spec"] = spec
    _WORKER["datasets"] = datasets


def _worker_run(job):
    spec = _WORKER["spec"]
    a, b = _WORKER["datasets"]
    strategy, fraction, ratio, rep, out_dir, save_ckpt, record = job
    try:
        return run_single(spec, strategy, fraction, ratio, rep, a, b, out_dir, save_ckpt, record).row, None
    except Exception:
        return None, traceback.format_exc()


@dataclass
class ExperimentOutcome:
    rows: list[ReportRow]
    failures: list[str]

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def load_spec_datasets(spec: ExperimentSpec) -> tuple[LabeledDataset, LabeledDataset | None]:
    spec.validate_paths()
    a = load_dataset(spec.dataset_a_path, Role.A)
    b = load_dataset(spec.dataset_b_path, Role.B) if spec.dataset_b_path and spec.needs_b else None
    return a, b


def run_experiment(
    spec: ExperimentSpec,
    out_dir,
    jobs: int = 1,
    datasets: tuple[LabeledDataset, LabeledDataset | None] | None = None,
    save_checkpoints: bool = False,
    record_batches: bool = False,
    cells: Sequence[tuple[str, float, int]] | None = None,
) -> ExperimentOutcome:
    """Run every (cell, repetition), then write rows.csv and the report files.

    Failed runs are logged and skipped; the outcome's exit code is then 1.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if datasets is None:
        datasets = load_spec_datasets(spec)
    elif spec.needs_b and datasets[1] is None:
        raise SpecError("grid needs dataset B")
    jobs_list = [
        (s, f, r, rep, out_dir, save_checkpoints, record_batches)
        for (s, f, r) in (cells or spec.cells())
        for rep in range(spec.repetitions)
    ]
    results = []
    if jobs <= 1:
        _worker_init(spec, datasets, torch.get_num_threads())
        results = [_worker_run(j) for j in jobs_list]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init, initargs=(spec, datasets, 1)) as ex:
            results = list(ex.map(_worker_run, jobs_list))
    rows, failures = [], []
    for job, (row, err) in zip(jobs_list, results):
        if row is None:
            tag = run_tag(*job[:4])
            logger.error("run %s failed:\n%s", tag, err)
            failures.append(f"{tag}: {err.strip().splitlines()[-1]}")
        else:
            rows.append(row)
    write_rows(rows, out_dir / "rows.csv")
    done = {r.cell for r in rows}
    notes = list(failures)
    for cell in dict.fromkeys(j[:3] for j in jobs_list):
        if cell not in done:
            notes.append(f"{cell[0]} fraction {cell[1]:g} ratio {cell[2]}: omitted, every repetition failed")
    emit_report(rows, out_dir, failures=notes)
    return ExperimentOutcome(rows, failures)


@dataclass(frozen=True)
class CellSummary:
    strategy: str
    train_fraction: float
    augmentation_ratio: int
    n: int
    validation: Aggregate
    test: Aggregate


def _agg_or_single(values: list[float]) -> Aggregate:
    if len(values) >= 2:
        return aggregate_values(values)
    v = values[0]
    return Aggregate(1, v, float("nan"), (float("nan"), float("nan")))


def summarize_cells(rows: Sequence[ReportRow]) -> list[CellSummary]:
    cells: dict[tuple, list[ReportRow]] = {}
    for r in rows:
        cells.setdefault(r.cell, []).append(r)
    out = []
    for (s, f, x), rs in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        rs = sorted(rs, key=lambda r: r.repetition)
        out.append(
            CellSummary(
                s, f, x, len(rs),
                _agg_or_single([r.validation_accuracy for r in rs]),
                _agg_or_single([r.test_accuracy for r in rs]),
            )
        )
    return out


@dataclass(frozen=True)
class ComparisonLine:
    train_fraction: float
    augmentation_ratio: int
    best: str
    best_accuracy: float
    runner_up: str
    runner_up_accuracy: float
    p_value: float
    tie: bool


def compare_cells(rows: Sequence[ReportRow], warnings: list[str] | None = None) -> list[ComparisonLine]:
    groups: dict[tuple, dict[str, list[ReportRow]]] = {}
    for r in rows:
        groups.setdefault((r.train_fraction, r.augmentation_ratio), {}).setdefault(r.strategy, []).append(r)
    out = []
    for (f, x), by_strategy in sorted(groups.items()):
        if len(by_strategy) < 2:
            continue
        sizes = {len(v) for v in by_strategy.values()}
        if len(sizes) != 1 or min(sizes) < 2:
            if warnings is not None:
                warnings.append(f"fraction {f:g} ratio {x}: unequal or too few repetitions, comparison skipped")
            continue
        summaries = {
            s: aggregate([RunResult(r.repetition, r.validation_accuracy, r.test_accuracy) for r in sorted(v, key=lambda r: r.repetition)])
            for s, v in by_strategy.items()
        }
        c = compare_approaches(summaries)
        out.append(ComparisonLine(f, x, c.best, c.best_accuracy, c.runner_up, c.runner_up_accuracy, c.pvalue, c.tie))
    return out


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.4f}"


def emit_report(rows: Sequence[ReportRow], out_dir, failures: Sequence[str] = (), svg: bool = True) -> dict[str, Path]:
    """Write summary.txt, comparisons.csv, plotdata/*.csv and plots/*.svg.

    Output depends only on ``rows`` and ``failures``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    warnings = list(failures)
    cells = summarize_cells(rows)
    comparisons = compare_cells(rows, warnings)
    for c in cells:
        if c.n < 2:
            warnings.append(f"{c.strategy} fraction {c.train_fraction:g} ratio {c.augmentation_ratio}: one repetition, no spread")
    lines = ["# per-cell accuracy (mean, sample std, 95% CI)", ""]
    lines.append("strategy\ttrain_fraction\taug_ratio\tn\tval_mean\tval_std\tval_ci_low\tval_ci_high\ttest_mean\ttest_std\ttest_ci_low\ttest_ci_high")
    for c in cells:
        lines.append(
            "\t".join(
                [c.strategy, f"{c.train_fraction:g}", str(c.augmentation_ratio), str(c.n)]
                + [_fmt(v) for v in (c.validation.mean, c.validation.std, *c.validation.ci95)]
                + [_fmt(v) for v in (c.test.mean, c.test.std, *c.test.ci95)]
            )
        )
    lines += ["", "# best vs runner-up (one-sided Mann-Whitney U on test accuracy)", ""]
    for c in comparisons:
        flag = "  [tie]" if c.tie else ""
        lines.append(
            f"fraction {c.train_fraction:g} ratio {c.augmentation_ratio}: best {c.best} {_fmt(c.best_accuracy)}, "
            f"runner-up {c.runner_up} {_fmt(c.runner_up_accuracy)}, p = {c.p_value:.4g}{flag}"
        )
    lines += ["", "# warnings", ""]
    lines += warnings or ["none"]
    paths = {"summary": out_dir / "summary.txt", "comparisons": out_dir / "comparisons.csv"}
    paths["summary"].write_text("\n".join(lines) + "\n")
    with paths["comparisons"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["train_fraction", "augmentation_ratio", "best", "best_accuracy", "runner_up", "runner_up_accuracy", "p_value", "tie"])
        for c in comparisons:
            w.writerow([f"{c.train_fraction:g}", c.augmentation_ratio, c.best, repr(c.best_accuracy), c.runner_up, repr(c.runner_up_accuracy), repr(c.p_value), int(c.tie)])
    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    fractions = sorted({c.train_fraction for c in cells})
    for f in fractions:
        for split in ("validation", "test"):
            p = plot_dir / f"fraction_{f:g}_{split}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["strategy", "augmentation_ratio", "mean", "std", "ci_low", "ci_high", "n"])
                for c in cells:
                    if c.train_fraction != f:
                        continue
                    a = getattr(c, split)
                    w.writerow([c.strategy, c.augmentation_ratio, repr(a.mean), repr(a.std), repr(a.ci95[0]), repr(a.ci95[1]), c.n])
            paths[f"plotdata_{f:g}_{split}"] = p
        if svg:
            (out_dir / "plots").mkdir(exist_ok=True)
            p = out_dir / "plots" / f"fraction_{f:g}_test.svg"
            p.write_text(line_chart_svg([c for c in cells if c.train_fraction == f], title=f"test accuracy, training split {f:g}"))
            paths[f"plot_{f:g}"] = p
    return paths


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def line_chart_svg(cells: Sequence[CellSummary], title: str = "", width: int = 480, height: int = 320) -> str:
    """Mean test accuracy against augmentation ratio, one polyline per strategy."""
    margin = 48
    by_strategy: dict[str, list[CellSummary]] = {}
    for c in cells:
        by_strategy.setdefault(c.strategy, []).append(c)
    ratios = sorted({c.augmentation_ratio for c in cells}) or [1]
    lo_x, hi_x = min(ratios), max(ratios)
    ys = [c.test.mean for c in cells] or [0.0]
    lo_y, hi_y = max(0.0, min(ys) - 0.05), min(1.0, max(ys) + 0.05)
    if hi_y <= lo_y:
        hi_y = lo_y + 0.1

    def sx(x):
        return margin + (0.5 if hi_x == lo_x else (x - lo_x) / (hi_x - lo_x)) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - lo_y) / (hi_y - lo_y) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2}" y="16" text-anchor="middle">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin - 4}" y="{sy(lo_y):.1f}" text-anchor="end">{lo_y:.2f}</text>',
        f'<text x="{margin - 4}" y="{sy(hi_y):.1f}" text-anchor="end">{hi_y:.2f}</text>',
    ]
    for r in ratios:
        parts.append(f'<text x="{sx(r):.1f}" y="{height - margin + 14}" text-anchor="middle">x{r}</text>')
    for k, (s, cs) in enumerate(sorted(by_strategy.items())):
        color = _PALETTE[k % len(_PALETTE)]
        cs = sorted(cs, key=lambda c: c.augmentation_ratio)
        pts = " ".join(f"{sx(c.augmentation_ratio):.1f},{sy(c.test.mean):.1f}" for c in cs)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for c in cs:
            parts.append(f'<circle cx="{sx(c.augmentation_ratio):.1f}" cy="{sy(c.test.mean):.1f}" r="3" fill="{color}"/>')
        parts.append(f'<text x="{width - margin + 4}" y="{margin + 14 * k}" fill="{color}">{s}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
