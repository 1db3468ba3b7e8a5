"""Automatic evaluation for translated videos.

Covers the three task families and their table-style summaries:

* colorization -- mask L2 between source and translation, plus foreground
  intensity mean and per-frame color spread of the translation;
* volumetric -- root-mean-square error against a paired ground-truth clip;
* segmentation -- per-frame pixel accuracy and the Frobenius distance
  between pixel-class transition matrices, at several label-denoising
  levels.

Every metric declares its normalization explicitly (mean, RMS, or x100) so
numbers are comparable across resolutions. All functions are pure; the
evaluation driver aggregates per-clip values as mean +/- population std in
a fixed clip-id order, so reports are deterministic.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ContaminationError, DataError
from .video_core import DatasetManifest, VideoTensor, load_clip

# Shared with the dataset generators: a pixel is foreground when its largest
# channel exceeds this many storage units.
BG_THRESHOLD = 10

REPORT_SCHEMA_VERSION = 1

TASK_COLORIZATION = "colorization"
TASK_VOLUMETRIC = "volumetric"
TASK_SEGMENTATION = "segmentation"

TranslateFn = Callable[[VideoTensor], VideoTensor]


# ---------------------------------------------------------------------------
# Segmentation label videos


@dataclass(frozen=True)
class SegmentationVideo:
    """Dense per-pixel class labels for every frame of a clip."""

    labels: np.ndarray  # (d, h, w) integer class indices
    n_classes: int
    palette: np.ndarray | None = None  # (K, 3) uint8 RGB per class

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise DataError(f"labels must be (d, h, w), got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("labels must be integers")
        if self.n_classes < 1:
            raise DataError("need at least one class")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError(
                f"labels must lie in [0, {self.n_classes}), got "
                f"[{labels.min()}, {labels.max()}]"
            )
        labels = labels.astype(np.int64, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.palette is not None:
            pal = np.asarray(self.palette, dtype=np.uint8)
            if pal.shape != (self.n_classes, 3):
                raise DataError(
                    f"palette must be ({self.n_classes}, 3), got {pal.shape}"
                )
            if len({tuple(c) for c in pal.tolist()}) != self.n_classes:
                raise DataError("palette colors must be pairwise distinct")
            object.__setattr__(self, "palette", pal)

    @property
    def depth(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix of pixel class transitions between frames.

    Entry [i, j] is the probability that a pixel of class i at frame t is
    class j at frame t+1. Classes never observed at a source frame get an
    identity row, keeping every row stochastic.
    """

    matrix: np.ndarray  # (K, K) float64

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataError(f"transition matrix must be square, got {m.shape}")
        if m.size and m.min() < 0:
            raise DataError("transition probabilities must be non-negative")
        if not np.allclose(m.sum(axis=1), 1.0, atol=1e-12):
            raise DataError("every transition-matrix row must sum to 1")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]


def rgb_to_labels(clip: VideoTensor, palette: np.ndarray) -> SegmentationVideo:
    """Map each pixel to its nearest palette color (squared RGB distance).

    Ties break toward the lowest class index.
    """
    palette = np.asarray(palette)
    if palette.ndim != 2 or palette.shape[1] != 3 or palette.shape[0] < 1:
        raise DataError(f"palette must be (K, 3) with K >= 1, got {palette.shape}")
    if clip.channels != 3:
        raise DataError(f"label decoding needs an RGB clip, got c={clip.channels}")
    pal = palette.astype(np.int64)
    labels = np.empty(clip.shape[:3], dtype=np.int64)
    for t in range(clip.depth):  # frame at a time keeps the distance table small
        flat = clip.data[t].reshape(-1, 3).astype(np.int64)
        dists = ((flat[:, None, :] - pal[None, :, :]) ** 2).sum(axis=2)
        labels[t] = dists.argmin(axis=1).reshape(clip.shape[1:3])
    return SegmentationVideo(labels=labels, n_classes=pal.shape[0], palette=palette.astype(np.uint8))


def labels_to_rgb(seg: SegmentationVideo) -> VideoTensor:
    """Encode labels back to an RGB clip via the class palette."""
    if seg.palette is None:
        raise DataError("segmentation video has no palette to encode with")
    return VideoTensor(seg.palette[seg.labels], space="storage")


# ---------------------------------------------------------------------------
# Scalar metrics


def _foreground_mask(v: VideoTensor, threshold: int) -> np.ndarray:
    return v.data.max(axis=3) > threshold


def shape_l2(reference: VideoTensor, translated: VideoTensor, threshold: int = BG_THRESHOLD) -> float:
    """Mean squared difference of binary foreground masks, scaled x100."""
    if reference.shape[:3] != translated.shape[:3]:
        raise DataError(
            f"shape mismatch: {reference.shape[:3]} vs {translated.shape[:3]}"
        )
    mask_ref = _foreground_mask(reference, threshold).astype(np.float64)
    mask_tr = _foreground_mask(translated, threshold).astype(np.float64)
    return float(((mask_ref - mask_tr) ** 2).mean() * 100.0)


def color_stats(clip: VideoTensor, bg_threshold: int = BG_THRESHOLD) -> tuple[float, float]:
    """Foreground intensity mean and per-frame color spread.

    Per frame, collect every channel value of pixels whose max channel
    exceeds the threshold; the frame contributes its mean and population
    standard deviation. Both are averaged across frames; frames with no
    foreground are skipped. An entirely background clip is an error.
    """
    if clip.channels != 3:
        raise DataError(f"color stats need an RGB clip, got c={clip.channels}")
    if clip.space != "storage":
        raise DataError("color stats operate on storage-space clips")
    means, sigmas = [], []
    for t in range(clip.depth):
        frame = clip.data[t].astype(np.float64)
        fg = frame.max(axis=2) > bg_threshold
        if not fg.any():
            continue
        values = frame[fg].ravel()
        means.append(values.mean())
        sigmas.append(values.std())
    if not means:
        raise DataError("clip has no foreground pixels anywhere")
    return float(np.mean(means)), float(np.mean(sigmas))


def volume_l2(a: VideoTensor, b: VideoTensor) -> float:
    """Root-mean-square difference over all elements (storage space)."""
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.sqrt((diff**2).mean()))


def pixel_accuracy(pred: SegmentationVideo, gt: SegmentationVideo) -> float:
    """Fraction of agreeing pixels, averaged per frame then across frames."""
    if pred.labels.shape != gt.labels.shape:
        raise DataError(
            f"shape mismatch: {pred.labels.shape} vs {gt.labels.shape}"
        )
    if pred.n_classes != gt.n_classes:
        raise DataError(f"class count mismatch: {pred.n_classes} vs {gt.n_classes}")
    per_frame = (pred.labels == gt.labels).mean(axis=(1, 2))
    return float(per_frame.mean())


def transition_matrix(seg: SegmentationVideo) -> TransitionMatrix:
    """Estimate the pixel-class transition matrix from consecutive frames."""
    if seg.depth < 2:
        raise DataError(f"need at least 2 frames to count transitions, got {seg.depth}")
    k = seg.n_classes
    src = seg.labels[:-1].ravel()
    dst = seg.labels[1:].ravel()
    counts = (
        np.bincount(src * k + dst, minlength=k * k).reshape(k, k).astype(np.float64)
    )
    row_sums = counts.sum(axis=1)
    matrix = np.eye(k)
    observed = row_sums > 0
    matrix[observed] = counts[observed] / row_sums[observed, None]
    return TransitionMatrix(matrix=matrix)


def transition_distance(a: TransitionMatrix, b: TransitionMatrix) -> float:
    """Frobenius norm of the difference of two transition matrices."""
    if a.n_classes != b.n_classes:
        raise DataError(f"class count mismatch: {a.n_classes} vs {b.n_classes}")
    return float(np.linalg.norm(a.matrix - b.matrix, ord="fro"))


def _majority_filter_frame(frame: np.ndarray, n_classes: int) -> np.ndarray:
    h, w = frame.shape
    counts = np.zeros((n_classes, h, w), dtype=np.int32)
    onehot = np.stack([(frame == k).astype(np.int32) for k in range(n_classes)])
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            src_r = slice(max(0, -dr), h - max(0, dr))
            dst_r = slice(max(0, dr), h - max(0, -dr))
            src_c = slice(max(0, -dc), w - max(0, dc))
            dst_c = slice(max(0, dc), w - max(0, -dc))
            counts[:, dst_r, dst_c] += onehot[:, src_r, src_c]
    top = counts.max(axis=0)
    winner = counts.argmax(axis=0)
    unique = (counts == top).sum(axis=0) == 1
    return np.where(unique, winner, frame)


def denoise_labels(seg: SegmentationVideo, level: int) -> SegmentationVideo:
    """Apply ``level`` passes of a per-frame 3x3 spatial majority filter.

    The neighborhood is clipped at frame borders; a tied vote keeps the
    center label. Level 0 is the identity. Deliberately spatial-only:
    temporal filtering would hide the motion artifacts being measured.
    """
    if level < 0:
        raise ValueError(f"denoise level must be >= 0, got {level}")
    labels = seg.labels
    for _ in range(level):
        labels = np.stack(
            [_majority_filter_frame(labels[t], seg.n_classes) for t in range(seg.depth)]
        )
    return SegmentationVideo(labels=labels, n_classes=seg.n_classes, palette=seg.palette)


# ---------------------------------------------------------------------------
# Evaluation driver


@dataclass
class MetricReport:
    """Aggregated per-task results, one model against one dataset."""

    task: str
    model_id: str
    dataset_id: str
    n_clips: int
    metrics: dict[str, dict[str, float]]  # name -> {"mean": ..., "std": ...}
    denoise_levels: list[int] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    def __post_init__(self):
        for name, stat in self.metrics.items():
            for key in ("mean", "std"):
                if not np.isfinite(stat[key]):
                    raise DataError(f"metric {name}.{key} is not finite")

    def to_json(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "task": self.task,
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "n_clips": self.n_clips,
            "denoise_levels": self.denoise_levels,
            "metrics": self.metrics,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        doc = json.loads(Path(path).read_text())
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise DataError(f"{path}: unsupported report schema version")
        return cls(
            task=doc["task"],
            model_id=doc["model_id"],
            dataset_id=doc["dataset_id"],
            n_clips=doc["n_clips"],
            metrics=doc["metrics"],
            denoise_levels=doc["denoise_levels"],
        )


def check_contamination(manifest: DatasetManifest) -> None:
    """A clip id in both splits invalidates every downstream number."""
    train_ids = {c.clip_id for c in manifest.train_clips()}
    test_ids = {c.clip_id for c in manifest.test_clips()}
    overlap = train_ids & test_ids
    if overlap:
        raise ContaminationError(
            f"{manifest.domain_name}: clip ids in both train and test: {sorted(overlap)}"
        )


def _aggregate(values_by_metric: dict[str, list[float]], n_clips: int, **meta) -> MetricReport:
    metrics = {
        name: {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        for name, vals in values_by_metric.items()
    }
    return MetricReport(n_clips=n_clips, metrics=metrics, **meta)


def evaluate_colorization(
    translate_fn: TranslateFn,
    manifest: DatasetManifest,
    model_id: str,
    bg_threshold: int = BG_THRESHOLD,
) -> MetricReport:
    """Shape preservation and color statistics of translated test clips."""
    check_contamination(manifest)
    values: dict[str, list[float]] = {"shape_l2": [], "intensity_mean": [], "color_sigma": []}
    entries = sorted(manifest.test_clips(), key=lambda e: e.clip_id)
    if not entries:
        raise DataError(f"{manifest.domain_name}: no test clips to evaluate")
    for entry in entries:
        source = load_clip(manifest.clip_path(entry))
        translated = translate_fn(source)
        values["shape_l2"].append(shape_l2(source, translated, bg_threshold))
        mean, sigma = color_stats(translated, bg_threshold)
        values["intensity_mean"].append(mean)
        values["color_sigma"].append(sigma)
    return _aggregate(
        values,
        len(entries),
        task=TASK_COLORIZATION,
        model_id=model_id,
        dataset_id=manifest.domain_name,
    )


def evaluate_volumetric(
    translate_fn: TranslateFn, manifest: DatasetManifest, model_id: str
) -> MetricReport:
    """RMS error of translated test clips against their paired ground truth."""
    check_contamination(manifest)
    entries = sorted(manifest.test_clips(), key=lambda e: e.clip_id)
    if not entries:
        raise DataError(f"{manifest.domain_name}: no test clips to evaluate")
    values: dict[str, list[float]] = {"volume_l2": []}
    for entry in entries:
        gt_path = manifest.gt_clip_path(entry)
        if gt_path is None:
            raise DataError(
                f"clip {entry.clip_id} has no ground-truth counterpart recorded"
            )
        translated = translate_fn(load_clip(manifest.clip_path(entry)))
        values["volume_l2"].append(volume_l2(translated, load_clip(gt_path)))
    return _aggregate(
        values,
        len(entries),
        task=TASK_VOLUMETRIC,
        model_id=model_id,
        dataset_id=manifest.domain_name,
    )


def evaluate_segmentation(
    translate_fn: TranslateFn,
    manifest: DatasetManifest,
    model_id: str,
    palette: np.ndarray,
    denoise_levels: Sequence[int] = (0, 1, 2),
) -> MetricReport:
    """Pixel accuracy plus transition-matrix distances at each denoise level."""
    check_contamination(manifest)
    entries = sorted(manifest.test_clips(), key=lambda e: e.clip_id)
    if not entries:
        raise DataError(f"{manifest.domain_name}: no test clips to evaluate")
    levels = list(denoise_levels)
    values: dict[str, list[float]] = {"accuracy": []}
    for level in levels:
        values[f"transition_distance_level{level}"] = []
    for entry in entries:
        gt_path = manifest.gt_clip_path(entry)
        if gt_path is None:
            raise DataError(
                f"clip {entry.clip_id} has no ground-truth segmentation recorded"
            )
        pred = rgb_to_labels(translate_fn(load_clip(manifest.clip_path(entry))), palette)
        gt = rgb_to_labels(load_clip(gt_path), palette)
        values["accuracy"].append(pixel_accuracy(pred, gt))
        for level in levels:
            pi_pred = transition_matrix(denoise_labels(pred, level))
            pi_gt = transition_matrix(denoise_labels(gt, level))
            values[f"transition_distance_level{level}"].append(
                transition_distance(pi_pred, pi_gt)
            )
    report = _aggregate(
        values,
        len(entries),
        task=TASK_SEGMENTATION,
        model_id=model_id,
        dataset_id=manifest.domain_name,
    )
    report.denoise_levels = levels
    return report


def evaluate(
    translate_fn: TranslateFn,
    manifest: DatasetManifest,
    task: str,
    model_id: str,
    palette: np.ndarray | None = None,
    denoise_levels: Sequence[int] = (0, 1, 2),
    bg_threshold: int = BG_THRESHOLD,
) -> MetricReport:
    """Run the metric set of ``task`` over the manifest's test split."""
    if task == TASK_COLORIZATION:
        return evaluate_colorization(translate_fn, manifest, model_id, bg_threshold)
    if task == TASK_VOLUMETRIC:
        return evaluate_volumetric(translate_fn, manifest, model_id)
    if task == TASK_SEGMENTATION:
        if palette is None:
            raise DataError("segmentation evaluation needs a class palette")
        return evaluate_segmentation(
            translate_fn, manifest, model_id, palette, denoise_levels
        )
    raise DataError(f"unknown evaluation task {task!r}")


def write_comparison_csv(reports: Sequence[MetricReport], path: str | Path) -> Path:
    """One row per model, one mean/std column pair per metric."""
    if not reports:
        raise DataError("no reports to collate")
    metric_names: list[str] = []
    for report in reports:
        for name in report.metrics:
            if name not in metric_names:
                metric_names.append(name)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["method", "task", "dataset", "n_clips"]
        for name in metric_names:
            header += [f"{name}_mean", f"{name}_std"]
        writer.writerow(header)
        for report in reports:
            row = [report.model_id, report.task, report.dataset_id, report.n_clips]
            for name in metric_names:
                stat = report.metrics.get(name)
                row += (
                    [f"{stat['mean']:.6g}", f"{stat['std']:.6g}"]
                    if stat
                    else ["", ""]
                )
            writer.writerow(row)
    return path
