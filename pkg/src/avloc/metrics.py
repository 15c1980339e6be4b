"""Localization and segmentation evaluation.

Covers the box/mask IoU family (cIoU with a fixed top-fraction threshold,
Adaptive cIoU with a ground-truth-sized threshold, AUC over the success
threshold sweep), the interactive variants that require every sound source
of an image to be localized, the extended-set detection metrics (AP,
max-F1, LocAcc) over positive and non-matching pairs, and the segmentation
protocol (mIoU, F-score).

All thresholding depends only on the rank order of heatmap values, so the
metrics are invariant under strictly monotone transforms of the heatmap.
Heatmaps are bilinearly resized to ground-truth resolution before
thresholding by default (configurable).
"""

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kernels import (
    bilinear_resize,
    ensure_binary,
    ensure_grid,
    top_count_mask,
    top_fraction_mask,
)
from .parallel import parallel_map


@dataclass(frozen=True)
class MetricConfig:
    """Evaluation conventions, echoed verbatim into every report."""

    fraction: float = 0.5  # top-pixel fraction for the fixed-threshold variant
    success_threshold: float = 0.5
    success_strict: bool = False  # False: IoU >= thr counts; True: IoU > thr
    auc_step: float = 0.01
    threshold_space: str = "ground_truth"  # threshold after resize; "heatmap": before
    confidence: str = "max"  # sample confidence for detection metrics; or "mean"
    fscore_beta2: float = 0.3

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValidationError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.threshold_space not in ("ground_truth", "heatmap"):
            raise ValidationError(f"bad threshold_space {self.threshold_space!r}")
        if self.confidence not in ("max", "mean"):
            raise ValidationError(f"bad confidence {self.confidence!r}")
        if self.auc_step <= 0 or self.auc_step > 1:
            raise ValidationError(f"bad auc_step {self.auc_step}")

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "success_threshold": self.success_threshold,
            "success_strict": self.success_strict,
            "auc_step": self.auc_step,
            "threshold_space": self.threshold_space,
            "confidence": self.confidence,
            "fscore_beta2": self.fscore_beta2,
        }

    def is_success(self, iou_value: float) -> bool:
        if self.success_strict:
            return iou_value > self.success_threshold
        return iou_value >= self.success_threshold


@dataclass(frozen=True)
class GroundTruth:
    """Per-source annotation: bounding boxes and/or a binary mask.

    Boxes are (x_min, y_min, x_max, y_max) pixel coordinates,
    inclusive-exclusive, with x along columns and y along rows. Multiple
    boxes are rasterized as their union.
    """

    resolution: tuple  # (H, W)
    boxes: tuple = ()
    mask: np.ndarray | None = None

    def __post_init__(self):
        h, w = self.resolution
        if h < 1 or w < 1:
            raise ValidationError(f"bad resolution {self.resolution}")
        object.__setattr__(self, "boxes", tuple(tuple(int(c) for c in b) for b in self.boxes))
        if self.mask is None and not self.boxes:
            raise ValidationError("ground truth needs boxes or a mask")
        for box in self.boxes:
            x0, y0, x1, y1 = box
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise ValidationError(f"box {box} out of bounds for resolution {self.resolution}")
        if self.mask is not None:
            m = ensure_binary(self.mask, "gt mask")
            if m.shape != (h, w):
                raise ValidationError(f"gt mask shape {m.shape} != resolution {self.resolution}")
            object.__setattr__(self, "mask", m)

    def rasterize(self) -> np.ndarray:
        """Binary (H, W) grid: the mask if present, else the union of boxes."""
        if self.mask is not None:
            return self.mask
        h, w = self.resolution
        grid = np.zeros((h, w))
        for x0, y0, x1, y1 in self.boxes:
            grid[y0:y1, x0:x1] = 1.0
        return grid

    def area(self) -> int:
        return int(self.rasterize().sum())


@dataclass(frozen=True)
class EvalSample:
    """One evaluation unit: a heatmap against one source's annotation.

    ``gt`` may be None only for non-matching (negative) pairs of the
    extended protocol. ``group_id`` ties together the sources of one image
    for the interactive metrics.
    """

    sample_id: object
    heatmap: np.ndarray
    gt: GroundTruth | None = None
    group_id: object = None
    positive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "heatmap", ensure_grid(self.heatmap, "heatmap"))
        if self.positive and self.gt is None:
            raise ValidationError(f"sample {self.sample_id!r}: positive sample without ground truth")


def iou(pred_mask, gt_mask) -> float:
    """Intersection over union of two binary masks; 0.0 when the union is empty."""
    p = ensure_binary(pred_mask, "prediction mask")
    g = ensure_binary(gt_mask, "gt mask")
    if p.shape != g.shape:
        raise ValidationError(f"mask shape mismatch {p.shape} vs {g.shape}")
    inter = float((p * g).sum())
    union = float(p.sum() + g.sum() - inter)
    if union == 0:
        return 0.0
    return inter / union


def _nearest_resize_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src_h, src_w = mask.shape
    rows = np.clip(np.round((np.arange(out_h) + 0.5) * src_h / out_h - 0.5).astype(int), 0, src_h - 1)
    cols = np.clip(np.round((np.arange(out_w) + 0.5) * src_w / out_w - 0.5).astype(int), 0, src_w - 1)
    return mask[np.ix_(rows, cols)]


def resized_heatmap(sample: EvalSample) -> np.ndarray:
    """Heatmap at ground-truth resolution (bilinear; identity when equal)."""
    if sample.gt is None or sample.heatmap.shape == tuple(sample.gt.resolution):
        return sample.heatmap
    h, w = sample.gt.resolution
    return bilinear_resize(sample.heatmap, h, w)


def prediction_mask(sample: EvalSample, cfg: MetricConfig, adaptive: bool) -> np.ndarray:
    """Thresholded prediction at ground-truth resolution.

    Fixed variant keeps the top cfg.fraction of pixels; adaptive keeps
    exactly as many pixels as the ground-truth area.
    """
    if sample.gt is None:
        raise ValidationError(f"sample {sample.sample_id!r}: no ground truth")
    gt_area = sample.gt.area()
    if gt_area < 1:
        raise ValidationError(f"sample {sample.sample_id!r}: empty ground truth")
    if cfg.threshold_space == "ground_truth":
        grid = resized_heatmap(sample)
        return top_count_mask(grid, min(gt_area, grid.size)) if adaptive \
            else top_fraction_mask(grid, cfg.fraction)
    # Threshold at native heatmap resolution, then nearest-resize the mask.
    grid = sample.heatmap
    if adaptive:
        # Keep the same area fraction as the ground truth occupies.
        h, w = sample.gt.resolution
        count = max(1, min(grid.size, round(gt_area / (h * w) * grid.size)))
        mask = top_count_mask(grid, count)
    else:
        mask = top_fraction_mask(grid, cfg.fraction)
    h, w = sample.gt.resolution
    if mask.shape != (h, w):
        mask = _nearest_resize_mask(mask, h, w)
    return mask


def ciou(sample: EvalSample, cfg: MetricConfig | None = None) -> tuple[float, bool]:
    """Fixed-threshold IoU: top-fraction prediction mask vs ground truth."""
    cfg = cfg or MetricConfig()
    value = iou(prediction_mask(sample, cfg, adaptive=False), sample.gt.rasterize())
    return value, cfg.is_success(value)


def adaptive_ciou(sample: EvalSample, cfg: MetricConfig | None = None) -> tuple[float, bool]:
    """Adaptive-threshold IoU: prediction keeps exactly the ground-truth area."""
    cfg = cfg or MetricConfig()
    value = iou(prediction_mask(sample, cfg, adaptive=True), sample.gt.rasterize())
    return value, cfg.is_success(value)


def auc(per_sample_ious, cfg: MetricConfig | None = None) -> float:
    """Area under the success-rate curve over an IoU-threshold sweep.

    Thresholds run 0.0, step, ..., 1.0; success at threshold t is IoU >= t
    (so every sample succeeds at t=0); trapezoidal integration.
    """
    cfg = cfg or MetricConfig()
    values = np.asarray(per_sample_ious, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("auc of empty IoU list")
    steps = int(round(1.0 / cfg.auc_step))
    thresholds = np.linspace(0.0, 1.0, steps + 1)
    rates = (values[None, :] >= thresholds[:, None]).mean(axis=1)
    return float(np.sum((rates[1:] + rates[:-1]) * np.diff(thresholds)) / 2.0)


@dataclass
class InteractiveResult:
    iiou: float
    iauc: float
    group_ious: dict  # group id -> min IoU over its sources
    group_success: dict  # group id -> all sources succeeded


def interactive_iou(
    samples, variant: str = "adaptive", cfg: MetricConfig | None = None, threads: int = 1
) -> InteractiveResult:
    """Group-level localization: a group counts only if every source succeeds.

    Samples are grouped by group_id (>= 2 sources each). IAUC applies the
    AUC sweep to each group's minimum IoU, the binding constraint for
    localizing all sources.
    """
    cfg = cfg or MetricConfig()
    if variant not in ("ciou", "adaptive"):
        raise ValidationError(f"variant must be ciou|adaptive, got {variant!r}")
    scorer = adaptive_ciou if variant == "adaptive" else ciou
    samples = list(samples)
    groups = OrderedDict()
    for sample in samples:
        if sample.group_id is None:
            raise ValidationError(f"sample {sample.sample_id!r}: no group id")
        groups.setdefault(sample.group_id, []).append(sample)
    if not groups:
        raise ValidationError("no samples")
    for gid, members in groups.items():
        if len(members) < 2:
            raise ValidationError(f"group {gid!r} has a single source; interactive metrics need >= 2")
    scores = parallel_map(lambda s: scorer(s, cfg), samples, threads)
    position = {id(s): k for k, s in enumerate(samples)}
    group_ious = {}
    group_success = {}
    for gid, members in groups.items():
        results = [scores[position[id(m)]] for m in members]
        group_ious[gid] = min(v for v, _ in results)
        group_success[gid] = all(ok for _, ok in results)
    iiou = float(np.mean([1.0 if ok else 0.0 for ok in group_success.values()]))
    iauc = auc(list(group_ious.values()), cfg)
    return InteractiveResult(iiou=iiou, iauc=iauc, group_ious=group_ious, group_success=group_success)


def sample_confidence(sample: EvalSample, cfg: MetricConfig) -> float:
    """Detection confidence: max (or mean) of the resized heatmap."""
    grid = resized_heatmap(sample)
    return float(grid.max() if cfg.confidence == "max" else grid.mean())


@dataclass
class ExtendedResult:
    ap: float
    max_f1: float
    loc_acc: float
    degenerate_balance: bool
    num_positive: int
    num_negative: int


def extended_metrics(samples, cfg: MetricConfig | None = None, threads: int = 1) -> ExtendedResult:
    """Detection metrics over positive and non-matching pairs.

    A sample is detected at threshold t when its confidence is >= t; a
    detected positive is a true positive only if its fixed-threshold IoU
    succeeds. AP sums precision over recall increments across the
    exhaustive confidence sweep; LocAcc is the success rate over positives.
    An absent negative class is flagged, with metrics still computed.
    """
    cfg = cfg or MetricConfig()
    samples = list(samples)
    positives = [s for s in samples if s.positive]
    negatives = [s for s in samples if not s.positive]
    if not positives:
        raise ValidationError("extended metrics need at least one positive sample")
    confidences = np.array(parallel_map(lambda s: sample_confidence(s, cfg), samples, threads))
    localized = np.array(
        parallel_map(lambda s: ciou(s, cfg)[1] if s.positive else False, samples, threads),
        dtype=bool,
    )

    order = np.argsort(-confidences, kind="stable")
    tp_flags = localized[order]
    n_pos = len(positives)
    # Sweep cutoffs after each group of equal confidences.
    sorted_conf = confidences[order]
    tp_cum = np.cumsum(tp_flags)
    det_cum = np.arange(1, len(samples) + 1)
    boundary = np.append(sorted_conf[1:] != sorted_conf[:-1], True)
    tp_at = tp_cum[boundary]
    det_at = det_cum[boundary]
    precision = tp_at / det_at
    recall = tp_at / n_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    ap = float(np.sum((recall - prev_recall) * precision))
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    max_f1 = float(f1.max()) if f1.size else 0.0
    pos_mask = np.array([s.positive for s in samples], dtype=bool)
    loc_acc = float(localized[pos_mask].mean())
    return ExtendedResult(
        ap=ap,
        max_f1=max_f1,
        loc_acc=loc_acc,
        degenerate_balance=len(negatives) == 0,
        num_positive=n_pos,
        num_negative=len(negatives),
    )


@dataclass
class SegmentationResult:
    miou: float
    fscore: float
    per_sample_iou: list
    per_sample_fscore: list


def segmentation_metrics(
    samples, variant: str = "fraction", cfg: MetricConfig | None = None, threads: int = 1
) -> SegmentationResult:
    """Segmentation protocol: mean IoU and F-score against ground-truth masks.

    F-score uses per-sample pixel precision/recall with beta^2 from the
    config (0.3 by default), averaged over samples.
    """
    cfg = cfg or MetricConfig()
    if variant not in ("fraction", "adaptive"):
        raise ValidationError(f"variant must be fraction|adaptive, got {variant!r}")
    samples = list(samples)
    if not samples:
        raise ValidationError("no samples")
    b2 = cfg.fscore_beta2

    def score(sample: EvalSample) -> tuple[float, float]:
        if sample.gt is None or sample.gt.mask is None:
            raise ValidationError(f"sample {sample.sample_id!r}: segmentation needs a gt mask")
        pred = prediction_mask(sample, cfg, adaptive=(variant == "adaptive"))
        gt_mask = sample.gt.mask
        value = iou(pred, gt_mask)
        tp = float((pred * gt_mask).sum())
        fp = float((pred * (1 - gt_mask)).sum())
        fn = float(((1 - pred) * gt_mask).sum())
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        denom = b2 * prec + rec
        fscore = (1 + b2) * prec * rec / denom if denom > 0 else 0.0
        return value, fscore

    results = parallel_map(score, samples, threads)
    ious = [v for v, _ in results]
    fscores = [f for _, f in results]
    return SegmentationResult(
        miou=float(np.mean(ious)),
        fscore=float(np.mean(fscores)),
        per_sample_iou=ious,
        per_sample_fscore=fscores,
    )


@dataclass
class MetricReport:
    """Aggregate localization scores plus the per-sample table they come from."""

    aggregates: dict
    per_sample: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "aggregates": dict(self.aggregates),
            "per_sample": [dict(row) for row in self.per_sample],
            "config": dict(self.config),
        }

    def csv_rows(self):
        if not self.per_sample:
            return []
        header = list(self.per_sample[0].keys())
        rows = [header]
        for row in self.per_sample:
            rows.append([row[k] for k in header])
        return rows


def evaluate(samples, metric: str = "both", cfg: MetricConfig | None = None, threads: int = 1) -> MetricReport:
    """Standard localization evaluation over positive samples.

    ``metric`` selects "ciou", "adaptive-ciou", or "both". Aggregates are
    success rates (fractions in [0, 1]) plus the AUC of each variant's
    per-sample IoUs.
    """
    cfg = cfg or MetricConfig()
    if metric not in ("ciou", "adaptive-ciou", "both"):
        raise ValidationError(f"metric must be ciou|adaptive-ciou|both, got {metric!r}")
    samples = [s for s in samples if s.positive]
    if not samples:
        raise ValidationError("no positive samples to evaluate")
    want_fixed = metric in ("ciou", "both")
    want_adaptive = metric in ("adaptive-ciou", "both")

    def score(sample: EvalSample) -> dict:
        row = {"id": sample.sample_id}
        if want_fixed:
            row["iou"], row["success"] = ciou(sample, cfg)
        if want_adaptive:
            row["iou_adaptive"], row["success_adaptive"] = adaptive_ciou(sample, cfg)
        return row

    per_sample = parallel_map(score, samples, threads)
    aggregates = {}
    if want_fixed:
        aggregates["ciou"] = float(np.mean([r["success"] for r in per_sample]))
        aggregates["auc"] = auc([r["iou"] for r in per_sample], cfg)
    if want_adaptive:
        aggregates["ciou_adaptive"] = float(np.mean([r["success_adaptive"] for r in per_sample]))
        aggregates["auc_adaptive"] = auc([r["iou_adaptive"] for r in per_sample], cfg)
    return MetricReport(aggregates=aggregates, per_sample=per_sample, config=cfg.to_dict())
