"""Detection and classification evaluation.

Detection side: greedy IoU-thresholded matching (descending score,
one-to-one ground-truth assignment), per-class average precision as the
area under the precision envelope over recall, and mAP as the unweighted
mean over classes that have ground truth.

Classification side: per-image top-score matching into a confusion
matrix over the 12-class universe plus an "unmatched" column, per-class
precision/recall counts, and macro averages where macro-F1 is the
harmonic mean of macro-precision and macro-recall -- deliberately NOT
the mean of per-class F1 scores.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import CornerBox, iou
from .labels import LABELS, ActionLabel, label_from_code

log = logging.getLogger(__name__)


class NoGroundTruth(ValueError):
    """mAP requested but no class has any ground truth."""


class MalformedRecord(ValueError):
    """An interchange row or curve record that cannot be parsed."""


@dataclass(frozen=True)
class GroundTruthItem:
    image_id: str
    box: CornerBox
    label: ActionLabel


@dataclass(frozen=True)
class PredictionItem:
    image_id: str
    box: CornerBox
    label: ActionLabel
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1]: {self.score}")


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        # Zero predictions for a class yields precision 0, not NaN,
        # so macro averages stay total.
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass(frozen=True)
class ClassMatches:
    """Score-ordered match flags for one class, plus its ground-truth count."""

    scores: tuple[float, ...]
    is_tp: tuple[bool, ...]
    n_gt: int


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows: ground-truth class. Columns: predicted class + "unmatched"."""

    labels: tuple[ActionLabel, ...]
    counts: np.ndarray  # shape (n, n + 1), dtype int64

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def unmatched(self) -> np.ndarray:
        return self.counts[:, -1]


@dataclass(frozen=True)
class MacroMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    ap_per_class: dict[ActionLabel, float]
    map: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    counts: dict[ActionLabel, ClassCounts]
    confusion: ConfusionMatrix


def match_detections(
    gt: Sequence[GroundTruthItem],
    preds: Sequence[PredictionItem],
    iou_threshold: float = 0.5,
) -> dict[ActionLabel, ClassMatches]:
    """Greedy per-class matching at an IoU threshold.

    Within each class, predictions are taken in descending score order
    (ties broken by stable input order). Each prediction matches the
    highest-IoU not-yet-matched ground truth of the same image and class
    when that IoU meets the threshold; otherwise it is a false positive.
    Ground truths never matched are false negatives.

    Returns an entry for every class that appears in either list.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1]: {iou_threshold}")

    gt_by_class: dict[ActionLabel, list[GroundTruthItem]] = {}
    for item in gt:
        gt_by_class.setdefault(item.label, []).append(item)
    preds_by_class: dict[ActionLabel, list[PredictionItem]] = {}
    for p in preds:
        preds_by_class.setdefault(p.label, []).append(p)

    out: dict[ActionLabel, ClassMatches] = {}
    for label in sorted(set(gt_by_class) | set(preds_by_class)):
        class_gt = gt_by_class.get(label, [])
        class_preds = sorted(
            preds_by_class.get(label, []), key=lambda p: -p.score
        )
        matched = [False] * len(class_gt)
        scores: list[float] = []
        flags: list[bool] = []
        for p in class_preds:
            best_iou = 0.0
            best_j = -1
            for j, g in enumerate(class_gt):
                if matched[j] or g.image_id != p.image_id:
                    continue
                overlap = iou(p.box, g.box)
                if overlap > best_iou:
                    best_iou, best_j = overlap, j
            scores.append(p.score)
            if best_j >= 0 and best_iou >= iou_threshold:
                matched[best_j] = True
                flags.append(True)
            else:
                flags.append(False)
        out[label] = ClassMatches(tuple(scores), tuple(flags), len(class_gt))
    return out


def average_precision(matches: ClassMatches) -> float:
    """Area under the precision envelope over recall (all-point form).

    At each recall level the envelope takes the highest precision
    achieved at that or any greater recall. Classes with no ground truth
    score 0.
    """
    if matches.n_gt == 0 or not matches.scores:
        return 0.0
    tp_cum = 0
    precisions = []
    recalls = []
    for k, is_tp in enumerate(matches.is_tp, start=1):
        tp_cum += is_tp
        precisions.append(tp_cum / k)
        recalls.append(tp_cum / matches.n_gt)
    # Suffix max turns the raw precision curve into its envelope.
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for i in range(len(recalls)):
        if recalls[i] > prev_recall:
            ap += (recalls[i] - prev_recall) * envelope[i]
            prev_recall = recalls[i]
    return ap


def mean_ap(ap_per_class: Mapping[ActionLabel, float]) -> float:
    """Unweighted mean AP. The mapping must only contain classes with GT."""
    if not ap_per_class:
        raise NoGroundTruth("no class has ground truth")
    return sum(ap_per_class.values()) / len(ap_per_class)


def classification_counts(
    gt: Sequence[GroundTruthItem],
    preds: Sequence[PredictionItem],
    iou_threshold: float = 0.5,
) -> tuple[dict[ActionLabel, ClassCounts], ConfusionMatrix]:
    """Per-image top-score classification over the 12-class universe.

    For each image (one ground truth per image in this corpus), the
    highest-scoring prediction whose box overlaps the ground-truth box at
    IoU >= threshold decides the predicted class. Images with no
    qualifying prediction go to the "unmatched" column: a false negative
    for the ground-truth class and a false positive for nothing.
    """
    index = {label: i for i, label in enumerate(LABELS)}
    counts = np.zeros((len(LABELS), len(LABELS) + 1), dtype=np.int64)

    preds_by_image: dict[str, list[PredictionItem]] = {}
    for p in preds:
        preds_by_image.setdefault(p.image_id, []).append(p)

    for item in gt:
        candidates = [
            p for p in preds_by_image.get(item.image_id, [])
            if iou(p.box, item.box) >= iou_threshold
        ]
        row = index[item.label]
        if not candidates:
            counts[row, -1] += 1
            continue
        top = max(enumerate(candidates), key=lambda kv: (kv[1].score, -kv[0]))[1]
        counts[row, index[top.label]] += 1

    per_class: dict[ActionLabel, ClassCounts] = {}
    for label, i in index.items():
        tp = int(counts[i, i])
        fn = int(counts[i].sum()) - tp
        fp = int(counts[:, i].sum()) - tp
        per_class[label] = ClassCounts(tp=tp, fp=fp, fn=fn)
    return per_class, ConfusionMatrix(tuple(LABELS), counts)


def macro_metrics(counts: Mapping[ActionLabel, ClassCounts]) -> MacroMetrics:
    """Macro precision/recall means and their harmonic-mean F1.

    Macro-F1 is computed from the two macro averages, not by averaging
    per-class F1 values; the two disagree on asymmetric inputs.
    """
    if not counts:
        raise ValueError("at least one class required")
    n = len(counts)
    macro_p = sum(c.precision for c in counts.values()) / n
    macro_r = sum(c.recall for c in counts.values()) / n
    if macro_p + macro_r == 0.0:
        macro_f1 = 0.0
    else:
        macro_f1 = 2 * macro_p * macro_r / (macro_p + macro_r)
    return MacroMetrics(macro_p, macro_r, macro_f1)


def evaluate(
    gt: Sequence[GroundTruthItem],
    preds: Sequence[PredictionItem],
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Full evaluation: AP/mAP plus classification counts and macros.

    Classes without ground truth are excluded from mAP and from the
    macro averages (their recall is undefined).
    """
    matches = match_detections(gt, preds, iou_threshold)
    ap_per_class = {
        label: average_precision(m) for label, m in matches.items() if m.n_gt > 0
    }
    map_value = mean_ap(ap_per_class)
    per_class, confusion = classification_counts(gt, preds, iou_threshold)
    with_gt = {label: c for label, c in per_class.items() if c.tp + c.fn > 0}
    macro = macro_metrics(with_gt)
    return EvalReport(
        ap_per_class=ap_per_class,
        map=map_value,
        macro_precision=macro.precision,
        macro_recall=macro.recall,
        macro_f1=macro.f1,
        counts=per_class,
        confusion=confusion,
    )


# ---------------------------------------------------------------------------
# Interchange files


def read_gt_csv(path: str | Path) -> list[GroundTruthItem]:
    """Read ground truth rows: image_id,x1,y1,x2,y2,label."""
    return [
        GroundTruthItem(image_id, box, label)
        for image_id, box, label, _ in _read_items(path, expect_score=False)
    ]


def read_pred_csv(path: str | Path) -> list[PredictionItem]:
    """Read prediction rows: image_id,x1,y1,x2,y2,label,score."""
    return [
        PredictionItem(image_id, box, label, score)
        for image_id, box, label, score in _read_items(path, expect_score=True)
    ]


def _read_items(path: str | Path, expect_score: bool):
    n_cols = 7 if expect_score else 6
    items = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (row_no == 1 and row[0] == "image_id"):
                continue
            if len(row) != n_cols:
                raise MalformedRecord(f"{path}:{row_no}: expected {n_cols} columns, got {len(row)}")
            try:
                box = CornerBox(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
                label = label_from_code(row[5])
                score = float(row[6]) if expect_score else 1.0
            except (ValueError, IndexError) as exc:
                raise MalformedRecord(f"{path}:{row_no}: {exc}") from exc
            items.append((row[0], box, label, score))
    return items


def write_report_json(report: EvalReport, path: str | Path) -> None:
    doc = {
        "map": report.map,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "ap_per_class": {label.code: ap for label, ap in sorted(report.ap_per_class.items())},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_per_class_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "name", "ap", "precision", "recall", "f1", "tp", "fp", "fn"])
        for label in LABELS:
            c = report.counts[label]
            ap = report.ap_per_class.get(label, "")
            writer.writerow([
                label.code, label.name, ap,
                c.precision, c.recall, c.f1, c.tp, c.fp, c.fn,
            ])


def write_confusion_csv(confusion: ConfusionMatrix, path: str | Path) -> None:
    """CSV grid: header row/column of label codes plus "unmatched"."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gt\\pred"] + [lab.code for lab in confusion.labels] + ["unmatched"])
        for i, lab in enumerate(confusion.labels):
            writer.writerow([lab.code] + [int(v) for v in confusion.counts[i]])


# ---------------------------------------------------------------------------
# Curve emission (training/inference scalar series -> plot-data CSVs)


@dataclass(frozen=True)
class CurveRecord:
    series: str
    iteration: int
    value: float


@dataclass
class CurveEmission:
    files: list[Path] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


def emit_curves(records: Iterable[CurveRecord], out_dir: str | Path) -> CurveEmission:
    """Write one CSV per series plus a combined pivot CSV.

    Rows are sorted by ascending iteration. A duplicate iteration within
    a series keeps the later record and emits a warning. Empty input
    produces no files and an error entry in the emission report.
    """
    result = CurveEmission()
    series: dict[str, dict[int, float]] = {}
    order: list[str] = []
    for rec in records:
        if not isinstance(rec, CurveRecord):
            raise MalformedRecord(f"not a curve record: {rec!r}")
        if not rec.series:
            raise MalformedRecord("empty series name")
        if rec.series not in series:
            series[rec.series] = {}
            order.append(rec.series)
        if rec.iteration in series[rec.series]:
            msg = f"duplicate iteration {rec.iteration} in series {rec.series!r}; later record wins"
            log.warning(msg)
            result.warnings.append(msg)
        series[rec.series][rec.iteration] = rec.value

    if not series:
        result.errors.append("no curve records supplied; nothing emitted")
        return result

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in order:
        path = out / f"{_safe_filename(name)}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "value"])
            for it in sorted(series[name]):
                writer.writerow([it, repr(series[name][it])])
        result.files.append(path)

    combined = out / "curves_combined.csv"
    iterations = sorted({it for vals in series.values() for it in vals})
    with open(combined, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration"] + order)
        for it in iterations:
            writer.writerow(
                [it] + [repr(series[n][it]) if it in series[n] else "" for n in order]
            )
    result.files.append(combined)
    return result


def read_curve_records_csv(path: str | Path) -> list[CurveRecord]:
    """Read records rows: series,iteration,value (header optional)."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (row_no == 1 and row[0] == "series"):
                continue
            if len(row) != 3:
                raise MalformedRecord(f"{path}:{row_no}: expected 3 columns, got {len(row)}")
            try:
                records.append(CurveRecord(row[0], int(row[1]), float(row[2])))
            except ValueError as exc:
                raise MalformedRecord(f"{path}:{row_no}: {exc}") from exc
    return records


def _safe_filename(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
