"""End-to-end harness: detection emulation, per-frame pipeline, campaigns.

``run_pipeline`` drives one record through detection emulation, RoI
construction, estimate synthesis and field decoding, robust PnP, metric
computation, and the error gate. ``run_campaign`` aggregates a dataset and
``run_benchmark`` times the stages. Gate rejection is a normal outcome and
keeps its error report; hard failures carry a reason code instead.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .displacement import decode, encode_predictions
from .errors import MissingConfig, NoDetection
from .gate import (
    DEFAULT_GATE_THRESHOLD_PX,
    GateDecision,
    estimate_error_dispersion,
    estimate_error_oracle,
)
from .gate import gate as apply_gate
from .geometry import Quaternion
from .keypoints import KeypointSet
from .metrics import (
    IDENTITY_TOL,
    ErrorReport,
    EvalSummary,
    SymmetryGroup,
    aggregate,
    make_report,
    rotation_error,
    summary_csv,
    summary_table,
)
from .pnp import RansacParams, ransac_pnp
from .roi import BBox, iou, roi_contains, square_and_expand, to_crop
from .synth import DatasetRecord, NoiseModel, corrupt

DEFAULT_EXPANSION = 1.25

ESTIMATORS = ("oracle", "dispersion")
DETECTORS = ("perfect", "jittered")

HISTOGRAM_BINS = 30
HISTOGRAM_CLIP_QUANTILE = 99.0


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the per-frame pipeline needs besides the record itself."""

    noise: NoiseModel = NoiseModel()
    ransac: RansacParams = RansacParams()
    gate_threshold_px: float = DEFAULT_GATE_THRESHOLD_PX
    estimator: str = "oracle"
    detector: str = "perfect"
    detector_iou_target: float = 0.92
    expansion: float = DEFAULT_EXPANSION
    symmetry: Optional[SymmetryGroup] = None
    seed: int = 0

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.detector not in DETECTORS:
            raise ValueError(f"detector must be one of {DETECTORS}")
        if not 0.0 < self.detector_iou_target <= 1.0:
            raise ValueError("detector_iou_target must be in (0, 1]")
        if self.gate_threshold_px <= 0:
            raise ValueError("gate_threshold_px must be positive")
        if self.expansion <= 0:
            raise ValueError("expansion must be positive")
        if self.noise.cluster_flip_fraction > 0.0 and self._flip_rotation() is None:
            raise ValueError("cluster flips require a symmetry group with a non-identity element")

    def _flip_rotation(self):
        if self.symmetry is None:
            return None
        for s in self.symmetry.rotations:
            if rotation_error(Quaternion.identity(), s) > IDENTITY_TOL:
                return s
        return None


@dataclass(frozen=True)
class StageSample:
    """Wall-clock milliseconds for one frame, by stage."""

    roi_ms: float
    decode_ms: float
    pnp_ms: float
    gate_ms: float
    total_ms: float


@dataclass(frozen=True)
class PipelineOutcome:
    """Result of one frame. ``status`` is ok/detector_failed/ransac_failed."""

    record_index: int
    status: str
    report: Optional[ErrorReport]
    gate: Optional[GateDecision]
    det_iou: float
    roi_contained: bool
    timings: StageSample

    @property
    def no_detection_reason(self) -> Optional[str]:
        """Mutually exclusive rejection reason, None for an accepted pose."""
        if self.status != "ok":
            return self.status
        if self.gate is not None and not self.gate.accepted:
            return "gate_rejected"
        return None


def jittered_bbox(
    gt_bbox: BBox, iou_target: float, rng: np.random.Generator
) -> BBox:
    """Perturb a ground-truth box to a chosen IoU.

    A random corner-motion direction is drawn, then its magnitude is
    bisected until the jittered box meets the target IoU. Invalid boxes
    (corners crossed) score zero, so a bracket always exists.
    """
    if iou_target >= 1.0:
        return gt_bbox
    d = rng.normal(size=4)
    d /= np.abs(d).max()
    w, h = gt_bbox.width, gt_bbox.height

    def candidate(s: float) -> Optional[BBox]:
        x0 = gt_bbox.x_min + s * d[0] * w
        y0 = gt_bbox.y_min + s * d[1] * h
        x1 = gt_bbox.x_max + s * d[2] * w
        y1 = gt_bbox.y_max + s * d[3] * h
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)

    def overlap(s: float) -> float:
        box = candidate(s)
        return iou(gt_bbox, box) if box is not None else 0.0

    hi = 0.05
    while overlap(hi) > iou_target and hi < 1e6:
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if overlap(mid) > iou_target:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    box = candidate(s)
    return box if box is not None else gt_bbox


def emulate_detection(
    record: DatasetRecord, cfg: PipelineConfig, rng: np.random.Generator
) -> Optional[BBox]:
    """Stand-in for the object detector; always returns its best box."""
    if cfg.detector == "perfect":
        return record.gt_bbox
    return jittered_bbox(record.gt_bbox, cfg.detector_iou_target, rng)


def run_pipeline(
    record: DatasetRecord, kps: KeypointSet, cfg: PipelineConfig
) -> PipelineOutcome:
    """Drive one record through the full non-learned pipeline.

    Per-record randomness (detector jitter, estimate corruption, RANSAC
    sampling) derives from ``(cfg.seed, record.index)``, so outcomes are
    reproducible record by record.
    """
    ss = np.random.SeedSequence((cfg.seed, record.index))
    det_child, noise_child, ransac_child = ss.spawn(3)
    cam = record.camera.model()

    t_start = time.perf_counter()
    det_bbox = emulate_detection(record, cfg, np.random.default_rng(det_child))
    if det_bbox is None:
        zero = StageSample(0.0, 0.0, 0.0, 0.0, (time.perf_counter() - t_start) * 1e3)
        return PipelineOutcome(record.index, "detector_failed", None, None, 0.0, False, zero)
    roi = square_and_expand(det_bbox, cfg.expansion)
    det_iou = iou(det_bbox, record.gt_bbox)
    contained = roi_contains(roi, record.gt_bbox)
    t_roi = time.perf_counter()

    pred_raw = corrupt(
        record,
        roi,
        cfg.noise,
        np.random.default_rng(noise_child),
        kps=kps,
        flip_rotation=cfg._flip_rotation(),
    )
    pred = decode(encode_predictions(pred_raw))
    t_decode = time.perf_counter()

    ransac_seed = int(ransac_child.generate_state(1)[0])
    params = replace(cfg.ransac, seed=ransac_seed)
    try:
        result = ransac_pnp(pred, kps, roi, cam, params)
    except NoDetection:
        now = time.perf_counter()
        timings = StageSample(
            (t_roi - t_start) * 1e3,
            (t_decode - t_roi) * 1e3,
            (now - t_decode) * 1e3,
            0.0,
            (now - t_start) * 1e3,
        )
        return PipelineOutcome(record.index, "ransac_failed", None, None, det_iou, contained, timings)
    t_pnp = time.perf_counter()

    gt_crop = to_crop(roi, record.gt_keypoints_2d)
    if cfg.estimator == "oracle":
        e_k_hat = estimate_error_oracle(pred, gt_crop)
    else:
        e_k_hat = estimate_error_dispersion(pred, result, kps, roi, cam)
    decision = apply_gate(e_k_hat, cfg.gate_threshold_px)
    report = make_report(record.pose, result.pose, sym=cfg.symmetry, e_k_hat=e_k_hat)
    t_gate = time.perf_counter()

    timings = StageSample(
        (t_roi - t_start) * 1e3,
        (t_decode - t_roi) * 1e3,
        (t_pnp - t_decode) * 1e3,
        (t_gate - t_pnp) * 1e3,
        (t_gate - t_start) * 1e3,
    )
    return PipelineOutcome(record.index, "ok", report, decision, det_iou, contained, timings)


@dataclass(frozen=True)
class HistogramTable:
    """Uniform-bin histogram stratified by gate outcome.

    The top percentile of values is clipped into the last bin, so the last
    bin's upper edge undercounts the true maximum by design.
    """

    edges: np.ndarray
    accepted: np.ndarray
    rejected: np.ndarray

    def csv(self) -> str:
        lines = ["bin_lo,bin_hi,accepted,rejected"]
        for i in range(len(self.accepted)):
            lines.append(
                f"{self.edges[i]!r},{self.edges[i + 1]!r},{int(self.accepted[i])},{int(self.rejected[i])}"
            )
        return "\n".join(lines) + "\n"


def compute_histogram(
    values: Sequence[float], rejected_flags: Sequence[bool], bins: int = HISTOGRAM_BINS
) -> HistogramTable:
    """Histogram values into uniform bins, clipping the top 1% into the last."""
    v = np.asarray(list(values), dtype=float)
    flags = np.asarray(list(rejected_flags), dtype=bool)
    if v.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
        zero = np.zeros(bins, dtype=int)
        return HistogramTable(edges, zero.copy(), zero)
    lo = float(v.min())
    hi = float(np.percentile(v, HISTOGRAM_CLIP_QUANTILE))
    if hi <= lo:
        hi = lo + max(abs(lo), 1.0) * 1e-9
    edges = np.linspace(lo, hi, bins + 1)
    width = (hi - lo) / bins
    idx = np.clip(((v - lo) / width).astype(int), 0, bins - 1)
    accepted = np.bincount(idx[~flags], minlength=bins)[:bins]
    rej = np.bincount(idx[flags], minlength=bins)[:bins]
    return HistogramTable(edges, accepted, rej)


@dataclass(frozen=True)
class CampaignResult:
    """Aggregated outcome of running the pipeline over a dataset."""

    outcomes: tuple[PipelineOutcome, ...]
    full_summary: EvalSummary
    accepted_summary: EvalSummary
    det_iou_median: float
    det_iou_mean: float
    roi_accuracy: float
    hist_e_r_deg: HistogramTable
    hist_e_t: HistogramTable
    n_ransac_failed: int
    n_detector_failed: int

    def summary_csv(self) -> str:
        head = summary_csv(self.full_summary, self.accepted_summary)
        extra = [
            f"detection,iou,{self.det_iou_median!r},{self.det_iou_mean!r}",
            f"detection,roi_accuracy,{self.roi_accuracy!r},{self.roi_accuracy!r}",
            f"run,ransac_failed,{self.n_ransac_failed},{self.n_ransac_failed}",
            f"run,detector_failed,{self.n_detector_failed},{self.n_detector_failed}",
        ]
        return head + "\n".join(extra) + "\n"

    def table(self) -> str:
        det = (
            f"Detection           IoU                 {self.det_iou_median:.4f}  {self.det_iou_mean:.4f}\n"
            f"                    RoI accuracy        -       {self.roi_accuracy:.4f}\n"
            f"Hard failures       ransac={self.n_ransac_failed} detector={self.n_detector_failed}\n"
        )
        return det + summary_table(self.full_summary, self.accepted_summary)


def run_campaign(
    records: Sequence[DatasetRecord], kps: KeypointSet, cfg: PipelineConfig
) -> CampaignResult:
    """Run every record through the pipeline and aggregate the results.

    Records that solved contribute to the metric summaries whether the
    gate accepted them or not; hard failures are counted separately.
    """
    outcomes = tuple(run_pipeline(rec, kps, cfg) for rec in records)
    solved = [o for o in outcomes if o.status == "ok"]
    reports = [o.report for o in solved]
    rejected = [not o.gate.accepted for o in solved]
    full, accepted = aggregate(reports, rejected)

    ious = np.array([o.det_iou for o in outcomes if o.status != "detector_failed"])
    contained = [o.roi_contained for o in outcomes if o.status != "detector_failed"]
    e_r_deg = [r.e_r_deg for r in reports]
    e_t = [r.e_t for r in reports]
    return CampaignResult(
        outcomes=outcomes,
        full_summary=full,
        accepted_summary=accepted,
        det_iou_median=float(np.median(ious)) if ious.size else math.nan,
        det_iou_mean=float(ious.mean()) if ious.size else math.nan,
        roi_accuracy=float(np.mean(contained)) if contained else math.nan,
        hist_e_r_deg=compute_histogram(e_r_deg, rejected),
        hist_e_t=compute_histogram(e_t, rejected),
        n_ransac_failed=sum(o.status == "ransac_failed" for o in outcomes),
        n_detector_failed=sum(o.status == "detector_failed" for o in outcomes),
    )


def render_histogram_svg(table: HistogramTable, title: str, path) -> None:
    """Draw a stacked accepted/rejected histogram to an SVG file.

    Plotting is the only optional feature; the import stays local so the
    rest of the package runs without matplotlib installed.
    """
    try:
        import matplotlib
    except ImportError as exc:
        raise MissingConfig("SVG rendering needs matplotlib (pip install satpose[plot])") from exc

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    centers = 0.5 * (table.edges[:-1] + table.edges[1:])
    width = float(table.edges[1] - table.edges[0])
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(centers, table.accepted, width=width * 0.95, label="accepted", color="#3a7d44")
    ax.bar(
        centers,
        table.rejected,
        width=width * 0.95,
        bottom=table.accepted,
        label="rejected",
        color="#b3462f",
    )
    ax.set_title(title)
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


@dataclass(frozen=True)
class StatMs:
    mean: float
    median: float


@dataclass(frozen=True)
class StageTimings:
    """Per-stage latency statistics and effective throughput."""

    stages: dict[str, StatMs]
    hz: float
    n_frames: int

    def csv(self) -> str:
        lines = ["stage,mean_ms,median_ms"]
        for name, st in self.stages.items():
            lines.append(f"{name},{st.mean!r},{st.median!r}")
        lines.append(f"throughput_hz,{self.hz!r},{self.hz!r}")
        lines.append(f"n_frames,{self.n_frames},{self.n_frames}")
        return "\n".join(lines) + "\n"


def run_benchmark(
    records: Sequence[DatasetRecord],
    kps: KeypointSet,
    cfg: PipelineConfig,
    duration_s: float = 5.0,
) -> StageTimings:
    """Time the pipeline stages over repeated passes of the dataset.

    One warm-up pass over up to ten records is excluded from statistics.
    Everything runs on the calling thread; the clock is monotonic. The
    recorded window always covers at least one full frame, so short
    durations still produce valid statistics.
    """
    if not records:
        raise ValueError("benchmark needs at least one record")
    for rec in records[: min(10, len(records))]:
        run_pipeline(rec, kps, cfg)

    samples: list[StageSample] = []
    start = time.monotonic()
    i = 0
    while not samples or time.monotonic() - start < duration_s:
        samples.append(run_pipeline(records[i % len(records)], kps, cfg).timings)
        i += 1
    elapsed = time.monotonic() - start

    def stat(values: list[float]) -> StatMs:
        arr = np.asarray(values)
        return StatMs(mean=float(arr.mean()), median=float(np.median(arr)))

    stages = {
        "roi": stat([s.roi_ms for s in samples]),
        "field_decode": stat([s.decode_ms for s in samples]),
        "pnp": stat([s.pnp_ms for s in samples]),
        "gate": stat([s.gate_ms for s in samples]),
        "total": stat([s.total_ms for s in samples]),
    }
    return StageTimings(stages=stages, hz=len(samples) / elapsed, n_frames=len(samples))
