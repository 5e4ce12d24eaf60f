"""Pose error metrics and dataset-level aggregation.

Rotation error is the geodesic angle between two attitude quaternions,
translation error the Euclidean gap, and the combined score adds the
rotation error in radians to the range-normalized translation error.
Angles are stored in radians and rendered in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyDataset, ZeroGroundTruthRange
from .geometry import Quaternion

IDENTITY_TOL = 1e-9


def rotation_error(q_true: Quaternion, q_est: Quaternion) -> float:
    """Geodesic rotation error ``2 * arccos(|<q, q_hat>|)`` in radians.

    Evaluated through the chord, ``4 * arcsin(min(|q - q_hat|, |q + q_hat|) / 2)``,
    which is the same function of the pair but exact at zero; the arccos
    form cannot resolve angles below ~3e-8 because the dot product
    saturates at 1. Taking the smaller chord covers the q / -q double
    cover, and the half-chord never exceeds sin(pi/4), where arcsin is
    well conditioned.
    """
    d_minus = (
        (q_true.w - q_est.w) ** 2
        + (q_true.x - q_est.x) ** 2
        + (q_true.y - q_est.y) ** 2
        + (q_true.z - q_est.z) ** 2
    )
    d_plus = (
        (q_true.w + q_est.w) ** 2
        + (q_true.x + q_est.x) ** 2
        + (q_true.y + q_est.y) ** 2
        + (q_true.z + q_est.z) ** 2
    )
    half_chord = 0.5 * math.sqrt(min(d_minus, d_plus))
    return 4.0 * math.asin(min(1.0, half_chord))


def translation_error(t_true, t_est) -> float:
    """Euclidean distance between translations, meters."""
    t_true = np.asarray(t_true, dtype=float)
    t_est = np.asarray(t_est, dtype=float)
    return float(np.linalg.norm(t_true - t_est))


def normalized_translation_error(t_true, t_est) -> float:
    """Translation error divided by the ground-truth range."""
    t_true = np.asarray(t_true, dtype=float)
    norm = float(np.linalg.norm(t_true))
    if norm == 0.0:
        raise ZeroGroundTruthRange("ground-truth translation has zero norm")
    return translation_error(t_true, t_est) / norm


def combined_error(e_r_rad: float, e_tn: float) -> float:
    """Scalar pose score: rotation error in radians plus normalized translation."""
    return e_r_rad + e_tn


@dataclass(frozen=True)
class SymmetryGroup:
    """Finite set of target-frame rotations the target's appearance survives.

    Always contains the identity. The two-element groups used for
    barrel-symmetric targets are validated to be closed (the non-identity
    element must be self-inverse).
    """

    rotations: tuple[Quaternion, ...]

    def __post_init__(self):
        rots = tuple(self.rotations)
        if not rots:
            raise ValueError("symmetry group needs at least the identity")
        if min(rotation_error(Quaternion.identity(), q) for q in rots) > IDENTITY_TOL:
            raise ValueError("symmetry group must contain the identity")
        if len(rots) == 2:
            a = rots[0] if rotation_error(Quaternion.identity(), rots[0]) > IDENTITY_TOL else rots[1]
            if rotation_error(Quaternion.identity(), a.multiply(a)) > 1e-6:
                raise ValueError("two-element group element must be self-inverse")
        object.__setattr__(self, "rotations", rots)

    @staticmethod
    def trivial() -> "SymmetryGroup":
        return SymmetryGroup((Quaternion.identity(),))

    @staticmethod
    def flip_about(axis) -> "SymmetryGroup":
        """Identity plus a half-turn about ``axis`` (barrel symmetry)."""
        return SymmetryGroup((Quaternion.identity(), Quaternion.from_axis_angle(axis, math.pi)))


def symmetric_rotation_error(q_true: Quaternion, q_est: Quaternion, sym: SymmetryGroup) -> float:
    """Smallest rotation error over all symmetry-equivalent true attitudes."""
    return min(rotation_error(q_true.multiply(s), q_est) for s in sym.rotations)


@dataclass(frozen=True)
class ErrorReport:
    """Per-frame pose errors. ``e_r`` is radians; ``e_c = e_r + e_tn``."""

    e_r: float
    e_t: float
    e_tn: float
    e_c: float
    e_r_sym: Optional[float] = None
    e_k_hat: Optional[float] = None

    @property
    def e_r_deg(self) -> float:
        return math.degrees(self.e_r)

    @property
    def e_r_sym_deg(self) -> Optional[float]:
        return None if self.e_r_sym is None else math.degrees(self.e_r_sym)


def make_report(
    pose_true,
    pose_est,
    sym: Optional[SymmetryGroup] = None,
    e_k_hat: Optional[float] = None,
) -> ErrorReport:
    """Score an estimated pose against ground truth."""
    e_r = rotation_error(pose_true.rotation, pose_est.rotation)
    e_t = translation_error(pose_true.translation, pose_est.translation)
    e_tn = normalized_translation_error(pose_true.translation, pose_est.translation)
    e_r_sym = None
    if sym is not None:
        e_r_sym = symmetric_rotation_error(pose_true.rotation, pose_est.rotation, sym)
    return ErrorReport(
        e_r=e_r,
        e_t=e_t,
        e_tn=e_tn,
        e_c=combined_error(e_r, e_tn),
        e_r_sym=e_r_sym,
        e_k_hat=e_k_hat,
    )


@dataclass(frozen=True)
class MetricStats:
    median: float
    mean: float


@dataclass(frozen=True)
class EvalSummary:
    """Median/mean per metric over a set of reports."""

    metrics: dict[str, MetricStats]
    count: int
    proportion_rejected: float


# Metrics rendered in summaries, in display order. Angles in degrees.
_METRIC_KEYS = ("e_r_deg", "e_t", "e_tn", "e_c", "e_r_sym_deg", "e_k_hat")


def _collect(reports: Sequence[ErrorReport], key: str) -> Optional[np.ndarray]:
    values = [getattr(r, key) for r in reports]
    if any(v is None for v in values):
        return None
    return np.asarray(values, dtype=float)


def _summarize(reports: Sequence[ErrorReport], proportion_rejected: float) -> EvalSummary:
    stats = {}
    for key in _METRIC_KEYS:
        values = _collect(reports, key) if reports else None
        if values is not None:
            stats[key] = MetricStats(median=float(np.median(values)), mean=float(values.mean()))
    return EvalSummary(metrics=stats, count=len(reports), proportion_rejected=proportion_rejected)


def aggregate(
    reports: Sequence[ErrorReport], rejected: Sequence[bool]
) -> tuple[EvalSummary, EvalSummary]:
    """Summarize the full set and the accepted subset.

    ``rejected[i]`` flags report ``i`` as discarded by the error gate.
    The proportion rejected is a property of the whole run and is repeated
    on both summaries. An even-length median is the mean of the two
    central values (numpy's convention).
    """
    reports = list(reports)
    rejected = [bool(r) for r in rejected]
    if len(reports) != len(rejected):
        raise ValueError("reports and rejected flags must align")
    if not reports:
        raise EmptyDataset("cannot aggregate zero reports")
    prop = float(np.mean(rejected))
    accepted = [r for r, rej in zip(reports, rejected) if not rej]
    return _summarize(reports, prop), _summarize(accepted, prop)


def summary_csv(full: EvalSummary, accepted: EvalSummary) -> str:
    """Render both summaries as ``subset,metric,median,mean`` CSV."""
    lines = ["subset,metric,median,mean"]
    for name, summ in (("full", full), ("accepted", accepted)):
        for key, st in summ.metrics.items():
            lines.append(f"{name},{key},{st.median!r},{st.mean!r}")
        lines.append(f"{name},count,{summ.count},{summ.count}")
    lines.append(f"run,proportion_rejected,{full.proportion_rejected!r},{full.proportion_rejected!r}")
    return "\n".join(lines) + "\n"


def summary_table(full: EvalSummary, accepted: EvalSummary) -> str:
    """Render a fixed-width table mirroring the CSV, for human diffing."""
    rows = [("", "Metric", "Median", "Mean")]
    labels = {
        "e_r_deg": "E_R (deg)",
        "e_t": "E_T (m)",
        "e_tn": "E_T / range",
        "e_c": "Combined",
        "e_r_sym_deg": "E_R sym (deg)",
        "e_k_hat": "Est. kp error (px)",
    }
    for name, summ in (("All estimates", full), ("Accepted only", accepted)):
        first = True
        for key, st in summ.metrics.items():
            rows.append((name if first else "", labels[key], f"{st.median:.4f}", f"{st.mean:.4f}"))
            first = False
        rows.append((name if first else "", "Count", "-", str(summ.count)))
    rows.append(("Gate", "Proportion rejected", "-", f"{full.proportion_rejected:.4f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    return "\n".join(
        "  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip() for row in rows
    ) + "\n"
