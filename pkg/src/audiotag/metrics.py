"""Multi-label evaluation with per-class scores and their macro averages."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    return scores, labels.astype(bool)


def average_precision(scores, labels) -> float:
    """Non-interpolated AP: mean precision at the rank of each positive.

    Items are ranked by descending score; ties keep their input order.
    Returns NaN when there are no positives.
    """
    scores, labels = _check(scores, labels)
    n_pos = labels.sum()
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.arange(1, hits.size + 1)
    precision = np.cumsum(hits) / ranks
    return float(precision[hits].sum() / n_pos)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted one half; NaN if one class is absent."""
    from scipy.stats import rankdata

    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """(fpr, tpr) points, one per distinct threshold, starting at (0, 0)."""
    scores, labels = _check(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = (last_of_group + 1) - tps
    tpr = np.r_[0.0, tps / max(labels.sum(), 1)]
    fpr = np.r_[0.0, fps / max((~labels).sum(), 1)]
    return fpr, tpr


def auc_trapezoid(scores, labels) -> float:
    """ROC area by trapezoidal integration; independent of :func:`auc_roc`."""
    scores, labels = _check(scores, labels)
    if labels.all() or not labels.any():
        return float("nan")
    fpr, tpr = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


# Acklam's rational approximation of the inverse normal CDF
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF (rational approximation + one Newton step)."""
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise ValueError(f"probability {p} outside [0, 1]")
    if p > 0.5:
        return -norm_ppf(1.0 - p)  # exact subtraction; keeps the upper tail accurate
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1
        )
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
        )
    err = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    density = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    return x - err / density


def d_prime(auc: float) -> float:
    """sqrt(2) * inverse-normal(AUC); +/-inf when AUC is 1 or 0."""
    if math.isnan(auc):
        return float("nan")
    return math.sqrt(2.0) * norm_ppf(auc)


# --------------------------------------------------------------------------
# reports


@dataclass
class ClassMetrics:
    class_index: int
    ap: float
    auc: float
    d_prime: float
    n_eval_clips: int

    @property
    def saturated(self):
        return math.isinf(self.d_prime)


@dataclass
class MetricReport:
    per_class: list
    mAP: float
    mAUC: float
    d_prime: float
    excluded: list = field(default_factory=list)

    @property
    def macro(self):
        return {"mAP": self.mAP, "mAUC": self.mAUC, "d_prime": self.d_prime}

    def to_dict(self):
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        rows = []
        for c in self.per_class:
            row = {k: clean(v) for k, v in asdict(c).items()}
            row["d_prime_saturated"] = c.saturated
            rows.append(row)
        return {
            "per_class": rows,
            "macro": {k: clean(v) for k, v in self.macro.items()},
            "excluded_classes": list(self.excluded),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def evaluate_scores(scores, targets) -> MetricReport:
    """Per-class metrics for an (N, K) score matrix against (N, K) 0/1 targets.

    Classes without a positive eval clip are excluded from every macro mean;
    classes without a negative are dropped from the AUC mean only.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets) > 0.5
    if scores.shape != targets.shape:
        raise ValueError(f"scores {scores.shape} vs targets {targets.shape}")
    per_class, excluded = [], []
    for k in range(scores.shape[1]):
        n_pos = int(targets[:, k].sum())
        if n_pos == 0:
            excluded.append(k)
            continue
        ap = average_precision(scores[:, k], targets[:, k])
        auc = auc_roc(scores[:, k], targets[:, k])
        per_class.append(ClassMetrics(k, ap, auc, d_prime(auc), n_pos))
    aps = [c.ap for c in per_class]
    aucs = [c.auc for c in per_class if not math.isnan(c.auc)]
    m_ap = float(np.mean(aps)) if aps else float("nan")
    m_auc = float(np.mean(aucs)) if aucs else float("nan")
    return MetricReport(per_class, m_ap, m_auc, d_prime(m_auc), excluded)


def classwise_report(report: MetricReport, clip_counts=None, class_names=None):
    """Rows ordered by training clip count (descending), as plain dicts."""
    rows = []
    for c in report.per_class:
        rows.append(
            {
                "class_index": c.class_index,
                "name": class_names[c.class_index] if class_names else str(c.class_index),
                "train_clips": int(clip_counts[c.class_index]) if clip_counts is not None else None,
                "ap": c.ap,
                "auc": c.auc,
                "d_prime": c.d_prime,
                "eval_clips": c.n_eval_clips,
            }
        )
    if clip_counts is not None:
        rows.sort(key=lambda r: (-r["train_clips"], r["class_index"]))
    return rows


def format_table(rows, report: MetricReport | None = None) -> str:
    lines = [f"{'class':<24} {'train':>7} {'eval':>5} {'AP':>6} {'AUC':>6} {'d-prime':>8}"]
    for r in rows:
        train = "-" if r["train_clips"] is None else str(r["train_clips"])
        lines.append(
            f"{r['name'][:24]:<24} {train:>7} {r['eval_clips']:>5} "
            f"{r['ap']:6.3f} {r['auc']:6.3f} {r['d_prime']:8.3f}"
        )
    if report is not None:
        lines.append(f"mAP {report.mAP:.3f}  mAUC {report.mAUC:.3f}  d-prime {report.d_prime:.3f}")
        if report.excluded:
            lines.append(f"excluded (no eval positives): {report.excluded}")
    return "\n".join(lines)
