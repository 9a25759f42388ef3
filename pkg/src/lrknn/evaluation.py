"""AUC (Mann-Whitney form), ROC staircase and bootstrap AUC intervals."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from . import LrknnError
from ._rng import derive_seed


class EvaluationError(LrknnError):
    pass


@dataclass(frozen=True, eq=False)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        s = np.array(self.scores, dtype=float).ravel()
        y = np.array(self.labels, dtype=np.int64).ravel()
        if len(s) != len(y):
            raise EvaluationError("scores and labels differ in length")
        if len(s) == 0:
            raise EvaluationError("empty scored set")
        if not np.all(np.isfinite(s)):
            raise EvaluationError("non-finite score")
        if np.any((y != 0) & (y != 1)):
            raise EvaluationError("labels must be 0 or 1")
        s.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self):
        return len(self.scores)


def _as_arrays(scores, labels):
    if labels is None:
        if not isinstance(scores, ScoredSet):
            raise TypeError("labels required unless a ScoredSet is given")
        return scores.scores, scores.labels
    return np.asarray(scores, dtype=float), np.asarray(labels)


def _class_counts(y):
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs at least one positive and one negative case")
    return n_pos, n_neg


def auc(scores, labels=None) -> float:
    """Probability that a random positive outscores a random negative, ties half.

    Computed from mid-ranks: ``U = R_pos - n_pos (n_pos + 1) / 2``. Rank sums
    are half-integers, so ``U`` is exact and equals the pairwise count.
    """
    s, y = _as_arrays(scores, labels)
    n_pos, n_neg = _class_counts(y)
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    midrank = upper - (counts - 1) / 2.0
    r_pos = float(np.sum(midrank[inverse][y == 1]))
    u = r_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores, labels=None) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) for ``score >= threshold`` at every distinct score.

    The first point is (inf, 0, 0); the last reaches (1, 1).
    """
    s, y = _as_arrays(scores, labels)
    n_pos, n_neg = _class_counts(y)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    pts = [(math.inf, 0.0, 0.0)]
    pts += [(float(s_sorted[i]), fp[i] / n_neg, tp[i] / n_pos) for i in last]
    return pts


def trapezoid_area(points: Sequence[tuple[float, float, float]]) -> float:
    area = 0.0
    for (_, x0, y0), (_, x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def percentile(values: Sequence[float], q: float) -> float:
    """Linear interpolation between order statistics at 1-based rank ``(k-1) q + 1``."""
    x = sorted(values)
    if not x:
        raise EvaluationError("no values")
    h = (len(x) - 1) * q
    lo = math.floor(h)
    if lo + 1 >= len(x):
        return float(x[-1])
    return float(x[lo] + (h - lo) * (x[lo + 1] - x[lo]))


@dataclass(frozen=True)
class AucEstimate:
    point_auc: float
    boot_mean: float
    ci_low: float
    ci_high: float
    replicates: int
    seed: int
    values: tuple[float, ...] = ()
    failed: int = 0

    def to_dict(self) -> dict:
        return {
            "point_auc": self.point_auc,
            "boot_mean": self.boot_mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "replicates": self.replicates,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _replicate(y, s, n, root, index, max_retries):
    rng = np.random.default_rng(np.random.SeedSequence([root, index]))
    for _ in range(max_retries + 1):
        idx = rng.integers(0, n, size=n)
        yb = y[idx]
        if 0 < np.count_nonzero(yb) < n:
            return auc(s[idx], yb)
    return None


def bootstrap_auc(scores, labels=None, k: int = 500, seed: int = 1, *,
                  max_retries: int = 100, workers: int | None = None,
                  confidence: float = 0.95) -> AucEstimate:
    """Mean AUC over ``k`` resamples with replacement and its percentile interval.

    Replicate ``b`` draws from its own stream seeded by (seed, b), so the
    result is the same whether replicates run serially or in a thread pool.
    A resample holding a single class is redrawn up to ``max_retries`` times
    and then dropped.
    """
    s, y = _as_arrays(scores, labels)
    if k < 1:
        raise EvaluationError("replicate count must be at least 1")
    point = auc(s, y)
    n = len(s)
    root = derive_seed(seed, "bootstrap")

    def run(b):
        return _replicate(y, s, n, root, b, max_retries)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(b) for b in range(k)]
    values = tuple(v for v in results if v is not None)
    if not values:
        raise EvaluationError("every bootstrap replicate failed to draw both classes")
    tail = (1.0 - confidence) / 2.0
    return AucEstimate(
        point_auc=point,
        boot_mean=math.fsum(values) / len(values),
        ci_low=percentile(values, tail),
        ci_high=percentile(values, 1.0 - tail),
        replicates=len(values),
        seed=int(seed),
        values=values,
        failed=k - len(values),
    )


# -- I/O --------------------------------------------------------------------


def load_scores(source: TextIO | str) -> ScoredSet:
    """Read ``case_id,score,label`` CSV rows (the prediction export format)."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    if reader.fieldnames is None or not {"score", "label"} <= set(reader.fieldnames):
        raise EvaluationError("scores file needs 'score' and 'label' columns")
    ids, scores, labels = [], [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            scores.append(float(row["score"]))
            labels.append(int(row["label"]))
        except (TypeError, ValueError):
            raise EvaluationError(f"line {lineno}: bad score or label") from None
        ids.append(row.get("case_id") or str(lineno - 1))
    return ScoredSet(scores, labels, ids)


def roc_to_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "fpr", "tpr"])
    for t, f, p in points:
        writer.writerow([repr(float(t)), repr(float(f)), repr(float(p))])
    return buf.getvalue()


def replicates_to_csv(est: AucEstimate) -> str:
    return "replicate,auc\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(est.values))
