"""Soft K-nearest-neighbour retrieval over binary cases.

Distance is weighted disagreement, ``d(p, q) = sum_a w_a * (p_a XOR q_a)``.
Neighbours are ranked by (distance, case id) and fused with

    s = sum(w_p / d * y) / sum(w_p / d)

where ``w_p`` are raw case weights. When some neighbours sit at distance 0
the score is their case-weighted label mean (the limit of the ratio as
``d -> 0``).

All sums run left to right in a fixed order (attribute order for distances,
neighbour order for fusion), so the vectorised batch paths reproduce the
scalar ones bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import LrknnError
from .dataset import Case, CaseBase
from .evaluation import auc
from .weighting import AttributeWeights, CaseWeights

TIE_BY_ID = "id"
ZERO_LIMIT = "limit"


class RetrievalError(LrknnError):
    pass


@dataclass(frozen=True)
class Neighbor:
    case_id: str
    distance: float
    label: int
    raw_case_weight: float


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 1
    k_max: int | None = None
    tie_rule: str = TIE_BY_ID
    zero_distance_rule: str = ZERO_LIMIT

    def __post_init__(self):
        if self.k < 1:
            raise RetrievalError("k must be a positive integer")
        if self.k_max is not None and self.k_max < self.k:
            raise RetrievalError("k_max must be at least k")
        if self.tie_rule != TIE_BY_ID:
            raise RetrievalError(f"unsupported tie rule: {self.tie_rule}")
        if self.zero_distance_rule != ZERO_LIMIT:
            raise RetrievalError(f"unsupported zero-distance rule: {self.zero_distance_rule}")


@dataclass(frozen=True)
class Prediction:
    case_id: str
    score: float
    neighbors: tuple[Neighbor, ...]

    @property
    def low_confidence(self) -> bool:
        """Every neighbour disagrees on all weighted attributes."""
        return all(n.distance >= 1.0 - 1e-12 for n in self.neighbors)

    def trace(self) -> dict:
        return {
            "case_id": self.case_id,
            "score": self.score,
            "low_confidence": self.low_confidence,
            "neighbors": [
                {"id": n.case_id, "distance": n.distance, "label": n.label, "case_weight": n.raw_case_weight}
                for n in self.neighbors
            ],
        }


def default_k_max(n_labeled: int) -> int:
    return max(1, min(50, math.isqrt(n_labeled) * 3, n_labeled))


# -- distance ---------------------------------------------------------------


def _check_schema(names: Sequence[str], w: AttributeWeights):
    if tuple(names) != w.names:
        raise RetrievalError("attribute weights do not match the case schema")


def distance(p: Sequence[int], q: Sequence[int], w: AttributeWeights) -> float:
    """Weighted Hamming distance between two binary vectors."""
    if not len(p) == len(q) == len(w.weights):
        raise RetrievalError("schema mismatch: vectors and weights differ in length")
    d = 0.0
    for a, wa in enumerate(w.weights):
        if wa and p[a] != q[a]:
            d += float(wa)
    return d


def distance_matrix(queries: np.ndarray, labeled: np.ndarray, w: AttributeWeights) -> np.ndarray:
    """All query-by-labeled distances, accumulated in attribute order."""
    queries = np.asarray(queries)
    labeled = np.asarray(labeled)
    if queries.shape[1] != len(w.weights) or labeled.shape[1] != len(w.weights):
        raise RetrievalError("schema mismatch: vectors and weights differ in length")
    d = np.zeros((queries.shape[0], labeled.shape[0]))
    for a, wa in enumerate(w.weights):
        if wa:
            d += wa * (queries[:, a, None] != labeled[None, :, a])
    return d


# -- selection and fusion ----------------------------------------------------


def _id_ranks(ids: Sequence[str]) -> np.ndarray:
    ranks = np.empty(len(ids), dtype=np.intp)
    ranks[np.array(sorted(range(len(ids)), key=ids.__getitem__), dtype=np.intp)] = np.arange(len(ids))
    return ranks


def _case_weight_vector(labeled: CaseBase, w_p: CaseWeights) -> np.ndarray:
    if w_p.ids == labeled.ids:
        return w_p.raw
    lookup = dict(zip(w_p.ids, w_p.raw))
    try:
        return np.array([lookup[i] for i in labeled.ids])
    except KeyError as e:
        raise RetrievalError(f"no case weight for labeled case {e.args[0]}") from None


def _order(d_row: np.ndarray, id_rank: np.ndarray, k: int) -> np.ndarray:
    return np.lexsort((id_rank, d_row))[:k]


def _query_values(query: Case | Sequence[int]) -> np.ndarray:
    return np.asarray(query.values if isinstance(query, Case) else query, dtype=np.uint8)


def select_neighbors(query: Case | Sequence[int], labeled: CaseBase, w: AttributeWeights,
                     k: int, tie_rule: str = TIE_BY_ID,
                     case_weights: CaseWeights | None = None) -> list[Neighbor]:
    """The ``k`` closest labeled cases, sorted by (distance, id)."""
    if tie_rule != TIE_BY_ID:
        raise RetrievalError(f"unsupported tie rule: {tie_rule}")
    if k < 1 or k > len(labeled):
        raise RetrievalError(f"k={k} outside 1..{len(labeled)} labeled cases")
    _check_schema(labeled.schema.names, w)
    if not labeled.is_labeled:
        raise RetrievalError("retrieval base contains unlabeled cases")
    d = distance_matrix(_query_values(query)[None, :], labeled.values, w)[0]
    cw = np.ones(len(labeled)) if case_weights is None else _case_weight_vector(labeled, case_weights)
    idx = _order(d, _id_ranks(labeled.ids), k)
    return [Neighbor(labeled.ids[i], float(d[i]), int(labeled.labels[i]), float(cw[i])) for i in idx]


def fuse(neighbors: Sequence[Neighbor], zero_distance_rule: str = ZERO_LIMIT) -> float:
    """Inverse-distance, case-weighted label average of the neighbours."""
    if zero_distance_rule != ZERO_LIMIT:
        raise RetrievalError(f"unsupported zero-distance rule: {zero_distance_rule}")
    if not neighbors:
        raise RetrievalError("cannot fuse an empty neighbour list")
    num = 0.0
    den = 0.0
    exact = [n for n in neighbors if n.distance == 0.0]
    if exact:
        for n in exact:
            num += n.raw_case_weight * n.label
            den += n.raw_case_weight
    else:
        if any(n.distance < 0 for n in neighbors):
            raise RetrievalError("negative distance")
        for n in neighbors:
            t = n.raw_case_weight / n.distance
            num += t * n.label
            den += t
        if not math.isfinite(den):
            # a subnormal distance overflowed w/d; rescale by the smallest distance
            d_min = min(n.distance for n in neighbors)
            num = den = 0.0
            for n in neighbors:
                t = n.raw_case_weight * (d_min / n.distance)
                num += t * n.label
                den += t
    return num / den


def predict(query: Case, labeled: CaseBase, w_a: AttributeWeights, w_p: CaseWeights,
            cfg: RetrievalConfig) -> Prediction:
    neighbors = select_neighbors(query, labeled, w_a, cfg.k, cfg.tie_rule, w_p)
    cid = query.id if isinstance(query, Case) else ""
    return Prediction(cid, fuse(neighbors, cfg.zero_distance_rule), tuple(neighbors))


# -- batch scoring ----------------------------------------------------------


def _sorted_neighbourhoods(queries: CaseBase, labeled: CaseBase, w_a: AttributeWeights,
                           w_p: CaseWeights, k: int):
    if k < 1 or k > len(labeled):
        raise RetrievalError(f"k={k} outside 1..{len(labeled)} labeled cases")
    _check_schema(labeled.schema.names, w_a)
    _check_schema(queries.schema.names, w_a)
    if not labeled.is_labeled:
        raise RetrievalError("retrieval base contains unlabeled cases")
    d = distance_matrix(queries.values, labeled.values, w_a)
    id_rank = _id_ranks(labeled.ids)
    order = np.empty((len(queries), k), dtype=np.intp)
    for i in range(len(queries)):
        order[i] = _order(d[i], id_rank, k)
    ds = np.take_along_axis(d, order, axis=1)
    cw = _case_weight_vector(labeled, w_p)[order]
    y = labeled.labels.astype(float)[order]
    return order, ds, cw, y


def _scores_for_all_k(ds, cw, y) -> np.ndarray:
    """Fused score for every prefix length; column j holds K = j + 1."""
    zero = ds == 0.0
    safe = np.where(zero, 1.0, ds)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = np.where(zero, 0.0, cw / safe)
        num = np.cumsum(t * y, axis=1)
        den = np.cumsum(t, axis=1)
        blown = ~np.isfinite(den)
        if blown.any():
            # same rescue as fuse: rows are sorted, so column 0 holds the smallest distance
            t_s = np.where(zero, 0.0, cw * (safe[:, :1] / safe))
            num = np.where(blown, np.cumsum(t_s * y, axis=1), num)
            den = np.where(blown, np.cumsum(t_s, axis=1), den)
    zw = np.where(zero, cw, 0.0)
    num0 = np.cumsum(zw * y, axis=1)
    den0 = np.cumsum(zw, axis=1)
    has_zero = np.cumsum(zero, axis=1) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(has_zero, num0 / np.where(has_zero, den0, 1.0), num / np.where(has_zero, 1.0, den))
    return s


def predict_batch(queries: CaseBase, labeled: CaseBase, w_a: AttributeWeights, w_p: CaseWeights,
                  cfg: RetrievalConfig, with_neighbors: bool = False):
    """Score every case of ``queries``; returns scores, or Prediction objects."""
    order, ds, cw, y = _sorted_neighbourhoods(queries, labeled, w_a, w_p, cfg.k)
    scores = _scores_for_all_k(ds, cw, y)[:, cfg.k - 1]
    if not with_neighbors:
        return scores
    out = []
    for i, cid in enumerate(queries.ids):
        nbrs = tuple(
            Neighbor(labeled.ids[j], float(ds[i, r]), int(y[i, r]), float(cw[i, r]))
            for r, j in enumerate(order[i])
        )
        out.append(Prediction(cid, float(scores[i]), nbrs))
    return out


@dataclass(frozen=True)
class TuneResult:
    k: int
    metric_values: tuple[float, ...]


def smallest_argmax(values: Sequence[float], resolution: float = 1e-12) -> int:
    """1-based index of the first value within ``resolution`` of the maximum."""
    if not len(values):
        raise RetrievalError("no metric values")
    best = max(values)
    return next(i for i, v in enumerate(values, start=1) if v >= best - resolution)


def tune_k(labeled: CaseBase, setting: CaseBase, w_a: AttributeWeights, w_p: CaseWeights,
           k_max: int | None = None, metric: Callable = auc) -> TuneResult:
    """Smallest K in 1..k_max maximising ``metric(scores, labels)`` on the setting set."""
    if len(setting) == 0:
        raise RetrievalError("empty setting set")
    if not setting.is_labeled:
        raise RetrievalError("setting set must be labeled")
    k_max = default_k_max(len(labeled)) if k_max is None else k_max
    if k_max < 1 or k_max > len(labeled):
        raise RetrievalError(f"k_max={k_max} outside 1..{len(labeled)} labeled cases")
    _, ds, cw, y = _sorted_neighbourhoods(setting, labeled, w_a, w_p, k_max)
    all_scores = _scores_for_all_k(ds, cw, y)
    labels = setting.labels.astype(int)
    values = tuple(float(metric(all_scores[:, j], labels)) for j in range(k_max))
    return TuneResult(smallest_argmax(values), values)


# -- export -----------------------------------------------------------------


def predictions_to_csv(ids: Sequence[str], scores: Sequence[float], labels: Sequence[int] | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "score", "label"])
    for i, (cid, s) in enumerate(zip(ids, scores)):
        lab = "" if labels is None or labels[i] < 0 else int(labels[i])
        writer.writerow([cid, repr(float(s)), lab])
    return buf.getvalue()


def traces_to_json(predictions: Sequence[Prediction]) -> str:
    return json.dumps([p.trace() for p in predictions], indent=2)
