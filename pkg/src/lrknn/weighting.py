"""Attribute weights from Wald statistics, case weights from Pearson residuals."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import LrknnError
from .dataset import AttributeSchema, CaseBase

WALD = "wald"
PEARSON = "pearson"
UNIFORM = "uniform"

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
MIN_CASE_WEIGHT = float(np.finfo(float).tiny)


class WeightError(LrknnError):
    pass


@dataclass(frozen=True, eq=False)
class AttributeWeights:
    """Non-negative weights over a schema, summing to one."""

    names: tuple[str, ...]
    weights: np.ndarray
    source: str

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "weights", w)
        if len(w) != len(self.names):
            raise WeightError("weights and names differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise WeightError("attribute weights must be finite and non-negative")

    def as_dict(self) -> dict[str, float]:
        return {n: float(w) for n, w in zip(self.names, self.weights)}

    def __getitem__(self, name: str) -> float:
        return float(self.weights[self.names.index(name)])


@dataclass(frozen=True, eq=False)
class CaseWeights:
    """Unnormalized per-case weights, aligned with a labeled case base.

    Normalization (over the whole labeled set or over the K neighbours) is
    left to fusion, where it cancels.
    """

    ids: tuple[str, ...]
    raw: np.ndarray
    source: str

    def __post_init__(self):
        raw = np.array(self.raw, dtype=float)
        raw.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "raw", raw)
        if len(raw) != len(self.ids):
            raise WeightError("raw weights and ids differ in length")
        if np.any(raw <= 0) or not np.all(np.isfinite(raw)):
            raise WeightError("case weights must be finite and positive")


def _renormalize(w: np.ndarray) -> np.ndarray:
    w = w / w.sum()
    # push the rounding residue onto the largest entry so the sum is 1
    residue = 1.0 - math.fsum(w)
    if residue:
        i = int(np.argmax(w))
        w[i] += residue
    return w


def attribute_weights_from_wald(wald: Mapping[str, float], full_schema: AttributeSchema | Sequence[str]) -> AttributeWeights:
    """omega_a = Wald_a / sum(Wald); schema attributes missing from ``wald`` get 0."""
    names = tuple(full_schema.names if isinstance(full_schema, AttributeSchema) else full_schema)
    unknown = set(wald) - set(names)
    if unknown:
        raise WeightError(f"Wald statistics for attributes outside the schema: {sorted(unknown)}")
    w = np.array([float(wald.get(n, 0.0)) for n in names])
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightError("Wald statistics must be finite and non-negative")
    if not np.any(w > 0):
        raise WeightError("all Wald statistics are zero; attribute weights undefined")
    return AttributeWeights(names, _renormalize(w), WALD)


def uniform_attribute_weights(schema: AttributeSchema | Sequence[str],
                              active: Sequence[str] | None = None) -> AttributeWeights:
    """1/|A| on every attribute, or 1/|active| on ``active`` and 0 elsewhere."""
    names = tuple(schema.names if isinstance(schema, AttributeSchema) else schema)
    if not names:
        raise WeightError("empty schema")
    if active is None:
        w = np.full(len(names), 1.0 / len(names))
    else:
        active = set(active)
        if not active:
            raise WeightError("no active attributes")
        w = np.array([1.0 if n in active else 0.0 for n in names]) / len(active)
    return AttributeWeights(names, w, UNIFORM)


def normal_density(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def case_weights_from_residuals(residuals: Sequence[float], ids: Sequence[str] | None = None) -> CaseWeights:
    """Standard normal density at |residual|: well-explained cases weigh most."""
    eps = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(eps)):
        raise WeightError("non-finite Pearson residual")
    # the density underflows beyond |eps| ~ 38.6; keep such cases at the
    # smallest positive weight instead of zero
    raw = np.maximum(normal_density(np.abs(eps)), MIN_CASE_WEIGHT)
    if ids is None:
        ids = tuple(str(i) for i in range(len(eps)))
    return CaseWeights(ids, raw, PEARSON)


def uniform_case_weights(labeled: CaseBase) -> CaseWeights:
    if len(labeled) == 0:
        raise WeightError("empty case base")
    return CaseWeights(labeled.ids, np.ones(len(labeled)), UNIFORM)


def weights_to_csv(w: AttributeWeights) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["attribute", "weight", "source"])
    for name, value in zip(w.names, w.weights):
        writer.writerow([name, repr(float(value)), w.source])
    return buf.getvalue()
