"""Case bases: binary attribute tables with optional binary labels.

A case base is stored column-major friendly: ``values`` is an
``(n_cases, n_attributes)`` uint8 matrix whose column order is the schema
order, and ``labels`` holds 0/1 for labeled cases and -1 for unlabeled ones.
Everything here is immutable; operations return new case bases.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import LrknnError
from ._rng import substream
from ._special import chi2_sf

ORIGINAL = "original"
INJECTED = "injected-random"
UNLABELED = -1


class DatasetError(LrknnError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AttributeSchema:
    names: tuple[str, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        prov = tuple(self.provenance) or (ORIGINAL,) * len(names)
        object.__setattr__(self, "provenance", prov)
        if len(prov) != len(names):
            raise DatasetError("provenance length does not match attribute count")
        seen = set()
        for name in names:
            if not name or not name.strip():
                raise DatasetError("empty attribute name")
            if name in seen:
                raise DatasetError(f"duplicate attribute name: {name}")
            seen.add(name)
        for p in prov:
            if p not in (ORIGINAL, INJECTED):
                raise DatasetError(f"unknown provenance flag: {p}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"unknown attribute: {name}") from None

    def subset(self, names: Iterable[str]) -> "AttributeSchema":
        names = tuple(names)
        return AttributeSchema(names, tuple(self.provenance[self.index(n)] for n in names))


@dataclass(frozen=True)
class Case:
    id: str
    values: tuple[int, ...]
    label: int | None = None


@dataclass(frozen=True, eq=False)
class CaseBase:
    """Immutable table of cases sharing one attribute schema."""

    schema: AttributeSchema
    ids: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        values = np.array(self.values, dtype=np.uint8, copy=True).reshape(len(ids), len(self.schema))
        labels = np.array(self.labels, dtype=np.int8, copy=True).reshape(len(ids))
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise DatasetError(f"duplicate case id: {dup}")
        if values.size and values.max() > 1:
            raise DatasetError("non-binary value in attribute matrix")
        if np.any((labels != 0) & (labels != 1) & (labels != UNLABELED)):
            raise DatasetError("labels must be 0, 1 or unlabeled")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "labels", _readonly(labels))

    @classmethod
    def from_cases(cls, schema: AttributeSchema, cases: Sequence[Case]) -> "CaseBase":
        m = len(schema)
        rows = []
        for c in cases:
            if len(c.values) != m:
                raise DatasetError(f"case {c.id}: expected {m} values, got {len(c.values)}")
            if any(v not in (0, 1) for v in c.values):
                raise DatasetError(f"case {c.id}: non-binary value")
            rows.append(c.values)
        labels = [UNLABELED if c.label is None else c.label for c in cases]
        return cls(schema, tuple(c.id for c in cases), np.array(rows, dtype=np.int64).reshape(len(cases), m), labels)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def cases(self) -> list[Case]:
        return [self.case(i) for i in range(len(self))]

    def case(self, i: int) -> Case:
        label = int(self.labels[i])
        return Case(self.ids[i], tuple(int(v) for v in self.values[i]), None if label == UNLABELED else label)

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED

    @property
    def is_labeled(self) -> bool:
        return bool(np.all(self.labeled_mask))

    def y(self) -> np.ndarray:
        """Labels as a float vector; every case must be labeled."""
        if not self.is_labeled:
            raise DatasetError("case base contains unlabeled cases")
        return self.labels.astype(float)

    def take(self, indices: Sequence[int]) -> "CaseBase":
        idx = np.asarray(indices, dtype=np.intp)
        return CaseBase(self.schema, tuple(self.ids[i] for i in idx), self.values[idx], self.labels[idx])

    def select_attributes(self, names: Sequence[str]) -> "CaseBase":
        cols = [self.schema.index(n) for n in names]
        return CaseBase(self.schema.subset(names), self.ids, self.values[:, cols], self.labels)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def equals(self, other: "CaseBase") -> bool:
        return (
            self.schema == other.schema
            and self.ids == other.ids
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
        )


# -- CSV I/O ----------------------------------------------------------------


def load_case_base(source: TextIO | str) -> CaseBase:
    """Parse a case base from CSV text.

    Layout: ``id,label,<attr>...`` header, then one row per case. Attribute
    cells must be ``0``/``1``; the label cell may also be empty (unlabeled).
    ``source`` is a text stream or the CSV content itself.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty input: missing header row") from None
    header = [h.strip() for h in header]
    if len(header) < 2 or header[0] != "id" or header[1] != "label":
        raise DatasetError("header must start with 'id,label'")
    schema = AttributeSchema(tuple(header[2:]))
    width = len(header)
    ids, rows, labels = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != width:
            raise DatasetError(f"line {lineno}: malformed row length {len(row)} (expected {width})")
        cells = [c.strip() for c in row]
        label = cells[1]
        if label == "":
            labels.append(UNLABELED)
        elif label in ("0", "1"):
            labels.append(int(label))
        else:
            raise DatasetError(f"line {lineno}: non-binary value {label!r} in column 'label'")
        vals = []
        for name, cell in zip(header[2:], cells[2:]):
            if cell not in ("0", "1"):
                raise DatasetError(f"line {lineno}: non-binary value {cell!r} in column {name!r}")
            vals.append(int(cell))
        ids.append(cells[0])
        rows.append(vals)
    values = np.array(rows, dtype=np.uint8).reshape(len(ids), len(schema))
    return CaseBase(schema, tuple(ids), values, np.array(labels, dtype=np.int8))


def read_case_base(path) -> CaseBase:
    with open(path, newline="", encoding="utf-8") as fh:
        return load_case_base(fh)


def dump_case_base(cb: CaseBase, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "label", *cb.schema.names])
    for i, cid in enumerate(cb.ids):
        label = int(cb.labels[i])
        writer.writerow([cid, "" if label == UNLABELED else label, *map(int, cb.values[i])])


def case_base_to_csv(cb: CaseBase) -> str:
    buf = io.StringIO()
    dump_case_base(cb, buf)
    return buf.getvalue()


# -- validation -------------------------------------------------------------

INFO = "INFO"
WARNING = "WARNING"
FATAL = "FATAL"


@dataclass(frozen=True)
class Finding:
    level: str
    message: str
    attribute: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    n_cases: int
    n_labeled: int
    n_positive: int
    findings: tuple[Finding, ...] = ()

    @property
    def prevalence(self) -> float:
        return self.n_positive / self.n_labeled if self.n_labeled else float("nan")

    @property
    def fatal(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.level == FATAL)

    @property
    def ok(self) -> bool:
        return not self.fatal

    def messages(self) -> list[str]:
        return [f.message for f in self.findings]


def validate(cb: CaseBase) -> ValidationReport:
    """Report-only checks: counts, label prevalence and constant attributes.

    Constant attributes (all 0 or all 1 over the labeled cases) are FATAL
    for fitting because their coefficient has no standard error.
    """
    findings = []
    n = len(cb)
    mask = cb.labeled_mask
    n_labeled = int(mask.sum())
    n_pos = int((cb.labels == 1).sum())
    if n == 0:
        findings.append(Finding(FATAL, "no cases"))
        return ValidationReport(0, 0, 0, tuple(findings))
    findings.append(Finding(INFO, f"{n} cases, {n_labeled} labeled, {len(cb.schema)} attributes"))
    if n_labeled == 0:
        findings.append(Finding(FATAL, "no labeled cases"))
    else:
        findings.append(Finding(INFO, f"label prevalence {n_pos / n_labeled:.3f} ({n_pos} of {n_labeled})"))
        if n_pos in (0, n_labeled):
            findings.append(Finding(FATAL, "single-class labels"))
        labeled = cb.values[mask]
        for j, name in enumerate(cb.schema.names):
            col = labeled[:, j]
            if col.min() == col.max():
                findings.append(Finding(FATAL, f"constant attribute: {name}", name))
    if len(cb.schema) == 0:
        findings.append(Finding(WARNING, "no attributes"))
    return ValidationReport(n, n_labeled, n_pos, tuple(findings))


# -- splitting --------------------------------------------------------------


@dataclass(frozen=True)
class TriSplit:
    training: CaseBase
    setting: CaseBase
    evaluation: CaseBase
    seed: int

    @property
    def parts(self) -> tuple[CaseBase, CaseBase, CaseBase]:
        return (self.training, self.setting, self.evaluation)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(p) for p in self.parts)


def random_split(cb: CaseBase, sizes: Sequence[int], seed: int) -> TriSplit:
    """Shuffle ``cb`` under ``seed`` and cut it into training/setting/evaluation."""
    n_t, n_s, n_u = (int(s) for s in sizes)
    if min(n_t, n_s, n_u) < 0 or n_t + n_s + n_u != len(cb):
        raise DatasetError(f"split sizes {tuple(sizes)} do not sum to {len(cb)} cases")
    if not cb.is_labeled:
        raise DatasetError("cannot split: unlabeled case present")
    perm = substream(seed, "split").permutation(len(cb))
    return TriSplit(
        cb.take(perm[:n_t]),
        cb.take(perm[n_t:n_t + n_s]),
        cb.take(perm[n_t + n_s:]),
        int(seed),
    )


@dataclass(frozen=True)
class ChiSquareRow:
    name: str
    statistic: float
    p_value: float
    flagged: bool
    skipped: str | None = None


@dataclass(frozen=True)
class HomogeneityReport:
    alpha: float
    df: int
    attributes: tuple[ChiSquareRow, ...]
    label: ChiSquareRow

    @property
    def flagged(self) -> list[str]:
        return [r.name for r in self.attributes if r.flagged]

    def to_dict(self) -> dict:
        def row(r):
            return {"name": r.name, "statistic": r.statistic, "p_value": r.p_value,
                    "flagged": r.flagged, "skipped": r.skipped}
        return {"alpha": self.alpha, "df": self.df,
                "attributes": [row(r) for r in self.attributes], "label": row(self.label)}


def contingency_chi2(table: np.ndarray) -> tuple[float, int, bool]:
    """Pearson statistic of an r x c count table, no continuity correction.

    Returns (statistic, df, degenerate). A zero expected count with a
    nonzero observed count marks the table degenerate.
    """
    table = np.asarray(table, dtype=float)
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    stat = 0.0
    degenerate = False
    for o, e in zip(table.ravel(), expected.ravel()):
        if e == 0.0:
            if o != 0.0:
                degenerate = True
            continue
        stat += (o - e) ** 2 / e
    df = (table.shape[0] - 1) * (table.shape[1] - 1)
    return stat, df, degenerate


def _chi_row(name: str, columns: Sequence[np.ndarray], alpha: float) -> ChiSquareRow:
    table = np.array([[int(c.sum()), int(len(c) - c.sum())] for c in columns])
    stat, df, degenerate = contingency_chi2(table)
    if degenerate:
        return ChiSquareRow(name, float("nan"), float("nan"), False, "degenerate, test skipped")
    p = chi2_sf(float(stat), df)
    return ChiSquareRow(name, float(stat), float(p), bool(p < alpha))


def chi_square_homogeneity(split: TriSplit, alpha: float = 0.05) -> HomogeneityReport:
    """Per-attribute 3x2 chi-square test of equal distribution across the parts."""
    parts = split.parts
    if any(len(p) == 0 for p in parts):
        raise DatasetError("chi-square check needs three nonempty parts")
    schema = parts[0].schema
    rows = tuple(
        _chi_row(name, [p.values[:, j] for p in parts], alpha)
        for j, name in enumerate(schema.names)
    )
    if all(p.is_labeled for p in parts):
        label = _chi_row("label", [p.labels.astype(np.int64) for p in parts], alpha)
    else:
        label = ChiSquareRow("label", float("nan"), float("nan"), False, "unlabeled cases present")
    return HomogeneityReport(alpha, 2, rows, label)


# -- noise injection and synthesis -------------------------------------------


def random_attribute_names(count: int, prefix: str = "rnd") -> list[str]:
    width = max(3, len(str(count)))
    return [f"{prefix}_{i:0{width}d}" for i in range(1, count + 1)]


def inject_random_attributes(cb: CaseBase, count: int, seed: int) -> CaseBase:
    """Append ``count`` Bernoulli(0.5) attributes ``rnd_001``... to every case."""
    if count < 0:
        raise DatasetError("count must be non-negative")
    if count == 0:
        return cb
    names = random_attribute_names(count)
    clash = [n for n in names if n in cb.schema.names]
    if clash:
        raise DatasetError(f"attribute name collision: {clash[0]}")
    noise = substream(seed, "inject").integers(0, 2, size=(len(cb), count), dtype=np.uint8)
    schema = AttributeSchema(cb.schema.names + tuple(names), cb.schema.provenance + (INJECTED,) * count)
    return CaseBase(schema, cb.ids, np.hstack([cb.values, noise]), cb.labels)


@dataclass(frozen=True)
class InformativeAttribute:
    name: str
    prevalence: float
    coefficient: float


@dataclass(frozen=True)
class SyntheticSpec:
    n_cases: int
    informative_attributes: tuple[InformativeAttribute, ...]
    intercept: float = 0.0
    noise_attributes: int = 0
    seed: int = 1

    def __post_init__(self):
        attrs = tuple(
            a if isinstance(a, InformativeAttribute)
            else InformativeAttribute(**a) if isinstance(a, dict)
            else InformativeAttribute(*a)
            for a in self.informative_attributes
        )
        object.__setattr__(self, "informative_attributes", attrs)
        if self.n_cases < 1:
            raise DatasetError("n_cases must be at least 1")
        if self.noise_attributes < 0:
            raise DatasetError("noise_attributes must be non-negative")
        for a in attrs:
            if not 0.0 < a.prevalence < 1.0:
                raise DatasetError(f"prevalence of {a.name} must lie strictly inside (0, 1)")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def generate_synthetic(spec: SyntheticSpec) -> CaseBase:
    """Draw a labeled case base from a planted logistic model.

    Informative attributes are independent Bernoulli(prevalence); noise
    attributes are Bernoulli(0.5) with no effect on the label.
    """
    rng = substream(spec.seed, "generate")
    n = spec.n_cases
    prev = np.array([a.prevalence for a in spec.informative_attributes])
    beta = np.array([a.coefficient for a in spec.informative_attributes])
    informative = (rng.random((n, len(prev))) < prev).astype(np.uint8)
    noise = rng.integers(0, 2, size=(n, spec.noise_attributes), dtype=np.uint8)
    eta = spec.intercept + informative.astype(float) @ beta
    labels = (rng.random(n) < _sigmoid(eta)).astype(np.int8)
    names = tuple(a.name for a in spec.informative_attributes) + tuple(
        random_attribute_names(spec.noise_attributes, "noise")
    )
    prov = (ORIGINAL,) * len(prev) + (INJECTED,) * spec.noise_attributes
    width = len(str(n))
    ids = tuple(f"c{i:0{width}d}" for i in range(1, n + 1))
    return CaseBase(AttributeSchema(names, prov), ids, np.hstack([informative, noise]), labels)


def expected_prevalence(attrs: Sequence[InformativeAttribute], intercept: float,
                        n_draws: int = 200_000, seed: int = 0) -> float:
    """Monte Carlo estimate of P(y = 1) under the planted model."""
    rng = np.random.default_rng(seed)
    prev = np.array([a.prevalence for a in attrs])
    beta = np.array([a.coefficient for a in attrs])
    x = (rng.random((n_draws, len(prev))) < prev).astype(float)
    return float(_sigmoid(intercept + x @ beta).mean())


def calibrate_intercept(attrs: Sequence[InformativeAttribute], target: float,
                        lo: float = -20.0, hi: float = 20.0, tol: float = 1e-6) -> float:
    """Intercept giving label prevalence ``target`` (bisection on a fixed MC sample)."""
    rng = np.random.default_rng(0)
    prev = np.array([a.prevalence for a in attrs])
    beta = np.array([a.coefficient for a in attrs])
    lin = (rng.random((200_000, len(prev))) < prev).astype(float) @ beta
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _sigmoid(mid + lin).mean() < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# Binary factors of the kidney-transplant waiting-list example: one dominant
# factor (age), a few moderate ones and several weak ones.
COHORT_ATTRIBUTES = (
    InformativeAttribute("age_ge60", 0.60, -2.6),
    InformativeAttribute("sex_male", 0.61, 0.25),
    InformativeAttribute("employed", 0.30, 0.45),
    InformativeAttribute("hypertension", 0.55, 0.70),
    InformativeAttribute("diabetes", 0.30, -0.60),
    InformativeAttribute("resp_failure", 0.12, -0.50),
    InformativeAttribute("heart_failure", 0.20, -0.70),
    InformativeAttribute("ischemic_hd", 0.22, -0.90),
    InformativeAttribute("arrhythmia", 0.18, -0.40),
    InformativeAttribute("serology_pos", 0.10, -0.30),
    InformativeAttribute("liver_cirrhosis", 0.10, -0.60),
    InformativeAttribute("disability", 0.15, -0.80),
    InformativeAttribute("malignancy", 0.15, -1.10),
    InformativeAttribute("hb_lt11", 0.55, -0.20),
    InformativeAttribute("private_facility", 0.35, -0.80),
    InformativeAttribute("transplant_followup", 0.40, 0.90),
    InformativeAttribute("hemodialysis", 0.85, -0.30),
    InformativeAttribute("urgent_start", 0.35, -0.40),
    InformativeAttribute("catheter_first", 0.45, -0.30),
)


def cohort_spec(seed: int = 1, n_cases: int = 1137, prevalence: float = 0.23,
                     noise_attributes: int = 0) -> SyntheticSpec:
    """19 binary factors, 1137 cases, intercept tuned to the target prevalence."""
    intercept = calibrate_intercept(COHORT_ATTRIBUTES, prevalence)
    return SyntheticSpec(n_cases, COHORT_ATTRIBUTES, intercept, noise_attributes, seed)


def prevalence_standard_error(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)
