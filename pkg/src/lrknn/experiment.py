"""The five-algorithm comparison: scenarios x attribute modes x variants.

One tri-split per noise scenario (the same permutation for every scenario,
since injection only appends columns), one logistic fit per
(scenario, mode), then each variant scores the evaluation part and gets a
bootstrap AUC. Failed cells keep their error message and the run goes on.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import LrknnError, __version__
from .dataset import (
    CaseBase,
    TriSplit,
    chi_square_homogeneity,
    generate_synthetic,
    inject_random_attributes,
    cohort_spec,
    random_split,
    read_case_base,
)
from .evaluation import AucEstimate, ScoredSet, bootstrap_auc
from .logistic import FitConfig, LogisticModel, fit, pearson_residuals, predict_many, stepwise_select, wald_statistics
from .retrieval import RetrievalConfig, default_k_max, predict_batch, tune_k
from .weighting import (
    AttributeWeights,
    CaseWeights,
    attribute_weights_from_wald,
    case_weights_from_residuals,
    uniform_attribute_weights,
    uniform_case_weights,
)

ALL = "all"
SELECTED = "selected"
MODES = (ALL, SELECTED)


class ExperimentError(LrknnError):
    pass


class Variant(str, Enum):
    LR = "LR"
    CBR = "CBR"
    CBR_WA = "CBR+WA"
    CBR_WP = "CBR+WP"
    CBR_WA_WP = "CBR+WA+WP"

    @property
    def is_knn(self) -> bool:
        return self is not Variant.LR

    @property
    def weights_attributes(self) -> bool:
        return self in (Variant.CBR_WA, Variant.CBR_WA_WP)

    @property
    def weights_cases(self) -> bool:
        return self in (Variant.CBR_WP, Variant.CBR_WA_WP)


ALL_VARIANTS = tuple(Variant)


def _tuple(value, cast=str):
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    return tuple(cast(v) for v in value)


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run.

    ``data`` is a CSV path or ``synthetic:cohort`` (the 19-factor planted
    model, drawn under ``seed``). ``sizes`` may be empty, meaning thirds.
    """

    data: str = "synthetic:cohort"
    sizes: tuple[int, ...] = (379, 379, 379)
    seed: int = 1
    noise: tuple[int, ...] = (0, 50)
    modes: tuple[str, ...] = MODES
    variants: tuple[Variant, ...] = ALL_VARIANTS
    replicates: int = 500
    k_max: int | None = None
    n_cases: int = 1137
    prevalence: float = 0.23
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "sizes", _tuple(self.sizes, int))
        object.__setattr__(self, "noise", _tuple(self.noise, int))
        object.__setattr__(self, "modes", _tuple(self.modes))
        object.__setattr__(self, "variants", _tuple(self.variants, Variant))
        if not self.variants:
            raise ExperimentError("plan lists no variants")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ExperimentError(f"modes must be drawn from {MODES}")
        if not self.noise or any(n < 0 for n in self.noise):
            raise ExperimentError("noise counts must be non-negative")
        if self.sizes and len(self.sizes) != 3:
            raise ExperimentError("sizes needs three entries (training, setting, evaluation)")
        if self.replicates < 1:
            raise ExperimentError("replicates must be at least 1")

    @classmethod
    def from_config(cls, text: str, base_dir: str | os.PathLike | None = None) -> "ExperimentPlan":
        """Parse the ``[experiment]`` section of an INI-style plan file."""
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if not cp.has_section("experiment"):
            raise ExperimentError("plan file needs an [experiment] section")
        sec = dict(cp.items("experiment"))
        known = set(cls.__dataclass_fields__)
        unknown = set(sec) - known
        if unknown:
            raise ExperimentError(f"unknown plan keys: {', '.join(sorted(unknown))}")
        kw: dict = {}
        for key, raw in sec.items():
            if key in ("seed", "replicates", "n_cases"):
                kw[key] = int(raw)
            elif key in ("prevalence", "alpha"):
                kw[key] = float(raw)
            elif key == "k_max":
                kw[key] = None if raw.strip().lower() in ("", "auto") else int(raw)
            elif key == "sizes":
                kw[key] = () if raw.strip().lower() in ("", "auto") else raw
            else:
                kw[key] = raw.strip() if key == "data" else raw
        data = kw.get("data")
        if data and not data.startswith("synthetic:") and base_dir is not None and not os.path.isabs(data):
            kw["data"] = str(Path(base_dir) / data)
        return cls(**kw)

    @classmethod
    def read(cls, path) -> "ExperimentPlan":
        path = Path(path)
        return cls.from_config(path.read_text(encoding="utf-8"), path.parent)

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "sizes": list(self.sizes),
            "seed": self.seed,
            "noise": list(self.noise),
            "modes": list(self.modes),
            "variants": [v.value for v in self.variants],
            "replicates": self.replicates,
            "k_max": self.k_max,
            "n_cases": self.n_cases,
            "prevalence": self.prevalence,
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class VariantResult:
    scored: ScoredSet
    k: int | None
    attribute_weights: AttributeWeights | None
    case_weights: CaseWeights | None
    tuning_curve: tuple[float, ...] = ()


def variant_weights(v: Variant, split: TriSplit, model: LogisticModel,
                    fit_config: FitConfig = FitConfig()) -> tuple[AttributeWeights, CaseWeights]:
    """Attribute and case weights variant ``v`` retrieves with.

    Attributes outside ``model`` get weight 0, so in the selected-attributes
    mode retrieval only looks at what stepwise selection kept.
    """
    training = split.training
    if v.weights_attributes:
        w_a = attribute_weights_from_wald(wald_statistics(model), training.schema)
    else:
        w_a = uniform_attribute_weights(training.schema, model.selected_attributes)
    if v.weights_cases:
        eps = pearson_residuals(model, training, fit_config.probability_clamp)
        w_p = case_weights_from_residuals(eps, training.ids)
    else:
        w_p = uniform_case_weights(training)
    return w_a, w_p


def run_variant(v: Variant, split: TriSplit, model: LogisticModel, k_max: int | None = None,
                fit_config: FitConfig = FitConfig()) -> VariantResult:
    """Score the evaluation part of ``split`` with variant ``v``.

    K-NN variants retrieve from the training part and tune K on the setting
    part with the same weights they are evaluated with.
    """
    v = Variant(v)
    evaluation = split.evaluation
    labels = evaluation.labels
    if v is Variant.LR:
        return VariantResult(ScoredSet(predict_many(model, evaluation), labels, evaluation.ids), None, None, None)
    if not model.converged:
        raise ExperimentError(f"{v.value}: model did not converge")
    w_a, w_p = variant_weights(v, split, model, fit_config)
    k_max = default_k_max(len(split.training)) if k_max is None else min(k_max, len(split.training))
    tuned = tune_k(split.training, split.setting, w_a, w_p, k_max)
    scores = predict_batch(evaluation, split.training, w_a, w_p, RetrievalConfig(k=tuned.k, k_max=k_max))
    return VariantResult(ScoredSet(scores, labels, evaluation.ids), tuned.k, w_a, w_p, tuned.metric_values)


@dataclass
class ResultRow:
    noise: int
    mode: str
    variant: Variant
    estimate: AucEstimate | None = None
    k: int | None = None
    attribute_weights: AttributeWeights | None = None
    runtime: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ResultTable:
    plan: ExperimentPlan
    rows: list[ResultRow] = field(default_factory=list)
    models: dict = field(default_factory=dict)
    homogeneity: dict = field(default_factory=dict)
    schemas: dict = field(default_factory=dict)

    def row(self, noise: int, mode: str, variant) -> ResultRow:
        variant = Variant(variant)
        for r in self.rows:
            if (r.noise, r.mode, r.variant) == (noise, mode, variant):
                return r
        raise KeyError((noise, mode, variant))

    def auc(self, noise: int, mode: str, variant) -> float:
        r = self.row(noise, mode, variant)
        if r.estimate is None:
            raise ExperimentError(f"cell ({noise}, {mode}, {Variant(variant).value}) failed: {r.error}")
        return r.estimate.boot_mean

    def summary(self) -> str:
        lines = [f"{'noise':>5} {'mode':<8} {'variant':<10} {'AUC':>7} {'2.5%':>7} {'97.5%':>7} {'K':>4}"]
        for r in self.rows:
            if r.estimate is None:
                lines.append(f"{r.noise:>5} {r.mode:<8} {r.variant.value:<10} failed: {r.error}")
                continue
            e = r.estimate
            k = "" if r.k is None else r.k
            lines.append(f"{r.noise:>5} {r.mode:<8} {r.variant.value:<10} "
                         f"{e.boot_mean:7.4f} {e.ci_low:7.4f} {e.ci_high:7.4f} {k:>4}")
        return "\n".join(lines)


def load_plan_data(plan: ExperimentPlan) -> CaseBase:
    if plan.data.startswith("synthetic:"):
        kind = plan.data.split(":", 1)[1]
        if kind != "cohort":
            raise ExperimentError(f"unknown synthetic data set: {kind}")
        return generate_synthetic(cohort_spec(plan.seed, plan.n_cases, plan.prevalence))
    return read_case_base(plan.data)


def plan_sizes(plan: ExperimentPlan, n: int) -> tuple[int, int, int]:
    if plan.sizes:
        if sum(plan.sizes) != n:
            raise ExperimentError(f"plan sizes {plan.sizes} do not sum to {n} cases")
        return plan.sizes
    third, extra = divmod(n, 3)
    return tuple(third + (1 if i < extra else 0) for i in range(3))


def run_matrix(plan: ExperimentPlan, base: CaseBase | None = None,
               fit_config: FitConfig = FitConfig()) -> ResultTable:
    base = load_plan_data(plan) if base is None else base
    sizes = plan_sizes(plan, len(base))
    table = ResultTable(plan)
    for noise in plan.noise:
        cb = inject_random_attributes(base, noise, plan.seed)
        split = random_split(cb, sizes, plan.seed)
        table.schemas[noise] = cb.schema
        table.homogeneity[noise] = chi_square_homogeneity(split, plan.alpha)
        for mode in plan.modes:
            try:
                model = fit(split.training, fit_config) if mode == ALL else stepwise_select(split.training, fit_config)
                model_error = None
            except LrknnError as e:
                model, model_error = None, f"logistic: {e}"
            table.models[(noise, mode)] = model
            for v in plan.variants:
                row = ResultRow(noise, mode, v)
                start = time.perf_counter()
                if model is None:
                    row.error = model_error
                else:
                    try:
                        res = run_variant(v, split, model, plan.k_max, fit_config)
                        row.k = res.k
                        row.attribute_weights = res.attribute_weights
                        row.estimate = bootstrap_auc(res.scored, k=plan.replicates, seed=plan.seed)
                    except LrknnError as e:
                        row.error = str(e)
                row.runtime = time.perf_counter() - start
                table.rows.append(row)
    return table


# -- reports ----------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def weight_table_csv(table: ResultTable, noise: int, mode: str) -> str:
    schema = table.schemas[noise]
    model = table.models.get((noise, mode))
    coef = dict(zip(model.selected_attributes, model.coefficients)) if model else {}
    se = dict(zip(model.selected_attributes, model.std_errors)) if model else {}
    knn_rows = [r for r in table.rows if (r.noise, r.mode) == (noise, mode) and r.variant.is_knn]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["attribute", "provenance", "in_model", "coefficient", "std_error", "wald",
                     *[r.variant.value for r in knn_rows]])
    for j, name in enumerate(schema.names):
        c, s = coef.get(name), se.get(name)
        wald = None if c is None else (c / s) ** 2
        cells = ["" if r.attribute_weights is None else repr(float(r.attribute_weights.weights[j])) for r in knn_rows]
        writer.writerow([name, schema.provenance[j], int(name in coef), _fmt(c), _fmt(s), _fmt(wald), *cells])
    return buf.getvalue()


def auc_table_csv(table: ResultTable, noise: int, mode: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "point_auc", "boot_mean", "ci_low", "ci_high", "replicates", "k", "error"])
    for r in table.rows:
        if (r.noise, r.mode) != (noise, mode):
            continue
        e = r.estimate
        writer.writerow([
            r.variant.value,
            _fmt(e and e.point_auc), _fmt(e and e.boot_mean), _fmt(e and e.ci_low), _fmt(e and e.ci_high),
            "" if e is None else e.replicates,
            "" if r.k is None else r.k,
            r.error or "",
        ])
    return buf.getvalue()


def emit_reports(table: ResultTable, out_dir) -> list[Path]:
    """Write weight tables, AUC tables and a manifest; returns the paths.

    Output is a pure function of the table (no timestamps or timings), so
    reruns with the same plan give byte-identical files.
    """
    if not table.rows:
        raise ExperimentError("empty result table; nothing to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExperimentError(f"cannot create output directory {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise ExperimentError(f"output directory {out} is not writable")

    written: list[Path] = []
    cells = []
    for noise in table.plan.noise:
        for mode in table.plan.modes:
            if not any((r.noise, r.mode) == (noise, mode) for r in table.rows):
                continue
            cells.append((noise, mode))
            for stem, text in (("weights", weight_table_csv(table, noise, mode)),
                               ("auc", auc_table_csv(table, noise, mode))):
                path = out / f"{stem}_noise{noise}_{mode}.csv"
                _atomic_write(path, text)
                written.append(path)

    manifest = {
        "plan": table.plan.to_dict(),
        "seeds": {"master": table.plan.seed, "bootstrap": table.plan.seed},
        "fit_config": FitConfig().__dict__,
        "versions": {"lrknn": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "homogeneity": {str(n): rep.to_dict() for n, rep in table.homogeneity.items()},
        "models": {
            f"noise{n}_{m}": (None if model is None else model.to_dict())
            for (n, m), model in table.models.items()
        },
        "files": [p.name for p in written],
    }
    path = out / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written
