import math

import numpy as np
import pytest

from conftest import make_case_base
from lrknn.dataset import TriSplit, generate_synthetic, cohort_spec, random_split
from lrknn.evaluation import auc
from lrknn.experiment import (
    ALL_VARIANTS,
    ExperimentError,
    ExperimentPlan,
    ResultTable,
    Variant,
    emit_reports,
    run_matrix,
    run_variant,
)
from lrknn.logistic import LogisticModel, fit
from oracles import pairwise_auc

# cohort-scale data (379 training cases); much smaller samples often separate on the rare attributes
COHORT_PLAN = dict(data="synthetic:cohort", replicates=20, seed=3)


@pytest.fixture(scope="module")
def small_split():
    cb = generate_synthetic(cohort_spec(seed=2, n_cases=360))
    return random_split(cb, (120, 120, 120), 2)


def test_lr_with_null_model(small_split):
    names = small_split.training.schema.names
    null = LogisticModel(names, [0.0] * len(names), -0.4, [1.0] * len(names), -1.0, 0.0, True, 1)
    res = run_variant(Variant.LR, small_split, null)
    assert np.all(res.scored.scores == 1 / (1 + math.exp(0.4)))
    assert auc(res.scored) == 0.5


def test_cbr_on_duplicated_evaluation_part():
    # 32 distinct vectors over 5 attributes, so each query's only exact match is itself
    vals = np.array([[(i >> b) & 1 for b in range(5)] for i in range(32)])
    rng = np.random.default_rng(0)
    labels = (rng.random(32) < 1 / (1 + np.exp(-(vals @ [1.0, -1.0, 0.5, 0.0, 0.8] - 0.5)))).astype(int)
    train = make_case_base(vals, labels)
    setting = make_case_base(vals[::-1], labels[::-1], ids=[f"s{i:03d}" for i in range(32)])
    split = TriSplit(train, setting, train, seed=0)
    res = run_variant(Variant.CBR, split, fit(train))
    np.testing.assert_array_equal(res.scored.scores, labels)
    assert auc(res.scored) == 1.0


def _independent_wawp(split, model, k_max):
    """Straight-line re-implementation of the weighted variant, sharing only the fitted model."""
    tr, st_, ev = split.training, split.setting, split.evaluation
    names = tr.schema.names
    wald = {a: (b / s) ** 2 for a, b, s in zip(model.selected_attributes, model.coefficients, model.std_errors)}
    total = sum(wald.values())
    w_a = [wald.get(a, 0.0) / total for a in names]

    def prob(row):
        eta = model.intercept + sum(b * row[names.index(a)] for a, b in zip(model.selected_attributes, model.coefficients))
        return 1 / (1 + math.exp(-eta))

    w_p = []
    for row, y in zip(tr.values.tolist(), tr.labels.tolist()):
        p = min(max(prob(row), 1e-6), 1 - 1e-6)
        eps = (y - p) / math.sqrt(p * (1 - p))
        w_p.append(max(math.exp(-eps * eps / 2) / math.sqrt(2 * math.pi), np.finfo(float).tiny))

    def score(query, k):
        ds = sorted((sum(w for w, a, b in zip(w_a, query, row) if a != b), cid, y, wp)
                    for row, cid, y, wp in zip(tr.values.tolist(), tr.ids, tr.labels.tolist(), w_p))[:k]
        exact = [d for d in ds if d[0] == 0]
        if exact:
            return sum(wp * y for _, _, y, wp in exact) / sum(wp for *_, wp in exact)
        return sum(wp / d * y for d, _, y, wp in ds) / sum(wp / d for d, *_, wp in ds)

    curve = [pairwise_auc([score(q, k) for q in st_.values.tolist()], st_.labels.tolist())
             for k in range(1, k_max + 1)]
    best = max(curve)
    k = next(i for i, v in enumerate(curve, start=1) if v >= best - 1e-6)
    return k, [score(q, k) for q in ev.values.tolist()]


def test_wawp_matches_independent_implementation(small_split):
    model = fit(small_split.training)
    res = run_variant(Variant.CBR_WA_WP, small_split, model, k_max=15)
    k, scores = _independent_wawp(small_split, model, 15)
    assert res.k == k
    np.testing.assert_allclose(res.scored.scores, scores, rtol=1e-12, atol=1e-12)


def test_single_cell_plan():
    table = run_matrix(ExperimentPlan(**{**COHORT_PLAN, "replicates": 5}, noise=(0,), modes=("all",), variants=("CBR",)))
    assert len(table.rows) == 1 and table.rows[0].ok


@pytest.fixture(scope="module")
def cohort_table():
    return run_matrix(ExperimentPlan(**COHORT_PLAN))


def test_full_plan_has_twenty_rows(cohort_table):
    assert len(cohort_table.rows) == 20
    assert all(r.ok for r in cohort_table.rows), [r.error for r in cohort_table.rows if not r.ok]
    assert {(r.noise, r.mode) for r in cohort_table.rows} == {(0, "all"), (0, "selected"), (50, "all"), (50, "selected")}


@pytest.fixture(scope="module")
def rerun_table():
    return run_matrix(ExperimentPlan(**COHORT_PLAN))


def test_deterministic(cohort_table, rerun_table):
    for a, b in zip(cohort_table.rows, rerun_table.rows, strict=True):
        assert (a.estimate, a.k) == (b.estimate, b.k)


def test_reports(cohort_table, tmp_path):
    paths = emit_reports(cohort_table, tmp_path)
    names = sorted(p.name for p in paths)
    assert len([n for n in names if n.startswith("weights_")]) == 4
    assert len([n for n in names if n.startswith("auc_")]) == 4
    assert "manifest.json" in names and len(names) == 9
    lines = (tmp_path / "weights_noise50_all.csv").read_text().splitlines()
    assert len(lines) == 1 + 69
    assert lines[0].startswith("attribute,provenance,in_model,coefficient,std_error,wald,CBR")
    assert sum(",injected-random," in ln for ln in lines) == 50
    auc_lines = (tmp_path / "auc_noise0_selected.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in auc_lines[1:]] == [v.value for v in ALL_VARIANTS]


def test_reports_byte_identical(cohort_table, rerun_table, tmp_path):
    emit_reports(cohort_table, tmp_path / "a")
    emit_reports(rerun_table, tmp_path / "b")
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_selected_mode_zeroes_dropped_attributes(cohort_table):
    model = cohort_table.models[(50, "selected")]
    w = cohort_table.row(50, "selected", "CBR").attribute_weights
    for name, weight in zip(w.names, w.weights):
        assert (weight > 0) == (name in model.selected_attributes)


def test_empty_variants():
    with pytest.raises(ExperimentError):
        ExperimentPlan(variants=())


def test_empty_table_writes_nothing(tmp_path):
    with pytest.raises(ExperimentError):
        emit_reports(ResultTable(ExperimentPlan()), tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_failed_fit_is_recorded():
    rng = np.random.default_rng(1)
    vals = rng.integers(0, 2, size=(90, 3))
    vals[:, 1] = 0
    cb = make_case_base(vals, rng.integers(0, 2, size=90))
    table = run_matrix(ExperimentPlan(noise=(0,), modes=("all",), sizes=(30, 30, 30), replicates=5), base=cb)
    assert len(table.rows) == 5
    assert all(not r.ok and "constant" in r.error for r in table.rows)


def test_plan_from_config(tmp_path):
    text = "[experiment]\nseed = 7\nsizes = auto\nnoise = 0, 50\nvariants = LR, CBR+WA+WP\nk_max = 20\ndata = d.csv\n"
    plan = ExperimentPlan.from_config(text, tmp_path)
    assert plan.seed == 7 and plan.sizes == () and plan.noise == (0, 50) and plan.k_max == 20
    assert plan.variants == (Variant.LR, Variant.CBR_WA_WP)
    assert plan.data == str(tmp_path / "d.csv")
    with pytest.raises(ExperimentError, match="unknown"):
        ExperimentPlan.from_config("[experiment]\nbogus = 1\n")
