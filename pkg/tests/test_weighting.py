import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_case_base
from lrknn.weighting import (
    MIN_CASE_WEIGHT,
    CaseWeights,
    WeightError,
    attribute_weights_from_wald,
    case_weights_from_residuals,
    normal_density,
    uniform_attribute_weights,
    uniform_case_weights,
    weights_to_csv,
)

wald_maps = st.dictionaries(
    st.sampled_from([f"x{i}" for i in range(12)]),
    st.floats(0, 1e6, allow_nan=False),
    min_size=1,
).filter(lambda d: any(v > 0 for v in d.values()))


def test_equal_wald():
    w = attribute_weights_from_wald({"a": 4.0, "b": 4.0}, ["a", "b"])
    assert w.as_dict() == {"a": 0.5, "b": 0.5}


def test_unequal_wald():
    w = attribute_weights_from_wald({"a": 9.0, "b": 1.0}, ["a", "b"])
    assert w["a"] == pytest.approx(0.9, abs=1e-15)
    assert w["b"] == pytest.approx(0.1, abs=1e-15)


def test_single_survivor_of_selection():
    names = [f"f{i}" for i in range(19)]
    w = attribute_weights_from_wald({"f7": 3.2}, names)
    assert w["f7"] == 1.0
    assert sum(w.weights) == 1.0
    assert all(w[n] == 0.0 for n in names if n != "f7")


def test_unknown_attribute():
    with pytest.raises(WeightError, match="outside"):
        attribute_weights_from_wald({"zz": 1.0}, ["a"])


def test_all_zero_wald():
    with pytest.raises(WeightError):
        attribute_weights_from_wald({"a": 0.0}, ["a", "b"])


@pytest.mark.parametrize("n", [19, 69])
def test_uniform(n):
    w = uniform_attribute_weights([f"f{i}" for i in range(n)])
    np.testing.assert_array_equal(w.weights, np.full(n, 1.0 / n))


def test_uniform_over_active():
    w = uniform_attribute_weights(["a", "b", "c", "d"], active=["b", "d"])
    assert w.as_dict() == {"a": 0.0, "b": 0.5, "c": 0.0, "d": 0.5}


@given(wald_maps)
def test_wald_weights_sum_to_one(wald):
    names = sorted({f"x{i}" for i in range(12)})
    w = attribute_weights_from_wald(wald, names)
    assert abs(math.fsum(w.weights) - 1.0) <= 1e-12
    assert np.all(w.weights >= 0)


@given(wald_maps, st.floats(1e-3, 1e3))
def test_wald_weights_scale_invariant(wald, c):
    names = [f"x{i}" for i in range(12)]
    a = attribute_weights_from_wald(wald, names).weights
    b = attribute_weights_from_wald({k: v * c for k, v in wald.items()}, names).weights
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_normal_density_values():
    assert float(normal_density(0.0)) == pytest.approx(0.3989422804014327, abs=1e-16)
    assert float(normal_density(1.0)) == pytest.approx(0.24197072451914337, abs=1e-16)
    assert float(normal_density(0.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-16)


def test_case_weights_from_residuals():
    cw = case_weights_from_residuals([0.0, 1.0, -1.0], ["p1", "p2", "p3"])
    assert cw.ids == ("p1", "p2", "p3")
    np.testing.assert_allclose(cw.raw, [0.3989422804014327, 0.24197072451914337, 0.24197072451914337], rtol=1e-15)


def test_far_outlier_keeps_positive_weight():
    cw = case_weights_from_residuals([0.5, 1000.0])
    assert cw.raw[1] == MIN_CASE_WEIGHT > 0


@given(st.lists(st.floats(-40, 40), min_size=2, max_size=20))
def test_case_weights_decrease_with_residual(eps):
    raw = case_weights_from_residuals(eps).raw
    order = np.argsort(np.abs(eps), kind="stable")
    assert np.all(np.diff(raw[order]) <= 0)


def test_non_finite_residual():
    with pytest.raises(WeightError):
        case_weights_from_residuals([float("nan")])


def test_zero_case_weight_rejected():
    with pytest.raises(WeightError):
        CaseWeights(("a",), [0.0], "x")


def test_uniform_case_weights():
    cb = make_case_base([[0], [1], [1]], [0, 1, 0])
    cw = uniform_case_weights(cb)
    assert cw.ids == cb.ids
    np.testing.assert_array_equal(cw.raw, 1.0)


def test_csv_export():
    text = weights_to_csv(attribute_weights_from_wald({"a": 9.0, "b": 1.0}, ["a", "b", "c"]))
    lines = text.splitlines()
    assert lines[0] == "attribute,weight,source"
    assert lines[3] == "c,0.0,wald"
