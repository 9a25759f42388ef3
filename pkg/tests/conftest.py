import numpy as np
import pytest

from lrknn.dataset import AttributeSchema, CaseBase, InformativeAttribute, SyntheticSpec, generate_synthetic


def make_case_base(values, labels, names=None, ids=None):
    values = np.asarray(values, dtype=np.uint8)
    if values.ndim == 1:
        values = values[:, None]
    names = names or [f"a{j}" for j in range(values.shape[1])]
    ids = ids or [f"p{i:03d}" for i in range(len(values))]
    return CaseBase(AttributeSchema(tuple(names)), tuple(ids), values, np.asarray(labels))


@pytest.fixture
def saturated_2x2():
    # a=1: 3 of 4 positive; a=0: 1 of 4 positive
    return make_case_base([1, 1, 1, 1, 0, 0, 0, 0], [1, 1, 1, 0, 1, 0, 0, 0], names=["a"])


def planted(n, beta=2.0, noise=5, seed=0, prevalence=0.5, intercept=-1.0):
    spec = SyntheticSpec(n, (InformativeAttribute("signal", prevalence, beta),), intercept, noise, seed)
    return generate_synthetic(spec)


@pytest.fixture
def planted_small():
    return planted(600, beta=1.5, noise=3, seed=11)
