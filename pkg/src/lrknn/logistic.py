"""Maximum-likelihood logistic regression on binary attributes.

Fitting is Newton-Raphson on the score equations (IRLS) with step-halving,
standard errors come from the inverse observed information at the optimum,
and ``stepwise_select`` runs a bidirectional AIC search from the full model.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import LrknnError
from .dataset import CaseBase

AIC_TIE = 1e-9


class FitError(LrknnError):
    pass


class ConstantAttributeError(FitError):
    def __init__(self, attributes):
        self.attributes = tuple(attributes)
        super().__init__(f"constant attribute(s), standard error undefined: {', '.join(self.attributes)}")


class SeparationError(FitError):
    def __init__(self, attributes):
        self.attributes = tuple(attributes)
        names = ", ".join(self.attributes) or "(intercept)"
        super().__init__(f"complete or quasi-complete separation, coefficients diverge for: {names}")


class SingularInformationError(FitError):
    pass


@dataclass(frozen=True)
class FitConfig:
    tolerance: float = 1e-8
    max_iterations: int = 50
    probability_clamp: float = 1e-6
    divergence_bound: float = 30.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.probability_clamp < 0.5:
            raise ValueError("probability_clamp must lie in (0, 0.5)")
        if not self.divergence_bound > 0:
            raise ValueError("divergence_bound must be positive")


@dataclass(frozen=True)
class LogisticModel:
    selected_attributes: tuple[str, ...]
    coefficients: tuple[float, ...]
    intercept: float
    std_errors: tuple[float, ...]
    log_likelihood: float
    aic: float
    converged: bool
    iterations: int
    n_cases: int = 0
    excluded_attributes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name in ("selected_attributes", "coefficients", "std_errors", "excluded_attributes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not len(self.coefficients) == len(self.std_errors) == len(self.selected_attributes):
            raise ValueError("coefficients, std_errors and selected_attributes differ in length")

    @property
    def beta(self) -> np.ndarray:
        return np.array(self.coefficients, dtype=float)

    def coefficient(self, name: str) -> float:
        return self.coefficients[self.selected_attributes.index(name)]

    def linear_predictor(self, cb: CaseBase) -> np.ndarray:
        cols = [cb.schema.index(a) for a in self.selected_attributes]
        x = cb.values[:, cols].astype(float)
        return x @ self.beta + self.intercept

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(**d)

    def to_json(self) -> str:
        # json renders floats with repr(), the shortest exact round-trip form
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        return cls.from_dict(json.loads(text))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_likelihood(X, y, b) -> float:
    eta = X @ b
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _information(X, p) -> np.ndarray:
    w = p * (1.0 - p)
    return X.T @ (w[:, None] * X)


def _cholesky(H):
    try:
        return np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise SingularInformationError("information matrix is singular") from None


def _irls(X, y, config: FitConfig, start=None, trace=None):
    """Newton iterations with step-halving. Returns (beta, ll, converged, iterations)."""
    b = np.zeros(X.shape[1]) if start is None else np.array(start, dtype=float)
    ll = _log_likelihood(X, y, b)
    if trace is not None:
        trace.append(ll)
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        p = sigmoid(X @ b)
        grad = X.T @ (y - p)
        L = _cholesky(_information(X, p))
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        small = np.max(np.abs(step)) < config.tolerance
        new_b = b + step
        new_ll = _log_likelihood(X, y, new_b)
        halvings = 0
        while new_ll < ll and halvings < 10 and not small:
            step *= 0.5
            new_b = b + step
            new_ll = _log_likelihood(X, y, new_b)
            halvings += 1
        if new_ll >= ll:
            b, ll = new_b, new_ll
        elif not small:
            # no ascent along the Newton direction
            break
        if trace is not None:
            trace.append(ll)
        if np.max(np.abs(b)) > config.divergence_bound:
            break
        if small:
            converged = True
            break
    return b, ll, converged, it


def _design(cb: CaseBase, attributes: Sequence[str]) -> np.ndarray:
    cols = [cb.schema.index(a) for a in attributes]
    X = np.empty((len(cb), len(cols) + 1))
    X[:, 0] = 1.0
    X[:, 1:] = cb.values[:, cols]
    return X


def fit(train: CaseBase, config: FitConfig = FitConfig(),
        attributes: Sequence[str] | None = None, start=None) -> LogisticModel:
    """Fit a logistic model on ``attributes`` (default: every schema attribute).

    Raises
    ------
    ConstantAttributeError
        A fitted attribute takes a single value on ``train``.
    SeparationError
        Some coefficient leaves ``[-divergence_bound, divergence_bound]``.
    SingularInformationError
        The information matrix cannot be Cholesky-factored.
    """
    attributes = tuple(train.schema.names if attributes is None else attributes)
    if len(train) == 0:
        raise FitError("training set is empty")
    y = train.y()
    X = _design(train, attributes)
    constant = [a for j, a in enumerate(attributes) if X[:, j + 1].min() == X[:, j + 1].max()]
    if constant:
        raise ConstantAttributeError(constant)
    if y.min() == y.max():
        raise SeparationError(())

    b, ll, converged, iterations = _irls(X, y, config, start)
    bound = config.divergence_bound
    if np.max(np.abs(b)) > bound or not converged:
        diverging = [a for j, a in enumerate(attributes) if abs(b[j + 1]) > bound]
        if np.max(np.abs(b)) > bound or _looks_separated(X, y, b):
            if not diverging:
                # intercept alone diverged; blame the largest slopes
                order = np.argsort(-np.abs(b[1:]))
                diverging = [attributes[j] for j in order[:1]]
            raise SeparationError(diverging)

    L = _cholesky(_information(X, sigmoid(X @ b)))
    Linv = np.linalg.solve(L, np.eye(len(b)))
    cov_diag = np.sum(Linv * Linv, axis=0)
    se = np.sqrt(cov_diag)
    k = len(attributes)
    return LogisticModel(
        selected_attributes=attributes,
        coefficients=tuple(float(v) for v in b[1:]),
        intercept=float(b[0]),
        std_errors=tuple(float(v) for v in se[1:]),
        log_likelihood=ll,
        aic=2.0 * (k + 1) - 2.0 * ll,
        converged=converged,
        iterations=iterations,
        n_cases=len(train),
    )


def _looks_separated(X, y, b) -> bool:
    # fitted probabilities pinned to 0/1 on a subset means the MLE runs off to infinity
    p = sigmoid(X @ b)
    return bool(np.any(np.minimum(p, 1 - p) < 1e-8))


def predict_probability(model: LogisticModel, case_values) -> float:
    """Fitted probability for one case.

    ``case_values`` is either a mapping attribute -> 0/1 or a sequence aligned
    with ``model.selected_attributes``.
    """
    if hasattr(case_values, "keys"):
        try:
            v = [case_values[a] for a in model.selected_attributes]
        except KeyError as e:
            raise FitError(f"missing value for attribute {e.args[0]}") from None
    else:
        v = list(case_values)
        if len(v) != len(model.selected_attributes):
            raise FitError(f"expected {len(model.selected_attributes)} values, got {len(v)}")
    eta = sum(x * b for x, b in zip(v, model.coefficients)) + model.intercept
    return 1.0 / (1.0 + math.exp(-eta)) if eta >= 0 else math.exp(eta) / (1.0 + math.exp(eta))


def predict_many(model: LogisticModel, cb: CaseBase) -> np.ndarray:
    return sigmoid(model.linear_predictor(cb))


def wald_statistics(model: LogisticModel) -> dict[str, float]:
    """``beta_a**2 / se_a**2`` per fitted attribute, intercept excluded."""
    if not model.converged:
        raise FitError("Wald statistics need a converged model")
    return {
        a: (b / s) ** 2
        for a, b, s in zip(model.selected_attributes, model.coefficients, model.std_errors)
    }


def pearson_residuals(model: LogisticModel, labeled: CaseBase,
                      clamp: float = FitConfig.probability_clamp) -> np.ndarray:
    if not labeled.is_labeled:
        raise FitError("Pearson residuals need labeled cases")
    y = labeled.y()
    p = np.clip(predict_many(model, labeled), clamp, 1.0 - clamp)
    return (y - p) / np.sqrt(p * (1.0 - p))


# -- stepwise selection -----------------------------------------------------


def _try_fit(train, config, attributes, start=None):
    try:
        m = fit(train, config, attributes, start)
    except FitError:
        return None
    return m if m.converged else None


def _start_for(model: LogisticModel, attributes):
    coef = dict(zip(model.selected_attributes, model.coefficients))
    return [model.intercept] + [coef.get(a, 0.0) for a in attributes]


def stepwise_select(train: CaseBase, config: FitConfig = FitConfig(),
                    attributes: Sequence[str] | None = None) -> LogisticModel:
    """Bidirectional stepwise AIC search starting from the full model.

    Each round scores every single deletion and every single re-addition and
    takes the best move if it lowers the AIC. Near-ties (< 1e-9) go to the
    smaller model. Attributes that make the full model separate are dropped
    up front and listed in ``excluded_attributes`` of the result.
    """
    pool = list(train.schema.names if attributes is None else attributes)
    excluded: list[str] = []
    while True:
        try:
            current = fit(train, config, pool)
            break
        except SeparationError as e:
            if not e.attributes:
                raise
            excluded.extend(e.attributes)
            pool = [a for a in pool if a not in e.attributes]
    if not current.converged:
        raise FitError("full model did not converge")

    selected = list(pool)
    for _ in range(4 * len(pool) + 4):
        moves = []
        for a in selected:
            attrs = [x for x in selected if x != a]
            m = _try_fit(train, config, attrs, _start_for(current, attrs))
            if m is not None:
                moves.append((m.aic, 0, pool.index(a), attrs, m))
        for a in pool:
            if a in selected:
                continue
            attrs = [x for x in pool if x in selected or x == a]
            m = _try_fit(train, config, attrs, _start_for(current, attrs))
            if m is not None:
                moves.append((m.aic, 1, pool.index(a), attrs, m))
        if not moves:
            break
        best_aic = min(mv[0] for mv in moves)
        # smaller model wins within the tie band, then schema order
        aic, kind, _, attrs, m = min(
            (mv for mv in moves if mv[0] <= best_aic + AIC_TIE), key=lambda mv: (mv[1], mv[2])
        )
        improves = aic < current.aic - AIC_TIE or (kind == 0 and aic <= current.aic + AIC_TIE)
        if not improves:
            break
        selected, current = attrs, m

    final = fit(train, config, selected, _start_for(current, selected))
    return LogisticModel(**{**final.__dict__, "excluded_attributes": tuple(excluded)})
