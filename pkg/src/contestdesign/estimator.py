"""scikit-learn style front end for the designer's problem."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .measures import GridDomain, GridMeasure
from .rules import materialize
from .solver import ObjectiveSpec, optimal_rule


class OptimalAllocation(BaseEstimator):
    """Fit the designer-optimal allocation rule to an observed effort sample.

    Parameters
    ----------
    budget : float
        Mass of prizes ``k`` in (0, 1).
    objective : callable or "increasing" or "decreasing"
        Designer weight ``pi(x)``. The string shortcuts stand for ``x`` and
        ``-x``.
    slack : bool
        Allow the designer to leave part of the budget unspent.

    Attributes
    ----------
    domain_ : GridDomain
        Distinct observed efforts.
    measure_ : GridMeasure
        Empirical (weighted) distribution over ``domain_``.
    result_ : SolverResult
    rule_ : AllocationRule
        Win probability at each point of ``domain_``.
    case_ : str
    """

    def __init__(self, budget=0.5, objective="increasing", slack=False):
        self.budget = budget
        self.objective = objective
        self.slack = slack

    def _pi(self, x):
        if callable(self.objective):
            return np.asarray(self.objective(x), dtype=float)
        if self.objective == "increasing":
            return x.copy()
        if self.objective == "decreasing":
            return -x
        raise ValueError(f"unknown objective {self.objective!r}")

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, ensure_2d=False, dtype=float).reshape(-1)
        if sample_weight is None:
            sample_weight = np.ones(X.size)
        sample_weight = np.asarray(sample_weight, dtype=float)
        if sample_weight.shape != X.shape or np.any(sample_weight < 0) or sample_weight.sum() <= 0:
            raise ValueError("sample_weight must be nonnegative, one per sample, with positive total")
        support, inverse = np.unique(X, return_inverse=True)
        mass = np.bincount(inverse, weights=sample_weight) / sample_weight.sum()
        self.domain_ = GridDomain.line(support)
        self.measure_ = GridMeasure(self.domain_, mass)
        objective = ObjectiveSpec(self.domain_, self._pi(support))
        self.result_ = optimal_rule(objective, self.measure_, self.budget, slack=self.slack)
        self.rule_ = materialize(self.result_.rule)
        self.case_ = self.result_.case
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Win probability of each effort in ``X``.

        Efforts between fitted points take the value of the next fitted point
        at or below them; efforts below the sample get the value of its
        lowest point if the rule pays everyone, 0 otherwise.
        """
        check_is_fitted(self, "rule_")
        X = check_array(X, ensure_2d=False, dtype=float).reshape(-1)
        pts = self.domain_.points.astype(float)
        values = self.rule_.values.astype(float)
        idx = np.searchsorted(pts, X, side="right") - 1
        below = idx < 0
        out = values[np.clip(idx, 0, None)]
        out[below] = values[0] if np.all(values == values[0]) else 0.0
        return out

    def score(self, X=None, y=None, sample_weight=None):
        """Designer payoff of the fitted rule on the fitted distribution."""
        check_is_fitted(self, "result_")
        return float(self.result_.payoff)
