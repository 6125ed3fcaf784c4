"""scikit-learn style wrapper around :func:`tvtp.estimate.fit`.

The outcome ``Y`` plays the role of the target and the transition covariate
``Z`` the role of the single feature, so ``fit(Z, Y)`` follows the usual
``fit(X, y)`` convention. Rows are consecutive time points.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .estimate import FitOptions, fit
from .filter import Dataset, InitRule, forward_filter, smooth
from .model import ModelConfig


def check_series(X, y=None) -> Dataset:
    """Validate inputs and return a :class:`Dataset`.

    Accepts ``(Z, Y)`` with ``Z`` of shape ``(n,)`` or ``(n, 1)``, or a single
    ``(n, 2)`` array whose columns are ``(Y, Z)`` when ``y`` is None.
    """
    if y is None:
        arr = check_array(X, ensure_2d=True, dtype=np.float64)
        if arr.shape[1] != 2:
            raise ValueError(f"without y, X must have two columns (y, z); got {arr.shape[1]}")
        return Dataset(arr[:, 0].copy(), arr[:, 1].copy())
    z = check_array(np.asarray(X).reshape(len(X), -1), dtype=np.float64)
    if z.shape[1] != 1:
        raise ValueError(f"X must hold the single covariate column; got {z.shape[1]} columns")
    yy = check_array(np.asarray(y).reshape(-1, 1), dtype=np.float64)[:, 0]
    if yy.shape[0] != z.shape[0]:
        raise ValueError(f"X and y have different lengths ({z.shape[0]} != {yy.shape[0]})")
    return Dataset(yy, z[:, 0].copy())


class MarkovSwitchingAR(BaseEstimator):
    """Markov-switching autoregression with covariate-driven transitions.

    Parameters
    ----------
    variant : {"partial", "joint"}
        Likelihood of ``Y`` alone, or of ``(Y, Z)`` with correlated innovations.
    n_regimes, ar_order_y, ar_order_z : int
        Model shape.
    switching : tuple of str
        Regime-dependent ``Y``-equation blocks.
    init : {"stationary", "uniform"}
        Law of the regime preceding the first scored observation.
    grad_tol, max_iter, hac, n_jobs
        Passed to :class:`tvtp.estimate.FitOptions`.

    Attributes
    ----------
    result_ : EstimationResult
    params_ : ParamVector
    coef_ : ndarray
        Flat parameter vector, ordered as ``param_names_``.
    """

    def __init__(self, variant="partial", n_regimes=2, ar_order_y=1, ar_order_z=1, switching=("mu", "sigma"),
                 init="stationary", grad_tol=1e-8, max_iter=500, hac=None, n_jobs=1):
        self.variant = variant
        self.n_regimes = n_regimes
        self.ar_order_y = ar_order_y
        self.ar_order_z = ar_order_z
        self.switching = switching
        self.init = init
        self.grad_tol = grad_tol
        self.max_iter = max_iter
        self.hac = hac
        self.n_jobs = n_jobs

    def _config(self) -> ModelConfig:
        return ModelConfig(self.variant, self.n_regimes, self.ar_order_y, self.ar_order_z, frozenset(self.switching))

    def _init_rule(self) -> InitRule:
        rules = {"stationary": InitRule.stationary, "uniform": InitRule.uniform}
        if self.init not in rules:
            raise ValueError(f"init must be one of {sorted(rules)}, got {self.init!r}")
        return rules[self.init]()

    def fit(self, X, y=None):
        data = check_series(X, y)
        config = self._config()
        opts = FitOptions(grad_tol=self.grad_tol, max_iter=self.max_iter, hac=self.hac,
                          init=self._init_rule(), n_jobs=self.n_jobs)
        self.result_ = fit(data, config, opts)
        self.config_ = config
        self.params_ = self.result_.theta_hat
        self.coef_ = self.result_.params
        self.param_names_ = config.param_names()
        self.n_features_in_ = 1
        return self

    def predict_proba(self, X, y=None) -> np.ndarray:
        """Smoothed regime probabilities for every scored time point."""
        check_is_fitted(self, "result_")
        marg, _ = smooth(check_series(X, y), self.params_, self.config_, self._init_rule())
        return marg

    def predict(self, X, y=None) -> np.ndarray:
        """Most probable regime at every scored time point."""
        return np.argmax(self.predict_proba(X, y), axis=1)

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per scored observation."""
        check_is_fitted(self, "result_")
        out = forward_filter(check_series(X, y), self.params_, self.config_, self._init_rule())
        return out.mean_loglik
