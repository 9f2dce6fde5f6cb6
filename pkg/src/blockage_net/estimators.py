"""scikit-learn style wrappers around the blockage and coverage models.

``BlockageModel`` estimates the Boolean-scheme parameters from a set of
observed building footprints; ``CoverageModel`` evaluates network coverage
for given densities. Both follow the usual ``fit`` / ``predict`` /
``get_params`` conventions so they can sit inside parameter searches.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .link_stats import derive_beta_p, expected_blockages, los_probability
from .network_analytics import (
    NetworkParams, QuadratureConfig, average_rate, baseline_coverage_no_blockage,
    coverage_probability, db_to_linear, mean_visible_area, mean_visible_bs, silent_fraction,
)


def _link_lengths(R):
    R = check_array(np.asarray(R, dtype=float).reshape(-1, 1), ensure_min_samples=1)
    if np.any(R < 0):
        raise ValueError("link lengths must be >= 0")
    return R.ravel()


class BlockageModel(BaseEstimator, TransformerMixin):
    """Fit blockage density and mean footprint from observed buildings.

    ``fit`` takes an ``(n, 2)`` array of footprint lengths and widths seen in
    a region of ``region_area`` square meters. ``transform`` maps link
    lengths to mean blockage counts and ``predict`` to line-of-sight
    probabilities.

    Parameters
    ----------
    region_area : float
        Area of the surveyed region, m^2.
    """

    def __init__(self, region_area=1.0):
        self.region_area = region_area

    def fit(self, X, y=None):
        if not self.region_area > 0:
            raise ValueError(f"region_area must be > 0, got {self.region_area}")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"expected columns (length, width), got {X.shape[1]} columns")
        if np.any(X < 0):
            raise ValueError("footprint sides must be >= 0")
        self.n_features_in_ = 2
        self.lambda_ = X.shape[0] / self.region_area
        self.mean_length_ = float(X[:, 0].mean())
        self.mean_width_ = float(X[:, 1].mean())
        self.beta_, self.p_ = derive_beta_p(self.lambda_, self.mean_length_, self.mean_width_)
        return self

    def transform(self, X):
        """Mean blockage count on links of the given lengths, as a column."""
        check_is_fitted(self, "beta_")
        return np.asarray(expected_blockages(self.beta_, self.p_, _link_lengths(X))).reshape(-1, 1)

    def predict(self, X):
        """Line-of-sight probability for each link length."""
        check_is_fitted(self, "beta_")
        return np.asarray(los_probability(self.beta_, self.p_, _link_lengths(X)))


class CoverageModel(BaseEstimator):
    """SIR coverage of a PPP network with impenetrable random blockages.

    ``lam = 0`` gives the blockage-free network. ``predict`` takes
    thresholds in dB and returns coverage probabilities; silent users count
    as not covered.
    """

    def __init__(self, mu=3.85e-5, lam=4.4e-4, mean_length=15.0, mean_width=15.0,
                 alpha=4.0, t_max_db=40.0, rel_tol=1e-6):
        self.mu = mu
        self.lam = lam
        self.mean_length = mean_length
        self.mean_width = mean_width
        self.alpha = alpha
        self.t_max_db = t_max_db
        self.rel_tol = rel_tol

    def fit(self, X=None, y=None):
        beta, p = derive_beta_p(self.lam, self.mean_length, self.mean_width)
        self.network_ = NetworkParams(self.mu, self.alpha, beta, p, self.t_max_db)
        self.quad_ = QuadratureConfig(rel_tol=self.rel_tol)
        self.beta_, self.p_ = beta, p
        if beta > 0:
            self.silent_fraction_ = silent_fraction(self.mu, beta, p)
            self.mean_visible_area_ = mean_visible_area(beta, p)
            self.mean_visible_bs_ = mean_visible_bs(self.mu, beta, p)
        else:
            self.silent_fraction_ = 0.0
            self.mean_visible_area_ = math.inf
            self.mean_visible_bs_ = math.inf
        return self

    def _thresholds(self, X):
        check_is_fitted(self, "network_")
        return db_to_linear(check_array(np.asarray(X, dtype=float).reshape(-1, 1)).ravel())

    def predict(self, X):
        """Coverage probability at each threshold (dB)."""
        return np.array([coverage_probability(t, self.network_, self.quad_) for t in self._thresholds(X)])

    def predict_conditional(self, X):
        """Coverage given that the user sees at least one base station."""
        return self.predict(X) / (1.0 - self.silent_fraction_)

    def baseline(self, X):
        """Blockage-free coverage at the same thresholds."""
        return np.array([baseline_coverage_no_blockage(t, self.alpha, self.quad_) for t in self._thresholds(X)])

    def rate(self):
        check_is_fitted(self, "network_")
        return average_rate(self.network_, self.quad_)
