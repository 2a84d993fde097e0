"""Estimator-style front end over :mod:`cybersis.pia`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import pia
from ._validation import check_state, check_states_array
from .bvp import Grid
from .model import CostParams, ModelParams
from .pia import PiaConfig


class PolicyIterationController(BaseEstimator):
    """Optimal proactive/reactive controls for the controlled SIS model.

    ``fit`` runs policy improvement on ``grid``; ``predict`` interpolates the
    value function and ``predict_controls`` the feedback policy at arbitrary
    infected fractions inside the grid.

    Examples
    --------
    >>> ctl = PolicyIterationController().fit()           # doctest: +SKIP
    >>> ctl.predict([0.2, 0.5])                           # doctest: +SKIP
    """

    def __init__(
        self,
        model: ModelParams | None = None,
        cost: CostParams | None = None,
        grid: Grid | None = None,
        config: PiaConfig | None = None,
    ):
        self.model = model
        self.cost = cost
        self.grid = grid
        self.config = config

    def _resolved(self):
        return (
            self.model if self.model is not None else ModelParams(),
            self.cost if self.cost is not None else CostParams(),
            self.grid if self.grid is not None else Grid(),
            self.config if self.config is not None else PiaConfig(),
        )

    def fit(self, X=None, y=None):
        """Solve the control problem. ``X`` and ``y`` are accepted for API
        compatibility and ignored; the state grid comes from ``grid``."""
        p, k, grid, cfg = self._resolved()
        result = pia.run(p, k, grid, cfg)
        self.value_ = result.value
        self.policy_ = result.policy
        self.trace_ = result.trace
        self.n_iter_ = result.trace.n_iter
        self.converged_ = result.trace.converged
        return self

    def _states(self, X) -> np.ndarray:
        check_is_fitted(self, "value_")
        x = check_states_array(X)
        grid = self.value_.grid
        check_state(x, grid.x_lo - 1e-12, grid.x_hi + 1e-12)
        return x

    def predict(self, X) -> np.ndarray:
        """Value function at the states in ``X``."""
        x = self._states(X)
        return np.asarray(self.value_(x), dtype=float)

    def predict_controls(self, X) -> np.ndarray:
        """``(n, 2)`` array of ``(eta, rho)`` at the states in ``X``."""
        x = self._states(X)
        eta, rho = self.policy_(x)
        return np.column_stack([np.atleast_1d(eta), np.atleast_1d(rho)])

    def hjb_residual(self) -> np.ndarray:
        check_is_fitted(self, "value_")
        p, k, _, cfg = self._resolved()
        return pia.hjb_residual(self.value_, p, k, cfg.rho_max)
