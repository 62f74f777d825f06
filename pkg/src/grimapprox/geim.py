"""Generalised Empirical Interpolation Method (GEIM) baseline.

Everything lives in the coefficient space of the feature basis: a vector
``w`` stands for ``sum_i w_i f_i`` and functional ``j`` acts on it as
``Phi[j] @ w``.  The interpolant ``J_n[w]`` is the unique element of
``span(q_1..q_n)`` agreeing with ``w`` on the selected functionals; it is
computed with a unit-lower-triangular solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, DataError, NumericalError
from .grim import ProblemInstance

NORMALIZER_RTOL = 1e-12


@dataclass
class GeimState:
    evaluations: np.ndarray
    selected_features: list = field(default_factory=list)
    selected_functionals: list = field(default_factory=list)
    basis_q: list = field(default_factory=list)

    @property
    def q_matrix(self) -> np.ndarray:
        n = self.evaluations.shape[1]
        if not self.basis_q:
            return np.zeros((n, 0))
        return np.column_stack(self.basis_q)

    @property
    def q_evaluations(self) -> np.ndarray:
        """``sigma_i(q_j)`` for the selected functionals (unit lower triangular)."""
        return self.evaluations[self.selected_functionals] @ self.q_matrix


def geim_interpolate(state: GeimState, w) -> np.ndarray:
    """``J_n[w]`` for a coefficient vector, or for each column of a 2-D array."""
    w = np.asarray(w, dtype=float)
    n_feat = state.evaluations.shape[1]
    if w.shape[0] != n_feat:
        raise DataError(f"coefficient vector has length {w.shape[0]}, expected {n_feat}")
    if not state.selected_functionals:
        raise DataError("GEIM state is empty")
    lw = state.evaluations[state.selected_functionals] @ w
    coef = solve_triangular(state.q_evaluations, lw, lower=True, unit_diagonal=True)
    return state.q_matrix @ coef


@dataclass
class GeimFit:
    state: GeimState
    interpolants: list
    selection_norms: list
    errors: list
    stopped_early: bool


def geim_fit(instance: ProblemInstance, norm, n_max: int, stop_tol: float = 0.0) -> GeimFit:
    """Greedy GEIM on the features of ``instance``.

    ``norm`` maps coefficient vectors (or columns of a 2-D array) to
    X-norms.  Step ``n`` picks the feature worst reproduced by ``J_{n-1}``
    and the functional that sees its interpolation residual most strongly.
    ``interpolants[n-1]`` holds ``J_n[phi]``; ``errors[n-1]`` its X-norm error.
    """
    evals = instance.evaluations
    n_funcs, n_feat = evals.shape
    if not 1 <= n_max <= min(n_feat, n_funcs):
        raise ConfigError(f"n_max must lie in [1, {min(n_feat, n_funcs)}]")
    phi = instance.weights
    scale = float(np.sum(np.abs(phi) * instance.feature_norms))
    state = GeimState(evals)
    identity = np.eye(n_feat)
    interpolants, picks, errors = [], [], []
    stopped = False
    taken = np.zeros(n_funcs, dtype=bool)

    for n in range(1, n_max + 1):
        if state.selected_functionals:
            residuals = identity - geim_interpolate(state, identity)
        else:
            residuals = identity
        feat_norms = np.asarray(norm(residuals))
        feat_norms[state.selected_features] = -np.inf
        h = int(np.argmax(feat_norms))
        r_h = residuals[:, h]
        on_funcs = np.abs(evals @ r_h)
        on_funcs[taken] = -np.inf
        sigma = int(np.argmax(on_funcs))
        value = float(evals[sigma] @ r_h)
        if abs(value) <= NORMALIZER_RTOL * max(scale, 1.0):
            raise NumericalError(
                f"GEIM step {n}: normalizer {value:.3e} is numerically zero"
            )
        state.selected_features.append(h)
        state.selected_functionals.append(sigma)
        state.basis_q.append(r_h / value)
        taken[sigma] = True
        picks.append(float(feat_norms[h]))

        j_phi = geim_interpolate(state, phi)
        interpolants.append(j_phi)
        errors.append(float(norm(phi - j_phi)))
        if errors[-1] <= stop_tol:
            stopped = n < n_max
            break
    return GeimFit(state, interpolants, picks, errors, stopped)
