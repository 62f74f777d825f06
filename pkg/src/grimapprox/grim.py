"""Greedy recombination interpolation (GRIM).

A target ``phi = sum_i a_i f_i`` is known only through an evaluation matrix
``Phi[j, i] = sigma_j(f_i)`` over a finite family of linear functionals.  GRIM
grows a set of matched functionals greedily (largest current residual first)
and, after every extension, re-solves for a short non-negative combination of
normalized features that matches ``phi`` on the chosen set.  The solver is
recombination, so the number of features used never exceeds one more than
the number of functionals matched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .recombination import DEFAULT_TOLERANCE, recombination_thin

log = logging.getLogger(__name__)

#: slack allowed on matched functionals beyond epsilon0, relative to the mass C
INTERPOLATION_SLACK = 1e-9


@dataclass(frozen=True)
class ProblemInstance:
    """Finite encoding of a sparse-approximation problem.

    ``evaluations`` is ``Lambda x N``; column ``i`` holds every functional
    applied to feature ``i``.  ``group_of`` (length ``Lambda``) tags rows that
    belong to the same data point for grouped extension; ``dual_distance`` is
    an optional ``Lambda x Lambda`` matrix of dual-norm distances between
    functionals, used only by diagnostics.
    """

    evaluations: np.ndarray
    weights: np.ndarray
    feature_norms: np.ndarray | None = None
    target: np.ndarray | None = None
    group_of: np.ndarray | None = None
    dual_distance: np.ndarray | None = None

    def __post_init__(self):
        evals = np.atleast_2d(np.asarray(self.evaluations, dtype=float))
        a = np.asarray(self.weights, dtype=float).ravel()
        if evals.shape[1] != a.shape[0]:
            raise DataError(
                f"evaluation matrix has {evals.shape[1]} columns but {a.shape[0]} weights"
            )
        if not np.all(np.isfinite(evals)) or not np.all(np.isfinite(a)):
            raise DataError("instance contains non-finite values")
        if np.any(a == 0):
            raise DataError(f"feature weights must be non-zero (index {int(np.flatnonzero(a == 0)[0])})")
        nu = (np.ones_like(a) if self.feature_norms is None
              else np.asarray(self.feature_norms, dtype=float).ravel())
        if nu.shape != a.shape:
            raise DataError("feature_norms length does not match weights")
        if not np.all(np.isfinite(nu)) or np.any(nu <= 0):
            raise DataError("feature norms must be finite and positive")
        target = evals @ a
        if self.target is not None:
            given = np.asarray(self.target, dtype=float).ravel()
            scale = 1.0 + np.max(np.abs(evals) @ np.abs(a), initial=0.0)
            if given.shape != target.shape or np.max(np.abs(given - target), initial=0.0) > 1e-10 * scale:
                raise DataError("target does not equal evaluations @ weights")
        groups = None
        if self.group_of is not None:
            groups = np.asarray(self.group_of).ravel()
            if groups.shape[0] != evals.shape[0]:
                raise DataError("group_of must have one entry per functional")
        dist = None
        if self.dual_distance is not None:
            dist = np.asarray(self.dual_distance, dtype=float)
            if dist.shape != (evals.shape[0],) * 2:
                raise DataError("dual_distance must be Lambda x Lambda")
            if not np.allclose(dist, dist.T, rtol=0, atol=1e-12) or np.any(np.diag(dist) != 0):
                raise DataError("dual_distance must be symmetric with zero diagonal")
        object.__setattr__(self, "evaluations", evals)
        object.__setattr__(self, "weights", a)
        object.__setattr__(self, "feature_norms", nu)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "group_of", groups)
        object.__setattr__(self, "dual_distance", dist)

    @property
    def n_functionals(self) -> int:
        return self.evaluations.shape[0]

    @property
    def n_features(self) -> int:
        return self.evaluations.shape[1]


@dataclass(frozen=True)
class NormalizedInstance:
    """Instance rewritten as ``phi = sum_i alpha_i h_i`` with ``alpha > 0`` and unit-norm ``h_i``."""

    h_evaluations: np.ndarray
    alpha: np.ndarray
    mass: float
    sign_flips: np.ndarray
    feature_norms: np.ndarray
    target: np.ndarray

    def to_original(self, b, e):
        """Map coefficients on ``h_e`` back to coefficients on ``f_e``."""
        e = np.asarray(e, dtype=np.intp)
        b = np.asarray(b, dtype=float)
        sign = np.where(self.sign_flips[e], -1.0, 1.0)
        return sign * b / self.feature_norms[e]


def normalize_instance(instance: ProblemInstance) -> NormalizedInstance:
    """Fold signs into the features and rescale them to unit norm."""
    a = instance.weights
    nu = instance.feature_norms
    if np.any(a == 0):
        raise DataError("zero feature weight")
    if np.any(nu <= 0):
        raise DataError("zero feature norm")
    flips = a < 0
    sign = np.where(flips, -1.0, 1.0)
    h = instance.evaluations * (sign / nu)
    alpha = np.abs(a) * nu
    return NormalizedInstance(h, alpha, float(alpha.sum()), flips, nu, instance.target)


@dataclass(frozen=True)
class GrimConfig:
    """Run parameters.

    ``epsilon0`` left as ``None`` resolves to ``1e-10 * C`` once the instance
    is known.  ``k_schedule`` counts functionals, or groups when ``grouped``.
    """

    epsilon: float
    max_steps: int
    k_schedule: tuple
    s_schedule: tuple
    epsilon0: float | None = None
    seed: int = 0
    grouped: bool = False
    method: str = "tree"

    def __post_init__(self):
        if not (isinstance(self.max_steps, (int, np.integer)) and self.max_steps >= 1):
            raise ConfigError("max_steps must be a positive integer")
        k = _broadcast(self.k_schedule, self.max_steps, "k_schedule")
        s = _broadcast(self.s_schedule, self.max_steps, "s_schedule")
        object.__setattr__(self, "k_schedule", k)
        object.__setattr__(self, "s_schedule", s)
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError("epsilon must be positive")
        if self.epsilon0 is not None and not 0 <= self.epsilon0 < self.epsilon:
            raise ConfigError("epsilon0 must lie in [0, epsilon)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.method not in ("basic", "tree"):
            raise ConfigError(f"unknown recombination method {self.method!r}")

    def resolved_epsilon0(self, mass: float) -> float:
        eps0 = 1e-10 * mass if self.epsilon0 is None else self.epsilon0
        if not eps0 < self.epsilon:
            raise ConfigError(
                f"default epsilon0 = {eps0:.3e} is not below epsilon = {self.epsilon:.3e}"
            )
        return eps0

    def check_against(self, instance: ProblemInstance) -> None:
        """Enforce the kappa budget for this instance."""
        kappa = sum(self.k_schedule)
        if self.grouped:
            if instance.group_of is None:
                raise ConfigError("grouped extension requested but the instance has no groups")
            n_groups = len(np.unique(instance.group_of))
            if kappa > n_groups:
                raise ConfigError(f"sum of k_schedule ({kappa}) exceeds group count {n_groups}")
            return
        cap = min(instance.n_features - 1, instance.n_functionals)
        if kappa > cap:
            raise ConfigError(
                f"sum of k_schedule ({kappa}) exceeds min(N - 1, Lambda) = {cap}"
            )


def _broadcast(schedule, length, name):
    if np.isscalar(schedule):
        schedule = [schedule] * length
    values = tuple(int(v) for v in schedule)
    if len(values) != length:
        raise ConfigError(f"{name} has {len(values)} entries, expected max_steps = {length}")
    if any(v < 1 for v in values):
        raise ConfigError(f"{name} entries must be positive integers")
    return values


def max_steps_for(instance: ProblemInstance, k: int = 1) -> int:
    """Largest step count whose constant-``k`` schedule fits the kappa budget."""
    cap = min(instance.n_features - 1, instance.n_functionals)
    return max(cap // k, 1)


@dataclass
class TraceStep:
    step: int
    new_indices: list
    shuffle_winner: int
    residual_sup: float
    support_size: int
    support: list = field(repr=False, default_factory=list)
    coefficients: list = field(repr=False, default_factory=list)


@dataclass
class GrimTrace:
    steps: list = field(default_factory=list)

    @property
    def selected(self) -> list:
        """Cumulative selected functional indices in selection order."""
        out = []
        for st in self.steps:
            out.extend(st.new_indices)
        return out

    @property
    def best_step(self) -> int | None:
        if not self.steps:
            return None
        return min(self.steps, key=lambda st: (st.residual_sup, st.step)).step


@dataclass
class GrimResult:
    support: list
    coefficients: list
    achieved_sup: float
    steps_completed: int
    terminated_early: bool
    trace: GrimTrace
    mass: float
    epsilon0: float


@dataclass(frozen=True)
class Candidate:
    b: np.ndarray
    e: np.ndarray
    residual: np.ndarray
    error: float
    trial: int


def residual_vector(norm: NormalizedInstance, b, e) -> np.ndarray:
    """``sigma_j(phi - u)`` for every functional, ``u = sum_s b_s h_{e(s)}``."""
    e = np.asarray(e, dtype=np.intp).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if e.shape != b.shape:
        raise DataError("coefficient and index lists differ in length")
    n = norm.h_evaluations.shape[1]
    if e.size and (e.min() < 0 or e.max() >= n):
        raise DataError("feature index out of range")
    return norm.target - norm.h_evaluations[:, e] @ b


def _top_indices(scores: np.ndarray, excluded: np.ndarray, m: int) -> list:
    order = np.argsort(-scores, kind="stable")
    order = order[~excluded[order]]
    return [int(i) for i in order[:m]]


def extension_step(residual, already_selected, m: int) -> list:
    """Indices of the ``m`` largest ``|residual|`` entries not yet selected.

    Returned in decreasing order of magnitude, ties to the lowest index.
    """
    r = np.abs(np.asarray(residual, dtype=float).ravel())
    taken = np.zeros(r.shape[0], dtype=bool)
    taken[list(already_selected)] = True
    free = int((~taken).sum())
    if m < 1 or m > free:
        raise ConfigError(f"cannot select {m} functionals, {free} remain")
    return _top_indices(r, taken, m)


def grouped_extension_step(residual, group_of, already_selected_groups, m_groups: int) -> list:
    """All rows of the ``m_groups`` groups with the worst per-group max residual.

    Groups are ranked by the largest ``|residual|`` over their rows, ties to
    the lowest group id.  Row indices are returned group by group, ascending
    within each group.
    """
    if group_of is None:
        raise ConfigError("grouped extension needs a group map")
    r = np.abs(np.asarray(residual, dtype=float).ravel())
    group_of = np.asarray(group_of).ravel()
    ids, inverse = np.unique(group_of, return_inverse=True)
    gmax = np.full(ids.shape[0], -np.inf)
    np.maximum.at(gmax, inverse, r)
    taken = np.isin(ids, list(already_selected_groups))
    free = int((~taken).sum())
    if m_groups < 1 or m_groups > free:
        raise ConfigError(f"cannot select {m_groups} groups, {free} remain")
    chosen = _top_indices(gmax, taken, m_groups)
    rows = []
    for g in chosen:
        rows.extend(int(i) for i in np.flatnonzero(inverse == g))
    return rows


def trial_rng(seed: int, step: int, trial: int) -> np.random.Generator:
    """Independent stream for one shuffle trial."""
    return np.random.default_rng([int(seed), int(step), int(trial)])


def recombination_step(norm: NormalizedInstance, selected, s: int, seed: int = 0,
                       step: int = 1, epsilon0: float | None = None,
                       method: str = "tree") -> Candidate:
    """Best of ``s`` recombination trials over shuffled orderings of ``selected``.

    Trial 0 keeps the given order; trial ``t >= 1`` uses a permutation drawn
    from :func:`trial_rng`.  The winner minimizes the sup residual over every
    functional, ties to the lowest trial.
    """
    if s < 1:
        raise ConfigError("shuffle number must be at least 1")
    selected = np.asarray(selected, dtype=np.intp)
    eps0 = 1e-10 * norm.mass if epsilon0 is None else epsilon0
    bound = eps0 + INTERPOLATION_SLACK * norm.mass
    best = None
    for t in range(s):
        order = selected if t == 0 else selected[trial_rng(seed, step, t).permutation(selected.size)]
        b, e = recombination_thin(norm.h_evaluations, norm.alpha, order, method,
                                  DEFAULT_TOLERANCE)
        res = residual_vector(norm, b, e)
        matched = float(np.max(np.abs(res[selected]), initial=0.0))
        if matched > bound:
            log.debug("step %d trial %d misses matched functionals by %.3e", step, t, matched)
            continue
        err = float(np.max(np.abs(res), initial=0.0))
        if best is None or err < best.error:
            best = Candidate(b, e, res, err, t)
    if best is None:
        raise NumericalError(
            f"no recombination trial at step {step} matched the selected functionals within {bound:.3e}"
        )
    return best


def run_grim(instance: ProblemInstance, config: GrimConfig) -> GrimResult:
    """Run the greedy extension / recombination loop.

    Step 1 always runs.  Before each later step the current approximation is
    checked against ``epsilon`` on every functional; the loop stops there or
    after ``max_steps``.  The returned coefficients refer to the original
    (unnormalized, signed) features.
    """
    config.check_against(instance)
    norm = normalize_instance(instance)
    eps0 = config.resolved_epsilon0(norm.mass)
    trace = GrimTrace()
    selected: list = []
    chosen_groups: list = []
    current = None
    early = False

    for t in range(1, config.max_steps + 1):
        if current is not None and current.error <= config.epsilon:
            early = True
            break
        residual = norm.target if current is None else current.residual
        k = config.k_schedule[t - 1]
        if config.grouped:
            new = grouped_extension_step(residual, instance.group_of, chosen_groups, k)
            chosen_groups.extend(dict.fromkeys(instance.group_of[i].item() for i in new))
        else:
            new = extension_step(residual, selected, k)
        selected.extend(new)
        current = recombination_step(norm, selected, config.s_schedule[t - 1], config.seed,
                                     t, eps0, config.method)
        coeffs = norm.to_original(current.b, current.e)
        trace.steps.append(TraceStep(
            step=t,
            new_indices=list(new),
            shuffle_winner=current.trial,
            residual_sup=current.error,
            support_size=int(current.e.size),
            support=[int(i) for i in current.e],
            coefficients=[float(c) for c in coeffs],
        ))
        log.info("step %d: matched %d functionals, sup residual %.6g, support %d",
                 t, len(selected), current.error, current.e.size)

    last = trace.steps[-1]
    return GrimResult(
        support=list(last.support),
        coefficients=list(last.coefficients),
        achieved_sup=last.residual_sup,
        steps_completed=len(trace.steps),
        terminated_early=early,
        trace=trace,
        mass=norm.mass,
        epsilon0=eps0,
    )
