"""Recombination: support reduction for non-negative solutions of linear systems.

Given ``A @ x = y`` with ``x >= 0``, translate ``x`` along kernel directions of
``A`` until at most ``rank(A)`` entries remain non-zero.  The system and the
sign of every weight are preserved.  When the first row of ``A`` is all ones
the total mass ``sum(x)`` is preserved as well, which is how the reduction is
used for measures and for positive linear combinations of features.

Two drivers are provided:

* :func:`recombine_basic` computes one SVD kernel basis and eliminates one
  coordinate per basis vector.
* :func:`recombine_tree` repeatedly merges column blocks into barycentres and
  runs the basic reduction on the small barycentre system, giving
  ``O(N m + m^3 log(N/m))`` work for ``m + 1`` rows and ``N`` columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, NumericalError

#: singular values at or below ``KERNEL_RTOL * s_max`` are treated as zero
KERNEL_RTOL = 1e-12
#: entries of a kernel vector must exceed this fraction of its max-abs entry to count as positive
POSITIVE_RTOL = 1e-12
#: ratios within this relative gap of the minimum are zeroed together
TIE_RTOL = 1e-12
DEFAULT_TOLERANCE = 1e-9
#: kernel bases up to this many entries are re-projected eagerly (fewer calls per pivot)
EAGER_PROJECTION_SIZE = 1 << 14
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class ReductionSystem:
    """A linear system ``matrix @ weights`` whose weights are to be thinned.

    The first row of ``matrix`` must be identically one; it carries the
    mass-conservation equation.
    """

    matrix: np.ndarray
    weights: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if matrix.size == 0:
            raise DataError("reduction matrix is empty")
        if matrix.shape[1] != weights.shape[0]:
            raise DataError(
                f"matrix has {matrix.shape[1]} columns but {weights.shape[0]} weights given"
            )
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(weights))):
            raise DataError("reduction system contains non-finite entries")
        if np.any(weights < 0):
            raise DataError("reduction weights must be non-negative")
        if not np.all(matrix[0] == 1.0):
            raise DataError("first row of the reduction matrix must be all ones")
        if self.tolerance < 0:
            raise DataError("tolerance must be non-negative")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "weights", weights)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def from_rows(cls, rows, weights, tolerance: float = DEFAULT_TOLERANCE) -> "ReductionSystem":
        """Build a system by stacking a ones row on top of ``rows``."""
        weights = np.asarray(weights, dtype=float).ravel()
        rows = np.asarray(rows, dtype=float).reshape(-1, weights.shape[0])
        return cls(np.vstack([np.ones((1, weights.shape[0])), rows]), weights, tolerance)


@dataclass(frozen=True)
class ReducedSolution:
    weights: np.ndarray
    support: np.ndarray
    residual_inf: float


def svd_kernel_basis(system) -> np.ndarray:
    """Orthonormal basis of ``ker(A)``, one basis vector per row.

    Accepts a :class:`ReductionSystem` or a bare matrix.  The number of rows
    returned is ``N - rank(A)`` with the rank counted at ``KERNEL_RTOL``.
    """
    matrix = system.matrix if isinstance(system, ReductionSystem) else system
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        raise DataError("cannot take the kernel of an empty matrix")
    if not np.all(np.isfinite(matrix)):
        raise DataError("matrix contains non-finite entries")
    n = matrix.shape[1]
    _, s, vt = np.linalg.svd(matrix, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return vt
    rank = int(np.count_nonzero(s > KERNEL_RTOL * s[0]))
    return vt[rank:n].copy()


def _positive_entries(direction, threshold, candidates):
    positive = direction > threshold
    if candidates is not None:
        positive &= candidates
    return positive.nonzero()[0]


def _eliminate(weights, direction, candidates=None, tolerance=DEFAULT_TOLERANCE):
    """Core of :func:`eliminate_direction`; also returns the signed direction."""
    direction = np.asarray(direction, dtype=float)
    scale = np.abs(direction).max() if direction.size else 0.0
    if not 0.0 < scale < np.inf:
        raise NumericalError("kernel direction is numerically zero")
    threshold = POSITIVE_RTOL * scale
    idx = _positive_entries(direction, threshold, candidates)
    if not idx.size:
        direction = -direction
        idx = _positive_entries(direction, threshold, candidates)
        if not idx.size:
            raise NumericalError("kernel direction has no usable positive entry")

    ratios = weights[idx] / direction[idx]
    k = int(ratios.argmin())
    theta = ratios[k]
    eliminated = int(idx[k])

    new = weights - theta * direction
    # entries hitting zero together with the pivot are exact ties up to round-off
    new[idx[ratios <= theta + TIE_RTOL * max(abs(theta), _TINY)]] = 0.0

    negative = new < 0.0
    if negative.any():
        mass = max(float(weights.sum()), _TINY)
        if new[negative].min() < -tolerance * mass:
            raise NumericalError(
                f"elimination produced weight {new.min():.3e} below -tolerance (mass {mass:.3e})"
            )
        new[negative] = 0.0
    return new, eliminated, direction


def eliminate_direction(weights, direction, tolerance: float = DEFAULT_TOLERANCE):
    """Move ``weights`` along ``-direction`` until one weight reaches zero.

    The step is ``theta = min(w_j / d_j : d_j > 0)`` with the lowest index
    winning ties.  If ``direction`` has no positive entry it is negated first.
    Returns ``(new_weights, eliminated_index)``.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise DataError("weights must be non-negative")
    new, index, _ = _eliminate(weights, direction, tolerance=tolerance)
    return new, index


def _residual(matrix, old, new) -> float:
    diff = matrix @ new - matrix @ old
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def _finish(system: ReductionSystem, weights: np.ndarray) -> ReducedSolution:
    weights = np.where(weights > 0.0, weights, 0.0)
    residual = _residual(system.matrix, system.weights, weights)
    bound = system.tolerance * (1.0 + float(np.max(np.abs(system.matrix @ system.weights))))
    if residual > bound:
        raise NumericalError(
            f"recombination residual {residual:.3e} exceeds bound {bound:.3e}"
        )
    return ReducedSolution(weights, np.flatnonzero(weights > 0.0), residual)


def _reduce_eager(basis, w, live, tolerance):
    # small systems: project every remaining direction right after each pivot
    for j in range(basis.shape[0]):
        v = basis[j]
        norm = np.abs(v).max()
        if norm == 0.0:
            raise NumericalError("kernel basis collapsed during re-projection")
        w, i, direction = _eliminate(w, v / norm, candidates=live, tolerance=tolerance)
        live[i] = False
        rest = basis[j + 1:]
        rest -= (rest[:, i] / direction[i])[:, None] * direction
        rest[:, i] = 0.0
    return w


def _reduce_dense(matrix: np.ndarray, weights: np.ndarray, tolerance: float) -> np.ndarray:
    """Basic kernel-elimination on strictly positive ``weights``."""
    basis = svd_kernel_basis(matrix)
    w = weights.copy()
    n_kernel = basis.shape[0]
    if n_kernel == 0:
        return w
    live = np.ones(w.shape[0], dtype=bool)
    if basis.size <= EAGER_PROJECTION_SIZE:
        return _reduce_eager(basis, w, live, tolerance)
    # Used directions and their pivots.  Basis vector j is projected lazily so
    # that it vanishes at every earlier pivot; pivots[p] is zero in every
    # later direction, so used[:, pivots] is upper triangular.
    used = np.empty_like(basis)
    pivots = np.empty(n_kernel, dtype=np.intp)
    # at_pivots[p, q] = used[p, pivots[q]]; the unused trailing block stays the
    # identity so the full-size solve needs no sub-matrix copy
    at_pivots = np.asfortranarray(np.eye(n_kernel))
    rhs = np.zeros(n_kernel)
    for j in range(n_kernel):
        v = basis[j]
        if j:
            rhs[:j] = v[pivots[:j]]
            coef = solve_triangular(
                at_pivots, rhs, trans="T", lower=False, check_finite=False
            )
            v = v - coef[:j] @ used[:j]
            v[~live] = 0.0
        norm = np.abs(v).max()
        if norm == 0.0:
            raise NumericalError("kernel basis collapsed during re-projection")
        w, i, direction = _eliminate(w, v / norm, candidates=live, tolerance=tolerance)
        used[j] = direction
        pivots[j] = i
        live[i] = False
        at_pivots[: j + 1, j] = used[: j + 1, i]
        at_pivots[j, :j] = 0.0
    return w


def recombine_basic(system: ReductionSystem) -> ReducedSolution:
    """Reduce the support of ``system.weights`` by sequential kernel elimination.

    Each kernel basis vector removes one coordinate; the vectors not yet used
    are re-projected so they vanish on every coordinate already removed.
    """
    active = np.flatnonzero(system.weights > 0.0)
    out = np.zeros(system.n_columns)
    if active.size:
        out[active] = _reduce_dense(
            system.matrix[:, active], system.weights[active], system.tolerance
        )
    return _finish(system, out)


def recombine_tree(system: ReductionSystem) -> ReducedSolution:
    """Divide-and-conquer reduction with the same contract as :func:`recombine_basic`.

    Columns are split into ``2 * rows`` blocks; each block is replaced by its
    mass and weighted barycentre, the barycentre system is reduced, and blocks
    that lose all mass are discarded.  The surviving blocks keep their
    internal proportions.  This repeats until at most ``2 * rows`` columns
    remain, which are then reduced directly.
    """
    rows = system.n_rows
    n_blocks = 2 * rows
    active = np.flatnonzero(system.weights > 0.0)
    matrix = system.matrix[:, active]
    w = system.weights[active].copy()
    idx = active

    while idx.size > n_blocks:
        starts = np.linspace(0, idx.size, n_blocks + 1).astype(np.intp)[:-1]
        masses = np.add.reduceat(w, starts)
        centres = np.add.reduceat(matrix * w, starts, axis=1) / masses
        centres[0] = 1.0
        new_masses = _reduce_dense(centres, masses, system.tolerance)
        counts = np.diff(np.append(starts, idx.size))
        scale = np.repeat(new_masses / masses, counts)
        keep = scale > 0.0
        w = (w * scale)[keep]
        matrix = matrix[:, keep]
        idx = idx[keep]

    out = np.zeros(system.n_columns)
    if idx.size:
        out[idx] = _reduce_dense(matrix, w, system.tolerance)
    return _finish(system, out)


RECOMBINERS = {"basic": recombine_basic, "tree": recombine_tree}


def recombination_thin(h_evaluations, alpha, selected, method: str = "tree",
                       tolerance: float = DEFAULT_TOLERANCE):
    """Thin ``sum(alpha_i h_i)`` to at most ``len(selected) + 1`` features.

    ``h_evaluations[j, i]`` is the value of functional ``j`` on feature ``i``.
    The rows named in ``selected`` (in that order) are stacked under a ones
    row and the positive coefficients ``alpha`` are recombined.  Returns
    ``(b, e)``: positive coefficients and the feature indices carrying them,
    with ``sum(b) == sum(alpha)`` and the selected functionals matched.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise DataError("recombination_thin needs strictly positive coefficients")
    h_evaluations = np.asarray(h_evaluations, dtype=float)
    selected = np.asarray(selected, dtype=np.intp).ravel()
    try:
        reducer = RECOMBINERS[method]
    except KeyError:
        raise DataError(f"unknown recombination method {method!r}") from None
    system = ReductionSystem.from_rows(h_evaluations[selected], alpha, tolerance)
    solution = reducer(system)
    return solution.weights[solution.support], solution.support
