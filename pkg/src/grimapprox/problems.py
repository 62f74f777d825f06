"""Concrete problem instances.

* the L2(0, 1) demo: features ``f_{a,b}(x) = (1 + (25 + a cos(bx)) x^2)^(-1/2)``
  probed by Gaussian-window local averages,
* moment-preserving cubature for weighted point clouds,
* generic instances read from CSV files.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .grim import ProblemInstance

log = logging.getLogger(__name__)

A_RANGE = (0.01, 24.9)
B_RANGE = (0.0, 15.0)
#: half-width of each functional's local integration window, in units of s
WINDOW_HALF_WIDTH = 6.0
MIN_POINTS_PER_WIDTH = 8


class GramNorm:
    """Norm of a coefficient vector ``c`` as ``sqrt(c^T G c)``.

    Accepts a single vector or a 2-D array whose columns are coefficient
    vectors; small negative quadratic forms from round-off are clipped to 0.
    """

    def __init__(self, gram):
        self.gram = np.asarray(gram, dtype=float)

    @classmethod
    def from_values(cls, values, quad_weights=None) -> "GramNorm":
        """Build from feature samples ``values[k, i] = f_i(x_k)``."""
        values = np.asarray(values, dtype=float)
        if quad_weights is None:
            return cls(values.T @ values)
        return cls(values.T @ (np.asarray(quad_weights, dtype=float)[:, None] * values))

    def __call__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 1:
            return float(np.sqrt(max(c @ self.gram @ c, 0.0)))
        q = np.sum(c * (self.gram @ c), axis=0)
        return np.sqrt(np.clip(q, 0.0, None))


@dataclass(frozen=True)
class L2DemoSpec:
    n_grid: int = 20
    n_functionals: int = 1000
    width: float = 5e-4
    n_fine: int = 20001
    n_window: int = 201

    def __post_init__(self):
        if self.n_grid < 1 or self.n_functionals < 1:
            raise ConfigError("n_grid and n_functionals must be positive")
        if not self.width > 0:
            raise ConfigError("mollifier width must be positive")
        if (self.n_fine - 1) * self.width < MIN_POINTS_PER_WIDTH:
            raise ConfigError(
                f"fine grid of {self.n_fine} points has fewer than "
                f"{MIN_POINTS_PER_WIDTH} points per mollifier width {self.width}"
            )
        if self.n_window < 201:
            raise ConfigError("local window grids need at least 201 points")


def l2_demo_parameters(n_grid: int) -> np.ndarray:
    """``(a, b)`` pairs, row-major with ``a`` varying fastest."""
    a = np.linspace(*A_RANGE, n_grid)
    b = np.linspace(*B_RANGE, n_grid)
    bb, aa = np.meshgrid(b, a, indexing="ij")
    return np.column_stack([aa.ravel(), bb.ravel()])


def l2_feature(x, a, b):
    x = np.asarray(x, dtype=float)
    return 1.0 / np.sqrt(1.0 + (25.0 + a * np.cos(b * x)) * x * x)


def _feature_matrix(x, params):
    return l2_feature(x[:, None], params[:, 0], params[:, 1])


def mollified_functional_grids(spec: L2DemoSpec):
    """Centres, local grids and normalized trapezoid weights for every functional."""
    centres = np.linspace(0.0, 1.0, spec.n_functionals)
    half = WINDOW_HALF_WIDTH * spec.width
    lo = np.clip(centres - half, 0.0, 1.0)
    hi = np.clip(centres + half, 0.0, 1.0)
    t = np.linspace(0.0, 1.0, spec.n_window)
    grids = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    density = np.exp(-((grids - centres[:, None]) ** 2) / (2.0 * spec.width**2))
    h = (hi - lo)[:, None] / (spec.n_window - 1)
    trap = np.full(spec.n_window, 1.0)
    trap[[0, -1]] = 0.5
    weights = density * trap[None, :] * h
    weights /= weights.sum(axis=1, keepdims=True)
    return centres, grids, weights


def apply_functionals(func_grids, func_weights, fn) -> np.ndarray:
    """Apply every mollified functional to ``fn`` (vectorized in x)."""
    return np.sum(fn(func_grids) * func_weights, axis=1)


@dataclass
class L2Demo:
    instance: ProblemInstance
    norm: GramNorm
    params: np.ndarray
    spec: L2DemoSpec


def build_l2_demo(spec: L2DemoSpec, chunk: int = 64) -> L2Demo:
    """Assemble the L2 demo instance with trapezoid-rule norms on a uniform fine grid."""
    params = l2_demo_parameters(spec.n_grid)
    n_feat = params.shape[0]
    _, grids, fweights = mollified_functional_grids(spec)
    flat = grids.ravel()
    evals = np.empty((spec.n_functionals, n_feat))
    for start in range(0, n_feat, chunk):
        p = params[start:start + chunk]
        vals = _feature_matrix(flat, p).reshape(spec.n_functionals, spec.n_window, -1)
        evals[:, start:start + chunk] = np.einsum("kw,kwi->ki", fweights, vals)

    x = np.linspace(0.0, 1.0, spec.n_fine)
    qw = np.full(spec.n_fine, x[1] - x[0])
    qw[[0, -1]] *= 0.5
    gram = np.zeros((n_feat, n_feat))
    for start in range(0, spec.n_fine, 2048):
        vals = _feature_matrix(x[start:start + 2048], params)
        gram += vals.T @ (qw[start:start + 2048, None] * vals)
    norms = np.sqrt(np.diag(gram))
    instance = ProblemInstance(evals, np.ones(n_feat), norms)
    return L2Demo(instance, GramNorm(gram), params, spec)


def eval_l2_metrics(instance: ProblemInstance, norm, support, coefficients):
    """``(L2 error, sup error over the functionals)`` of a candidate expansion."""
    support = np.asarray(support, dtype=np.intp)
    coefficients = np.asarray(coefficients, dtype=float)
    u = np.zeros(instance.n_features)
    np.add.at(u, support, coefficients)
    diff = instance.weights - u
    sup = float(np.max(np.abs(instance.evaluations @ diff), initial=0.0))
    return float(norm(diff)), sup


def multi_indices(degree: int, dim: int) -> list:
    """Exponent tuples with total degree <= ``degree``, sorted by degree then lexicographically (descending)."""
    exps = [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    return sorted(exps, key=lambda e: (sum(e), [-v for v in e]))


@dataclass(frozen=True)
class MomentSpec:
    max_degree: int
    dim: int

    def __post_init__(self):
        if self.max_degree < 0 or self.dim < 1:
            raise ConfigError("moment spec needs max_degree >= 0 and dim >= 1")

    @property
    def exponents(self) -> list:
        return multi_indices(self.max_degree, self.dim)


MONOMIAL_LIMIT = 1e100


def monomial_rows(points, spec: MomentSpec) -> np.ndarray:
    """Rows ``p_e(x_i)`` for every exponent ``e`` of ``spec``, constant row first."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != spec.dim:
        raise DataError(f"points have dimension {pts.shape[1]}, spec expects {spec.dim}")
    exps = np.array(spec.exponents, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        rows = np.prod(pts[None, :, :] ** exps[:, None, :], axis=2)
    if not np.all(np.isfinite(rows)) or np.max(np.abs(rows), initial=0.0) > MONOMIAL_LIMIT:
        raise DataError(
            "monomial values overflow; rescale the points into [-1, 1] before building moments"
        )
    return rows


def build_monomial_cubature(points, weights, spec: MomentSpec) -> ProblemInstance:
    """Instance whose functionals are the monomial moments up to ``spec.max_degree``."""
    w = np.asarray(weights, dtype=float).ravel()
    if np.any(w <= 0):
        raise DataError("cubature weights must be positive")
    return ProblemInstance(monomial_rows(points, spec), w)


def reduce_cubature(points, weights, spec: MomentSpec, method: str = "tree"):
    """Reduced measure preserving every moment of ``spec`` directly by recombination.

    The constant moment is the recombination ones row.  Returns
    ``(support, weights)``.
    """
    from .recombination import RECOMBINERS, ReductionSystem

    w = np.asarray(weights, dtype=float).ravel()
    if np.any(w <= 0):
        raise DataError("cubature weights must be positive")
    rows = monomial_rows(points, spec)
    system = ReductionSystem(rows, w)
    sol = RECOMBINERS[method](system)
    return sol.support, sol.weights[sol.support]


def _read_numeric_csv(path) -> list:
    path = Path(path)
    rows = []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            values = []
            for col, token in enumerate(row, start=1):
                try:
                    values.append(float(token))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: column {col}: not a number: {token.strip()!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def _read_vector(path) -> np.ndarray:
    rows = _read_numeric_csv(path)
    if len(rows) > 1 and any(len(r) != 1 for r in rows):
        raise DataError(f"{path}: expected one value per line or a single row")
    return np.array([v for r in rows for v in r])


def read_matrix_csv(path) -> np.ndarray:
    rows = _read_numeric_csv(path)
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: data row {i + 1} has {len(r)} columns, expected {width}")
    return np.array(rows)


def load_csv_instance(eval_path, weights_path, norms_path=None) -> ProblemInstance:
    """Read ``Phi`` (one functional per line), ``a`` and optionally the feature norms."""
    evals = read_matrix_csv(eval_path)
    a = _read_vector(weights_path)
    if a.shape[0] != evals.shape[1]:
        raise DataError(
            f"{weights_path}: {a.shape[0]} weights for {evals.shape[1]} feature columns"
        )
    if norms_path is None:
        log.info("no feature norms given; using unit norms")
        nu = None
    else:
        nu = _read_vector(norms_path)
        if nu.shape[0] != a.shape[0]:
            raise DataError(f"{norms_path}: {nu.shape[0]} norms for {a.shape[0]} features")
    return ProblemInstance(evals, a, nu)
