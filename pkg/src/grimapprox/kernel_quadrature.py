"""Kernel quadrature for empirical measures with a Gaussian (RBF) kernel.

Features are point masses ``delta_{x_i}`` weighted by the target measure;
functionals are kernel sections ``mu -> int k(x_j, .) d mu``.  GRIM then
returns a convex combination of a few point masses whose kernel mean agrees
with the target's at the selected points.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DataError
from .grim import GrimConfig, GrimResult, ProblemInstance, run_grim

log = logging.getLogger(__name__)

WCE_NEGATIVE_CLAMP = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise DataError(f"kernel bandwidth must be positive, got {self.bandwidth}")


def as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
        raise DataError("a point cloud must be a non-empty N x d array")
    if not np.all(np.isfinite(pts)):
        raise DataError("point cloud contains non-finite coordinates")
    return pts


def rbf_kernel(x, y, spec: KernelSpec) -> float:
    """``exp(-|x - y|^2 / (2 lambda^2))``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DataError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d2 = float(np.sum((x - y) ** 2))
    return float(np.exp(-d2 / (2.0 * spec.bandwidth**2)))


def median_heuristic(points, max_sample: int = 1000, seed: int = 0) -> float:
    """Median pairwise Euclidean distance over a uniform subsample of the cloud."""
    pts = as_cloud(points)
    if pts.shape[0] > max_sample:
        rng = np.random.default_rng(seed)
        pts = pts[np.sort(rng.choice(pts.shape[0], max_sample, replace=False))]
    if pts.shape[0] < 2:
        raise DataError("median heuristic needs at least two points")
    lam = float(np.median(pdist(pts)))
    if lam <= 0:
        raise DataError("median pairwise distance is zero; bandwidth undefined")
    return lam


def gram_matrix(points, spec: KernelSpec, other=None) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(x_i, y_j)`` (``y = x`` when ``other`` is omitted)."""
    x = as_cloud(points)
    y = x if other is None else as_cloud(other)
    d2 = cdist(x, y, "sqeuclidean")
    k = np.exp(-d2 / (2.0 * spec.bandwidth**2))
    if other is None:
        np.fill_diagonal(k, 1.0)
    return k


def wce_squared(a, w, gram) -> float:
    """Squared worst-case error ``(a - w)^T K (a - w)`` of weights ``w`` against ``a``."""
    a = np.asarray(a, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    gram = np.asarray(gram, dtype=float)
    if a.shape != w.shape or gram.shape != (a.size, a.size):
        raise DataError("weight vectors and Gram matrix disagree in size")
    d = a - w
    val = float(d @ gram @ d)
    if val < 0 and val >= -WCE_NEGATIVE_CLAMP:
        return 0.0
    return val


@dataclass
class QuadratureResult:
    node_indices: np.ndarray
    weights: np.ndarray
    wce_squared: float
    grim: GrimResult


def kernel_instance(gram, mu_weights, with_distances: bool = False) -> ProblemInstance:
    """Instance with ``Phi[j, i] = k(x_j, x_i)``, ``a = mu`` and unit feature norms."""
    mu = np.asarray(mu_weights, dtype=float).ravel()
    if np.any(mu <= 0):
        raise DataError("target measure weights must be positive")
    if abs(mu.sum() - 1.0) > 1e-10:
        raise DataError(f"target measure weights sum to {mu.sum():.12g}, expected 1")
    dist = dual_distance_matrix(gram) if with_distances else None
    return ProblemInstance(gram, mu, np.ones_like(mu), dual_distance=dist)


def kernel_quadrature_grim(points, mu_weights, spec: KernelSpec, config: GrimConfig,
                           with_distances: bool = False) -> QuadratureResult:
    """Convex quadrature rule for ``mu`` built by GRIM over the cloud's kernel sections."""
    gram = gram_matrix(points, spec)
    instance = kernel_instance(gram, mu_weights, with_distances)
    result = run_grim(instance, config)
    nodes = np.asarray(result.support, dtype=np.intp)
    weights = np.asarray(result.coefficients, dtype=float)
    full = np.zeros(instance.n_features)
    full[nodes] = weights
    return QuadratureResult(nodes, weights, wce_squared(instance.weights, full, gram), result)


def functional_sup_distance(i: int, j: int, points, spec: KernelSpec) -> float:
    """``max_z |k(z, x_i) - k(z, x_j)|`` over the points of the cloud."""
    pts = as_cloud(points)
    cols = gram_matrix(pts, spec, pts[[i, j]])
    return float(np.max(np.abs(cols[:, 0] - cols[:, 1])))


def dual_distance_matrix(gram) -> np.ndarray:
    """Pairwise sup-distances between kernel sections, from a precomputed Gram matrix."""
    gram = np.asarray(gram, dtype=float)
    n = gram.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        out[i, i + 1:] = np.max(np.abs(gram[:, i + 1:] - gram[:, [i]]), axis=0)
    out += out.T
    return out


def uniform_subset_wce(gram, mu_weights, size: int, trials: int, seed: int = 0) -> np.ndarray:
    """WCE^2 of ``trials`` equal-weight random subsets of ``size`` points (Monte Carlo baseline)."""
    mu = np.asarray(mu_weights, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.empty(trials)
    for t in range(trials):
        idx = rng.choice(mu.size, size, replace=False)
        w = np.zeros(mu.size)
        w[idx] = 1.0 / size
        out[t] = wce_squared(mu, w, gram)
    return out


def read_point_csv(path):
    """Read a point cloud; a header row is optional and a final ``weight`` column is honoured.

    Returns ``(points, weights)`` with ``weights`` None when absent.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    rows, header, weight_col = [], None, False
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if header is None and not rows:
                try:
                    float(row[0])
                except ValueError:
                    header = [h.strip().lower() for h in row]
                    weight_col = header[-1] == "weight"
                    continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad = next(c for c, v in enumerate(row, 1) if not _is_float(v))
                raise DataError(
                    f"{path}:{lineno}: column {bad}: not a number: {row[bad - 1].strip()!r}"
                ) from None
    if not rows:
        raise DataError(f"{path}: no points")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"{path}: rows have inconsistent column counts")
    data = np.array(rows)
    if weight_col:
        if width < 2:
            raise DataError(f"{path}: weight column needs at least one coordinate column")
        return as_cloud(data[:, :-1]), data[:, -1]
    return as_cloud(data), None


def _is_float(token) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True
