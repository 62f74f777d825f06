"""Packing / covering estimates and checks of GRIM's step-count corollaries.

With one new functional and one shuffle per step, every functional GRIM
selects is at dual distance greater than ``(eps - eps0) / (2 C)`` from every
other selected functional.  The selected set is therefore a packing, so the
number of completed steps is bounded by the packing number at that radius.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import DataError

EXACT_PACKING_LIMIT = 20


def as_distance_matrix(dist) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DataError("distance matrix must be square")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise DataError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0) or np.any(d < 0):
        raise DataError("distance matrix needs a zero diagonal and non-negative entries")
    return d


def greedy_packing_estimate(dist, r: float):
    """Farthest-point packing from index 0; every returned pair is more than ``r`` apart."""
    d = as_distance_matrix(dist)
    if not r > 0:
        raise DataError("radius must be positive")
    selected = [0]
    nearest = d[0].copy()
    while True:
        nearest[selected] = -np.inf
        cand = int(np.argmax(nearest))
        if not nearest[cand] > r:
            break
        selected.append(cand)
        nearest = np.minimum(nearest, d[cand])
    return len(selected), selected


def greedy_covering_estimate(dist, r: float):
    """Greedy set cover by closed ``r``-balls centred at the points themselves."""
    d = as_distance_matrix(dist)
    if not r > 0:
        raise DataError("radius must be positive")
    balls = d <= r
    uncovered = np.ones(d.shape[0], dtype=bool)
    centres = []
    while uncovered.any():
        gain = balls[:, uncovered].sum(axis=1)
        c = int(np.argmax(gain))
        centres.append(c)
        uncovered &= ~balls[c]
    return len(centres), centres


def exact_packing_number(dist, r: float):
    """Largest subset with all pairwise distances ``> r`` (branch and bound).

    Only for small sets; raises above ``EXACT_PACKING_LIMIT`` points.
    """
    d = as_distance_matrix(dist)
    n = d.shape[0]
    if n > EXACT_PACKING_LIMIT:
        raise DataError(f"exact packing is limited to {EXACT_PACKING_LIMIT} points, got {n}")
    compatible = [
        sum(1 << j for j in range(n) if j != i and d[i, j] > r) for i in range(n)
    ]
    best = [0, 0]

    def grow(chosen_mask, size, candidates):
        if size + bin(candidates).count("1") <= best[0]:
            return
        if not candidates:
            best[0], best[1] = size, chosen_mask
            return
        i = candidates.bit_length() - 1
        bit = 1 << i
        grow(chosen_mask | bit, size + 1, candidates & compatible[i])
        grow(chosen_mask, size, candidates & ~bit)

    grow(0, 0, (1 << n) - 1)
    members = [i for i in range(n) if best[1] >> i & 1]
    return best[0], members


def exact_covering_number(dist, r: float):
    """Fewest data-centred closed ``r``-balls covering every point (exhaustive)."""
    d = as_distance_matrix(dist)
    n = d.shape[0]
    if n > EXACT_PACKING_LIMIT:
        raise DataError(f"exact covering is limited to {EXACT_PACKING_LIMIT} points, got {n}")
    balls = d <= r
    for size in range(1, n + 1):
        for centres in itertools.combinations(range(n), size):
            if balls[list(centres)].any(axis=0).all():
                return size, list(centres)
    return n, list(range(n))


def separation_radius(epsilon: float, epsilon0: float, mass: float) -> float:
    return (epsilon - epsilon0) / (2.0 * mass)


def _single_step_schedule(trace, k_schedule, s_schedule) -> bool:
    if k_schedule is not None and any(k != 1 for k in k_schedule):
        return False
    if s_schedule is not None and any(s != 1 for s in s_schedule):
        return False
    return all(len(st.new_indices) == 1 for st in trace.steps)


def separation_check(trace, dist, epsilon, epsilon0, mass, k_schedule=None, s_schedule=None):
    """Check that selected functionals are pairwise at least the separation radius apart.

    Runs outside the one-functional, one-shuffle regime are reported as not
    applicable rather than failing.
    """
    radius = separation_radius(epsilon, epsilon0, mass)
    report = {"radius": radius, "applicable": True, "pairs_checked": 0,
              "violations": [], "passed": True}
    if not _single_step_schedule(trace, k_schedule, s_schedule):
        report.update(applicable=False, passed=None,
                      reason="separation holds only with one functional and one shuffle per step")
        return report
    d = as_distance_matrix(dist)
    sel = trace.selected
    for p, q in itertools.combinations(sel, 2):
        report["pairs_checked"] += 1
        if d[p, q] < radius:
            report["violations"].append({"pair": [int(p), int(q)], "distance": float(d[p, q])})
    report["passed"] = not report["violations"]
    return report


def step_bound_report(trace, dist, epsilon, epsilon0, mass, n_features, n_functionals,
                      k_schedule=None, s_schedule=None):
    """Completed steps against the hard cap and the packing-number bound."""
    steps = len(trace.steps)
    cap = min(n_features - 1, n_functionals)
    radius = separation_radius(epsilon, epsilon0, mass)
    report = {
        "steps_completed": steps,
        "hard_cap": cap,
        "within_hard_cap": steps <= cap,
        "radius": radius,
        "packing_bound": None,
        "packing_bound_kind": None,
        "within_packing_bound": None,
    }
    if dist is None:
        report["packing_bound_kind"] = "unavailable"
        return report
    d = as_distance_matrix(dist)
    if d.shape[0] <= EXACT_PACKING_LIMIT:
        bound, _ = exact_packing_number(d, radius)
        report["packing_bound_kind"] = "exact"
    else:
        bound, _ = greedy_packing_estimate(d, radius)
        report["packing_bound_kind"] = "greedy_lower_bound"
    report["packing_bound"] = int(bound)
    if report["packing_bound_kind"] == "exact" and _single_step_schedule(trace, k_schedule, s_schedule):
        report["within_packing_bound"] = steps <= bound
    return report
