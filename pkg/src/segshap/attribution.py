"""KernelSHAP attributions via weighted least squares over counterfactual outcomes.

The regression runs over interior coalition rows (0 < |z| < M) with the Shapley
kernel weight; all-zero / all-one rows are held out as endpoint observations and
enforced exactly by constrained elimination when present. Bits that never vary
across the observed rows are not identifiable: they get phi = 0 and are listed
in the diagnostics rather than silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_PINV_RTOL = 1e-10


class AttributionError(Exception):
    pass


class DegenerateCoalition(AttributionError):
    pass


class InsufficientRows(AttributionError):
    pass


class NumericalFailure(AttributionError):
    pass


def kernel_weight(m: int, s: int) -> float:
    """Shapley kernel weight (m-1) / (C(m,s) * s * (m-s)) for interior coalitions."""
    if m < 2:
        raise DegenerateCoalition(f"no interior coalitions exist for M={m}")
    if s <= 0 or s >= m:
        raise DegenerateCoalition(f"coalition size {s} of M={m} has infinite weight")
    return (m - 1) / (math.comb(m, s) * s * (m - s))


@dataclass(frozen=True)
class ShapProblem:
    x: np.ndarray                 # N x M interior rows
    y: np.ndarray                 # length N averaged outcomes
    w: np.ndarray                 # length N kernel weights
    m: int
    f_empty: float | None         # outcome of the all-zeros row, if observed
    f_full: float | None          # outcome of the all-ones row, if observed

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


@dataclass(frozen=True)
class ShapResult:
    phi0: float
    phi: tuple[float, ...]
    condition_estimate: float
    residual_norm: float
    not_identifiable: tuple[int, ...]   # column positions whose bit never varies


def build_problem(records: list[tuple[tuple[int, ...], float]], m: int) -> ShapProblem:
    """Collapse (bits, outcome) records into the weighted regression problem.

    Duplicate bit vectors have their outcomes averaged while the kernel weight is
    kept single; replacement choices must already be collapsed to inclusion bits.
    """
    grouped: dict[tuple[int, ...], list[float]] = {}
    for bits, outcome in records:
        bits = tuple(int(b) for b in bits)
        if len(bits) != m:
            raise AttributionError(f"row has {len(bits)} bits, expected {m}")
        grouped.setdefault(bits, []).append(float(outcome))

    f_empty = f_full = None
    rows, ys, ws = [], [], []
    for bits, outcomes in sorted(grouped.items()):
        mean = sum(outcomes) / len(outcomes)
        s = sum(bits)
        if s == 0:
            f_empty = mean
        elif s == m:
            f_full = mean
        else:
            rows.append(bits)
            ys.append(mean)
            ws.append(kernel_weight(m, s))
    if len(rows) < 2:
        raise InsufficientRows(f"{len(rows)} distinct interior rows; need at least 2")
    return ShapProblem(
        x=np.array(rows, dtype=float),
        y=np.array(ys, dtype=float),
        w=np.array(ws, dtype=float),
        m=m,
        f_empty=f_empty,
        f_full=f_full,
    )


def _wls(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    """argmin ||sqrt(w)(a theta - b)|| via normal equations + pseudoinverse."""
    gram = a.T @ (w[:, None] * a)
    rhs = a.T @ (w * b)
    theta = np.linalg.pinv(gram, rtol=_PINV_RTOL) @ rhs
    cond = float(np.linalg.cond(gram)) if gram.size else 0.0
    return theta, cond


def solve(problem: ShapProblem) -> ShapResult:
    m = problem.m
    x, y, w = problem.x, problem.y, problem.w

    # a column is identifiable iff its bit varies somewhere among the observations
    observed = [x]
    if problem.f_empty is not None:
        observed.append(np.zeros((1, m)))
    if problem.f_full is not None:
        observed.append(np.ones((1, m)))
    all_rows = np.vstack(observed)
    varying = [j for j in range(m) if all_rows[:, j].min() != all_rows[:, j].max()]
    constant = tuple(j for j in range(m) if j not in varying)

    phi = np.zeros(m)
    if problem.f_empty is not None and problem.f_full is not None:
        phi0 = problem.f_empty
        budget = problem.f_full - problem.f_empty
        e = varying[-1]  # with both endpoints every column varies
        keep = varying[:-1]
        a = x[:, keep] - x[:, [e]]
        b = y - phi0 - x[:, e] * budget
        theta, cond = _wls(a, b, w)
        phi[keep] = theta
        phi[e] = budget - theta.sum()
    elif problem.f_full is not None:
        e = varying[-1]
        keep = varying[:-1]
        a = np.column_stack([1.0 - x[:, e], x[:, keep] - x[:, [e]]])
        b = y - x[:, e] * problem.f_full
        theta, cond = _wls(a, b, w)
        phi0 = float(theta[0])
        phi[keep] = theta[1:]
        phi[e] = problem.f_full - phi0 - theta[1:].sum()
    elif problem.f_empty is not None:
        phi0 = problem.f_empty
        theta, cond = _wls(x[:, varying], y - phi0, w)
        phi[varying] = theta
    else:
        a = np.column_stack([np.ones(len(y)), x[:, varying]])
        theta, cond = _wls(a, y, w)
        phi0 = float(theta[0])
        phi[varying] = theta[1:]

    residual = y - phi0 - x @ phi
    residual_norm = float(np.sqrt(np.sum(w * residual ** 2)))
    result = ShapResult(
        phi0=float(phi0),
        phi=tuple(float(v) for v in phi),
        condition_estimate=cond,
        residual_norm=residual_norm,
        not_identifiable=constant,
    )
    if not math.isfinite(result.phi0) or not all(math.isfinite(v) for v in result.phi):
        raise NumericalFailure("non-finite attribution values")
    return result


def result_to_obj(result: ShapResult, segment_ids: list[int]) -> dict:
    """Wire format written alongside run artifacts."""
    return {
        "phi0": result.phi0,
        "phi": list(result.phi),
        "segment_ids": list(segment_ids),
        "diagnostics": {
            "condition_estimate": result.condition_estimate,
            "residual_norm": result.residual_norm,
            "not_identifiable": [segment_ids[j] for j in result.not_identifiable],
        },
    }
