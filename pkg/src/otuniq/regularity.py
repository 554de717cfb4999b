"""Grid-scale regularity diagnostics.

Everything here is a numerical diagnostic, not a proof: dominated-cost
regions and their asymptotic limits, an escape diagnostic flagging
source points whose transport partners run away under target
truncations, and a finite-difference check of the gradient identity
grad f(x) = grad_x c(x, y) at interior support points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_TOLERANCES,
    CostProfile,
    CostSpec,
    DiscreteMeasure,
    Tolerances,
)
from .errors import (
    NotAGrid,
    OTUniqError,
    ProfileNotMonotone,
    ScheduleTooShort,
)
from .solver import SolveResult, solve

ESCAPE_GROWTH_FACTOR = 2.0   # flag when partner distance ever doubles


@dataclass(frozen=True)
class DominatedCostRegion:
    """Grid membership of C(x, y) = {x' : c(x', y) <= c(x, y)}."""

    anchor_x: np.ndarray
    anchor_y: np.ndarray
    grid: np.ndarray
    member: np.ndarray        # boolean per grid point
    threshold: float          # c(x, y)


def dominated_region(x, y, cost: CostSpec, grid) -> DominatedCostRegion:
    """Exact pointwise evaluation of the dominated-cost region."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise OTUniqError("empty query grid")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    thr = cost.value(x, y)
    vals = np.array([cost.value(p, y) for p in grid])
    return DominatedCostRegion(anchor_x=x, anchor_y=y, grid=grid,
                               member=vals <= thr, threshold=thr)


@dataclass(frozen=True)
class AsymptoticRegion:
    """Membership frequencies of C(x_n~, y_n) along an escaping ray."""

    x: np.ndarray
    direction: np.ndarray
    radii: np.ndarray
    grid: np.ndarray
    frequency: np.ndarray      # over the whole schedule
    tail_frequency: np.ndarray  # over the tail half only
    tail_member: np.ndarray    # member at every radius in the tail half


def asymptotic_region(x, direction, cost: CostSpec, radii, grid
                      ) -> AsymptoticRegion:
    """Approximate C_infinity = limsup C(x_n~, y_n).

    Targets escape along the ray y_n = x + r_n u while the perturbed
    anchors approach, x_n~ = x + u / sqrt(r_n) (the squared-Euclidean
    recipe of the interior-regularity construction).  A grid point
    belongs to the limsup approximation when it is a member at every
    radius in the tail half of the schedule.
    """
    if cost.kind == "explicit_matrix":
        raise OTUniqError("asymptotic regions need a closed-form cost")
    if cost.kind == "profile_of_distance" \
            and not cost.profile.is_nondecreasing():
        raise ProfileNotMonotone("profile must be nondecreasing")
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(direction, dtype=float).ravel()
    norm = float(np.linalg.norm(u))
    if not np.isclose(norm, 1.0, atol=1e-9):
        u = u / norm
    radii = np.sort(np.asarray(radii, dtype=float))
    if np.any(radii <= 0):
        raise OTUniqError("radii must be positive")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    member = np.zeros((len(radii), grid.shape[0]), dtype=bool)
    for k, r in enumerate(radii):
        y_n = x + r * u
        x_n = x + u / np.sqrt(r)
        member[k] = dominated_region(x_n, y_n, cost, grid).member
    tail = member[len(radii) // 2:]
    return AsymptoticRegion(x=x, direction=u, radii=radii, grid=grid,
                            frequency=member.mean(axis=0),
                            tail_frequency=tail.mean(axis=0),
                            tail_member=tail.all(axis=0))


@dataclass(frozen=True)
class EscapeDiagnostic:
    """Partner-distance growth across a target truncation schedule."""

    radii: np.ndarray
    partner_distance: np.ndarray   # (n_radii, n_sources) max per source
    escape_score: np.ndarray       # max over the schedule
    flagged: np.ndarray            # growth ever doubled


def escape_diagnostic(mu: DiscreteMeasure,
                      nu_family: Sequence[DiscreteMeasure],
                      cost: CostSpec, radii: Optional[Sequence[float]] = None,
                      tol: Tolerances = DEFAULT_TOLERANCES
                      ) -> EscapeDiagnostic:
    """Flag source points whose partners escape under truncation growth.

    Solves each truncated problem and records, per source point, the
    largest distance to a plan partner.  A point is flagged when that
    distance at some later truncation is at least twice its value at an
    earlier one; adding truncations can only add flags.
    """
    if len(nu_family) < 3:
        raise ScheduleTooShort("need at least three truncation radii")
    if radii is None:
        radii = np.arange(1.0, len(nu_family) + 1.0)
    radii = np.asarray(radii, dtype=float)
    dist = np.zeros((len(nu_family), mu.n))
    for k, nu in enumerate(nu_family):
        res = solve(mu, nu, cost, tol)
        for i, j, _ in res.plan.entries:
            d = float(np.linalg.norm(mu.points[i] - nu.points[j]))
            dist[k, i] = max(dist[k, i], d)
    tiny = 1e-12 * (1.0 + float(np.max(dist)))
    flagged = np.zeros(mu.n, dtype=bool)
    for i in range(mu.n):
        running_min = np.minimum.accumulate(np.maximum(dist[:, i], tiny))
        later = dist[1:, i]
        flagged[i] = bool(np.any(
            later >= ESCAPE_GROWTH_FACTOR * running_min[:-1]))
    return EscapeDiagnostic(radii=radii, partner_distance=dist,
                            escape_score=dist.max(axis=0), flagged=flagged)


def superlinearity_bound(profile, a: float, r_max: float = 100.0,
                         samples: int = 2048) -> float:
    """g(a) = inf over b >= a of h'(b), sampled numerically.

    ``profile`` is either a CostProfile or an lp_norm_power CostSpec;
    h' -> infinity (g unbounded in a) is the superlinearity hypothesis
    of the interior-regularity theorem.
    """
    bs = np.linspace(a, max(r_max, a + 1.0), samples)
    if isinstance(profile, CostProfile):
        return float(np.min(profile.derivative(bs)))
    if isinstance(profile, CostSpec) and profile.kind == "lp_norm_power":
        p = profile.p
        return float(np.min(p * np.maximum(bs, 0.0) ** (p - 1.0)))
    raise OTUniqError("need a profile or an lp_norm_power cost")


def _grid_structure(points: np.ndarray):
    """Recover a regular cartesian grid from a point cloud.

    Returns (axes, index) where axes are the per-dimension sorted
    coordinate arrays and index maps each point to its lattice tuple.
    Raises NotAGrid when the cloud is not a full uniform product grid.
    """
    n, d = points.shape
    axes = []
    for k in range(d):
        vals = np.unique(points[:, k])
        if len(vals) > 1:
            steps = np.diff(vals)
            if np.max(steps) - np.min(steps) > 1e-9 * np.max(steps):
                raise NotAGrid(f"axis {k} spacing is not uniform")
        axes.append(vals)
    if int(np.prod([len(a) for a in axes])) != n:
        raise NotAGrid("points do not fill the product grid")
    index = np.empty((n, d), dtype=int)
    for k in range(d):
        index[:, k] = np.searchsorted(axes[k], points[:, k])
    return axes, index


@dataclass(frozen=True)
class GradientCheckReport:
    """Finite-difference f gradients vs analytic cost gradients."""

    entries: tuple     # (i, j, fd_grad, cost_grad, deviation) per tight pair
    summary: dict      # max/median per-pair and mass-weighted deviations
    interior: np.ndarray


def gradient_identity_check(result: SolveResult, cost: CostSpec,
                            interior: Optional[np.ndarray] = None
                            ) -> GradientCheckReport:
    """Check grad f(x) = grad_x c(x, y) at interior support points.

    f is differenced centrally on the source grid; the comparison is
    made per plan pair and, in the summary, against the mass-weighted
    average partner gradient (the finite stand-in for the continuum
    partner).  Deviations are reported, never thresholded away.
    """
    mu = result.plan.source
    nu = result.plan.target
    axes, index = _grid_structure(mu.points)
    d = mu.dim
    lattice = {tuple(ix): k for k, ix in enumerate(index)}
    shape = tuple(len(a) for a in axes)
    if interior is None:
        interior = np.ones(mu.n, dtype=bool)
        for k, ix in enumerate(index):
            for ax in range(d):
                if len(axes[ax]) < 3 or ix[ax] == 0 \
                        or ix[ax] == shape[ax] - 1:
                    interior[k] = False
    f = result.pair.f
    grads = np.full((mu.n, d), np.nan)
    for k, ix in enumerate(index):
        if not interior[k]:
            continue
        g = np.empty(d)
        for ax in range(d):
            lo = list(ix)
            hi = list(ix)
            lo[ax] -= 1
            hi[ax] += 1
            h = axes[ax][hi[ax]] - axes[ax][lo[ax]]
            g[ax] = (f[lattice[tuple(hi)]] - f[lattice[tuple(lo)]]) / h
        grads[k] = g
    entries = []
    weighted_num = np.zeros((mu.n, d))
    weighted_den = np.zeros(mu.n)
    for i, j, v in result.plan.entries:
        if not interior[i]:
            continue
        cg = cost.grad_x(mu.points[i], nu.points[j])
        dev = float(np.linalg.norm(grads[i] - cg))
        entries.append((i, j, grads[i].copy(), cg, dev))
        weighted_num[i] += v * cg
        weighted_den[i] += v
    per_pair = np.array([e[4] for e in entries]) if entries else np.zeros(0)
    live = weighted_den > 0
    wdev = np.linalg.norm(
        grads[live] - weighted_num[live] / weighted_den[live, None], axis=1) \
        if np.any(live) else np.zeros(0)
    summary = {
        "max": float(np.max(per_pair)) if per_pair.size else 0.0,
        "median": float(np.median(per_pair)) if per_pair.size else 0.0,
        "max_weighted": float(np.max(wdev)) if wdev.size else 0.0,
        "median_weighted": float(np.median(wdev)) if wdev.size else 0.0,
        "n_interior_pairs": len(entries),
    }
    return GradientCheckReport(entries=tuple(entries), summary=summary,
                               interior=np.asarray(interior, dtype=bool))
