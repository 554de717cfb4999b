"""Domain types, c-transform calculus, and duality verification.

Measures, costs, plans, and potentials are immutable once built; all heavy
lifting works on plain numpy arrays.  Potentials may take the value -inf
(the extended-real sentinel), with -inf + finite = -inf semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from .errors import (
    AllInfinite,
    DimensionMismatch,
    InfeasiblePair,
    OTUniqError,
)

NEG_INF = float("-inf")

#: default tolerances; all certificates report which bound they used
TAU_MASS = 1e-9          # relative, on weights summing to one
TAU_GEOM = 1e-12         # per-coordinate point distinctness
TAU_TIGHT_SCALE = 1e-7   # scaled by (1 + max |c|)
TAU_GAP = 1e-7           # relative duality gap
TAU_FACE_SCALE = 1e-6    # scaled by (1 + max |c|)


@dataclass(frozen=True)
class Tolerances:
    """Tolerance bundle threaded through verification routines."""

    mass: float = TAU_MASS
    geom: float = TAU_GEOM
    tight_scale: float = TAU_TIGHT_SCALE
    gap: float = TAU_GAP
    face_scale: float = TAU_FACE_SCALE

    def tight(self, cost_scale: float) -> float:
        return self.tight_scale * (1.0 + cost_scale)

    def face(self, cost_scale: float) -> float:
        return self.face_scale * (1.0 + cost_scale)


DEFAULT_TOLERANCES = Tolerances()


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite weighted point cloud, optionally carrying component labels."""

    points: np.ndarray            # (n, d)
    weights: np.ndarray           # (n,), nonnegative, sums to one
    labels: Optional[np.ndarray] = None  # (n,) small ints

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise DimensionMismatch(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if pts.shape[0] == 0:
            raise OTUniqError("measure needs at least one point")
        if np.any(w < 0):
            raise OTUniqError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > TAU_MASS * max(1.0, abs(total)):
            raise OTUniqError(f"weights sum to {total!r}, expected 1")
        _check_distinct(pts)
        object.__setattr__(self, "points", _as_readonly(pts))
        object.__setattr__(self, "weights", _as_readonly(w))
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=int).ravel()
            if lab.shape[0] != pts.shape[0]:
                raise DimensionMismatch("labels length mismatch")
            object.__setattr__(self, "labels", _as_readonly(lab))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def anchor_index(self) -> int:
        """Index of the lexicographically smallest point (shift anchor)."""
        order = np.lexsort(self.points.T[::-1])
        return int(order[0])

    @classmethod
    def from_lists(
        cls,
        points: Sequence[Sequence[float]] | Sequence[float],
        weights: Sequence[float],
        labels: Optional[Sequence[int]] = None,
    ) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts, np.asarray(weights, dtype=float), labels)


def _check_distinct(pts: np.ndarray) -> None:
    # O(n^2) but n stays in the hundreds for this artifact
    order = np.lexsort(pts.T[::-1])
    sorted_pts = pts[order]
    close = np.all(np.abs(np.diff(sorted_pts, axis=0)) <= TAU_GEOM, axis=1)
    if np.any(close):
        k = int(np.argmax(close))
        raise OTUniqError(
            f"points {order[k]} and {order[k + 1]} coincide within {TAU_GEOM}"
        )


class CostProfile:
    """Profile h applied to Euclidean distance: polynomial or tabulated."""

    def __init__(self, coeffs: Optional[Sequence[float]] = None,
                 table: Optional[tuple[Sequence[float], Sequence[float]]] = None):
        if (coeffs is None) == (table is None):
            raise OTUniqError("profile needs either coeffs or a table")
        self.coeffs = None if coeffs is None else np.asarray(coeffs, dtype=float)
        if table is None:
            self.table = None
        else:
            xs = np.asarray(table[0], dtype=float)
            ys = np.asarray(table[1], dtype=float)
            if xs.shape != ys.shape or xs.size < 2:
                raise OTUniqError("profile table needs matching arrays, >= 2 rows")
            if np.any(np.diff(xs) <= 0):
                raise OTUniqError("profile table abscissae must increase")
            self.table = (xs, ys)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.coeffs is not None:
            return np.polynomial.polynomial.polyval(r, self.coeffs)
        xs, ys = self.table
        return np.interp(r, xs, ys)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.coeffs is not None:
            dc = np.polynomial.polynomial.polyder(self.coeffs)
            return np.polynomial.polynomial.polyval(r, dc)
        xs, ys = self.table
        slopes = np.diff(ys) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, r, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    def is_nondecreasing(self, r_max: float = 100.0, samples: int = 2048) -> bool:
        rs = np.linspace(0.0, r_max, samples)
        vals = self(rs)
        return bool(np.all(np.diff(vals) >= -1e-12 * (1.0 + np.abs(vals[:-1]))))


@dataclass(frozen=True)
class CostSpec:
    """Cost family: lp-norm power, profile of distance, or explicit matrix.

    Closed-form kinds evaluate lazily; the full matrix for a measure pair is
    built on first use and cached.
    """

    kind: Literal["lp_norm_power", "profile_of_distance", "explicit_matrix"]
    q: float = 2.0               # lp norm exponent, q >= 1
    p: float = 1.0               # power applied to the norm, p > 0
    profile: Optional[CostProfile] = None
    values: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "lp_norm_power":
            if self.q < 1 or self.p <= 0:
                raise OTUniqError("lp_norm_power needs q >= 1 and p > 0")
        elif self.kind == "profile_of_distance":
            if self.profile is None:
                raise OTUniqError("profile_of_distance needs a profile")
        elif self.kind == "explicit_matrix":
            if self.values is None:
                raise OTUniqError("explicit_matrix needs values")
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim != 2:
                raise OTUniqError("explicit matrix must be 2-d")
            if np.any(~np.isfinite(vals)) or np.any(vals < 0):
                raise OTUniqError("costs must be finite and nonnegative")
            object.__setattr__(self, "values", _as_readonly(vals))
        else:
            raise OTUniqError(f"unknown cost kind {self.kind!r}")

    @classmethod
    def lp_norm_power(cls, q: float, p: float) -> "CostSpec":
        return cls(kind="lp_norm_power", q=q, p=p)

    @classmethod
    def sq_euclidean(cls) -> "CostSpec":
        return cls(kind="lp_norm_power", q=2.0, p=2.0)

    @classmethod
    def profile_of_distance(cls, profile: CostProfile) -> "CostSpec":
        return cls(kind="profile_of_distance", profile=profile)

    @classmethod
    def explicit(cls, values) -> "CostSpec":
        return cls(kind="explicit_matrix", values=np.asarray(values, dtype=float))

    def value(self, x: np.ndarray, y: np.ndarray) -> float:
        """Evaluate c(x, y) for single points."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if self.kind == "explicit_matrix":
            raise OTUniqError("explicit matrices have no pointwise form")
        d = x - y
        if self.kind == "lp_norm_power":
            return float(_lp_norm(d[None, :], self.q)[0] ** self.p)
        return float(self.profile(np.linalg.norm(d)))

    def matrix(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
        """Full cost matrix for a measure pair (lazy, cached)."""
        if self.kind == "explicit_matrix":
            if self.values.shape != (mu.n, nu.n):
                raise DimensionMismatch(
                    f"cost is {self.values.shape}, measures are {(mu.n, nu.n)}"
                )
            return self.values
        key = (id(mu), id(nu))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        diff = mu.points[:, None, :] - nu.points[None, :, :]
        if self.kind == "lp_norm_power":
            mat = _lp_norm(diff.reshape(-1, mu.dim), self.q).reshape(mu.n, nu.n)
            mat = mat ** self.p
        else:
            dist = np.linalg.norm(diff, axis=2)
            mat = np.asarray(self.profile(dist), dtype=float)
        if np.any(~np.isfinite(mat)) or np.any(mat < -1e-12):
            raise OTUniqError("cost evaluation produced invalid entries")
        mat = _as_readonly(np.maximum(mat, 0.0))
        self._cache[key] = mat
        return mat

    def exact_matrix(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> list:
        """Rational cost matrix for the exact mode (limited kinds)."""
        if self.kind == "explicit_matrix":
            return [[Fraction(v).limit_denominator(10**12) for v in row]
                    for row in self.values]
        if self.kind == "lp_norm_power" and (self.q, self.p) in ((2.0, 2.0), (1.0, 1.0)):
            rows = []
            for x in mu.points:
                fx = [Fraction(c).limit_denominator(10**12) for c in x]
                row = []
                for y in nu.points:
                    fy = [Fraction(c).limit_denominator(10**12) for c in y]
                    if self.q == 2.0:
                        row.append(sum((a - b) ** 2 for a, b in zip(fx, fy)))
                    else:
                        row.append(sum(abs(a - b) for a, b in zip(fx, fy)))
                rows.append(row)
            return rows
        raise OTUniqError(
            "exact mode supports explicit matrices, squared Euclidean, and l1 costs"
        )

    def grad_x(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Analytic gradient of c in its first argument (closed-form kinds)."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        d = x - y
        if self.kind == "lp_norm_power":
            q, p = self.q, self.p
            norm = _lp_norm(d[None, :], q)[0]
            if norm == 0.0:
                return np.zeros_like(d)
            if q == 2.0:
                return p * norm ** (p - 2.0) * d
            if q == 1.0:
                s = float(np.sum(np.abs(d)))
                return p * s ** (p - 1.0) * np.sign(d)
            inner = np.sign(d) * np.abs(d) ** (q - 1.0)
            return p * norm ** (p - q) * inner
        if self.kind == "profile_of_distance":
            r = float(np.linalg.norm(d))
            if r == 0.0:
                return np.zeros_like(d)
            return float(self.profile.derivative(r)) * d / r
        raise OTUniqError("explicit matrices are not differentiable")


def _lp_norm(diff: np.ndarray, q: float) -> np.ndarray:
    if q == 2.0:
        return np.linalg.norm(diff, axis=1)
    if q == 1.0:
        return np.sum(np.abs(diff), axis=1)
    if np.isinf(q):
        return np.max(np.abs(diff), axis=1)
    return np.sum(np.abs(diff) ** q, axis=1) ** (1.0 / q)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse nonnegative coupling of a source and a target measure."""

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=int).ravel()
        cols = np.asarray(self.cols, dtype=int).ravel()
        masses = np.asarray(self.masses, dtype=float).ravel()
        if not (rows.shape == cols.shape == masses.shape):
            raise DimensionMismatch("plan triples have inconsistent lengths")
        keep = masses > 0.0
        rows, cols, masses = rows[keep], cols[keep], masses[keep]
        object.__setattr__(self, "rows", _as_readonly(rows))
        object.__setattr__(self, "cols", _as_readonly(cols))
        object.__setattr__(self, "masses", _as_readonly(masses))
        rs = np.bincount(rows, weights=masses, minlength=self.source.n)
        cs = np.bincount(cols, weights=masses, minlength=self.target.n)
        if (np.max(np.abs(rs - self.source.weights)) > 1e3 * TAU_MASS
                or np.max(np.abs(cs - self.target.weights)) > 1e3 * TAU_MASS):
            raise OTUniqError("plan marginals do not match the measures")

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(v))
                for i, j, v in zip(self.rows, self.cols, self.masses)]

    def to_matrix(self) -> np.ndarray:
        x = np.zeros((self.source.n, self.target.n))
        x[self.rows, self.cols] = self.masses
        return x

    def primal_cost(self, cost_matrix: np.ndarray) -> float:
        return float(np.sum(cost_matrix[self.rows, self.cols] * self.masses))

    def support_pairs(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(self.rows, self.cols)}


@dataclass(frozen=True)
class PotentialPair:
    """Dual values f on the source support and g on the target support."""

    f: np.ndarray
    g: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).ravel()
        g = np.asarray(self.g, dtype=float).ravel()
        if f.shape[0] != self.source.n or g.shape[0] != self.target.n:
            raise DimensionMismatch("potential lengths do not match measures")
        if np.any(np.isnan(f)) or np.any(np.isnan(g)) or np.any(np.isposinf(f)) \
                or np.any(np.isposinf(g)):
            raise OTUniqError("potentials must be finite or -inf")
        object.__setattr__(self, "f", _as_readonly(f))
        object.__setattr__(self, "g", _as_readonly(g))

    @property
    def dual_value(self) -> float:
        """mu f + nu g; -inf values only count where they carry weight."""
        terms_f = np.where(self.source.weights > 0, self.f, 0.0)
        terms_g = np.where(self.target.weights > 0, self.g, 0.0)
        return float(self.source.weights @ np.nan_to_num(terms_f, neginf=NEG_INF)
                     + self.target.weights @ np.nan_to_num(terms_g, neginf=NEG_INF))

    def shifted(self, s: float) -> "PotentialPair":
        return PotentialPair(self.f + s, self.g - s, self.source, self.target)


@dataclass(frozen=True)
class Subdifferential:
    """Pairs where f(x) + g(y) = c(x, y) within the tightness tolerance."""

    tight_pairs: frozenset
    mask: np.ndarray  # boolean (n, m)


def c_transform(values: np.ndarray, cost_matrix: np.ndarray,
                direction: Literal["to_source", "to_target"]) -> np.ndarray:
    """c-transform of dual values across one side of the cost matrix.

    ``to_source``: values live on targets, result on sources
    (f(x) = min_y c(x, y) - g(y)); ``to_target`` is the mirror image.
    Entries equal to -inf are skipped in the minimum.
    """
    values = np.asarray(values, dtype=float).ravel()
    cost_matrix = np.asarray(cost_matrix, dtype=float)
    if np.all(np.isneginf(values)):
        raise AllInfinite("all dual values are -inf")
    if direction == "to_source":
        if values.shape[0] != cost_matrix.shape[1]:
            raise DimensionMismatch("values do not match cost columns")
        with np.errstate(invalid="ignore"):
            diff = cost_matrix - values[None, :]
        diff[:, np.isneginf(values)] = np.inf
        return diff.min(axis=1)
    if direction == "to_target":
        if values.shape[0] != cost_matrix.shape[0]:
            raise DimensionMismatch("values do not match cost rows")
        with np.errstate(invalid="ignore"):
            diff = cost_matrix - values[:, None]
        diff[np.isneginf(values), :] = np.inf
        return diff.min(axis=0)
    raise OTUniqError(f"unknown direction {direction!r}")


def double_transform_residual(f: np.ndarray, cost_matrix: np.ndarray) -> float:
    """max_x |f^cc(x) - f(x)|; zero iff f is c-concave on the support."""
    f = np.asarray(f, dtype=float).ravel()
    g = c_transform(f, cost_matrix, "to_target")
    fcc = c_transform(g, cost_matrix, "to_source")
    both_inf = np.isneginf(f) & np.isneginf(fcc)
    diff = np.where(both_inf, 0.0, np.abs(fcc - f))
    return float(np.max(diff))


def subdifferential_of(pair: PotentialPair, cost_matrix: np.ndarray,
                       tol: Tolerances = DEFAULT_TOLERANCES) -> Subdifferential:
    """All tight pairs of a dual-feasible potential pair."""
    tau = tol.tight(float(np.max(cost_matrix)))
    with np.errstate(invalid="ignore"):
        slack = cost_matrix - pair.f[:, None] - pair.g[None, :]
    slack = np.where(np.isnan(slack), np.inf, slack)
    if np.min(slack) < -tau:
        i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
        raise InfeasiblePair(
            f"f({i}) + g({j}) exceeds c by {-float(slack[i, j]):.3e}"
        )
    mask = np.abs(slack) <= tau
    pairs = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(mask)))
    return Subdifferential(tight_pairs=pairs, mask=mask)


@dataclass(frozen=True)
class DualityReport:
    primal_cost: float
    dual_value: float
    gap: float
    feasible: bool
    support_tight: bool
    optimal: bool
    tolerance: float


def verify_duality(plan: TransportPlan, pair: PotentialPair,
                   cost_matrix: np.ndarray,
                   tol: Tolerances = DEFAULT_TOLERANCES) -> DualityReport:
    """Primal/dual cross-check: gap, feasibility, support tightness."""
    cost_matrix = np.asarray(cost_matrix, dtype=float)
    if cost_matrix.shape != (plan.source.n, plan.target.n):
        raise DimensionMismatch("cost matrix does not match the plan")
    if pair.source.n != plan.source.n or pair.target.n != plan.target.n:
        raise DimensionMismatch("pair does not match the plan's measures")
    primal = plan.primal_cost(cost_matrix)
    dual = pair.dual_value
    gap = primal - dual
    tau_gap = tol.gap * (1.0 + abs(primal))
    try:
        sub = subdifferential_of(pair, cost_matrix, tol)
        feasible = True
        support_tight = bool(np.all(sub.mask[plan.rows, plan.cols]))
    except InfeasiblePair:
        feasible = False
        support_tight = False
    optimal = feasible and support_tight and abs(gap) <= tau_gap
    return DualityReport(primal, dual, gap, feasible, support_tight, optimal,
                         tau_gap)
