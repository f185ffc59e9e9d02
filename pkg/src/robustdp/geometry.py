"""Shared geometric primitives: lattice grids, weak membership oracles,
analytic ball volumes, and brute-force lattice counters used by tests.

A membership oracle answers YES on all of an inner convex body K1 and NO
outside an outer convex body K2; answers in the gap K2 \\ K1 are arbitrary
but deterministic. All algorithms downstream only rely on this weak
contract plus the recorded inner ball (center, radius) and outer radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BudgetExceeded

# Hard cap on lattice points a brute-force counter may visit.
_COUNT_BUDGET = 10**8
_AXIS_BUDGET = 10**6


@dataclass(frozen=True)
class GridSpec:
    """An axis-aligned lattice: points whose coordinates are integer
    multiples of ``spacing`` in ``dimension`` dimensions."""

    spacing: float
    dimension: int

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")


@dataclass
class MembershipOracle:
    """A (K1, K2)-membership oracle over R^d.

    ``query`` must answer YES on every point of K1 and NO on every point
    outside K2, for some convex K1 subseteq K2 with
    B(inner_center, inner_radius) subseteq K1 subseteq K2 subseteq B(0, outer_radius).
    Repeated queries on the same point must agree, and queries must be safe
    to issue concurrently (read-only).
    """

    query: Callable[[np.ndarray], bool]
    inner_radius: float
    outer_radius: float
    inner_center: np.ndarray
    dimension: int
    query_batch: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "oracle"

    def __post_init__(self):
        self.inner_center = np.atleast_1d(np.asarray(self.inner_center, dtype=float))
        if self.query_batch is None:
            q = self.query
            self.query_batch = lambda pts: np.array(
                [bool(q(p)) for p in np.atleast_2d(pts)], dtype=bool
            )

    def accepts(self, point: np.ndarray) -> bool:
        return bool(self.query(np.asarray(point, dtype=float)))


@dataclass
class BodyVolume:
    """A volume figure together with the relative error its producer claims."""

    value: float
    relative_error: float = 0.0

    def __post_init__(self):
        if self.value < 0 or self.relative_error < 0:
            raise ValueError("volume and relative error must be nonnegative")


def ball_oracle(center, radius: float, outer_radius: float | None = None,
                strict: bool = False) -> MembershipOracle:
    """Exact membership oracle for a Euclidean ball (K1 = K2)."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = c.size
    R = outer_radius if outer_radius is not None else float(np.linalg.norm(c) + radius)
    if strict:
        def batch(pts):
            pts = np.atleast_2d(pts)
            return np.linalg.norm(pts - c, axis=1) < radius
    else:
        def batch(pts):
            pts = np.atleast_2d(pts)
            return np.linalg.norm(pts - c, axis=1) <= radius
    return MembershipOracle(
        query=lambda p: bool(batch(p[None, :])[0]),
        inner_radius=radius * (1 - 1e-12 if strict else 1.0),
        outer_radius=R,
        inner_center=c,
        dimension=d,
        query_batch=batch,
        name=f"ball(r={radius})",
    )


def box_oracle(lo, hi, outer_radius: float | None = None) -> MembershipOracle:
    """Exact membership oracle for an axis-aligned box [lo, hi]."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    center = (lo + hi) / 2.0
    r = float(np.min(hi - lo) / 2.0)
    R = outer_radius if outer_radius is not None else float(
        np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)))
    )

    def batch(pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    return MembershipOracle(
        query=lambda p: bool(batch(p[None, :])[0]),
        inner_radius=r,
        outer_radius=R,
        inner_center=center,
        dimension=lo.size,
        query_batch=batch,
        name="box",
    )


def grid_round(point: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Round each coordinate to the nearest multiple of the grid spacing.

    Ties go toward +infinity, so the result is platform independent.
    """
    p = np.asarray(point, dtype=float)
    g = grid.spacing
    return np.floor(p / g + 0.5) * g


def ball_volume(d: int, radius: float) -> float:
    """Volume of a d-dimensional Euclidean ball: pi^{d/2} r^d / Gamma(d/2 + 1)."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return math.pi ** (d / 2.0) * radius**d / math.gamma(d / 2.0 + 1.0)


def lattice_count_bruteforce(oracle: MembershipOracle, grid: GridSpec) -> int:
    """Exactly count grid points accepted by the oracle.

    Test-only helper: enumerates the full lattice inside the bounding box
    [-R, R]^d, so it is guarded against blow-up and intended for d <= 3.
    """
    g = grid.spacing
    d = grid.dimension
    R = oracle.outer_radius
    per_axis = int(math.floor(R / g)) - int(math.ceil(-R / g)) + 1
    if per_axis > _AXIS_BUDGET:
        raise BudgetExceeded(f"{per_axis} lattice points on one axis")
    if per_axis**d > _COUNT_BUDGET:
        raise BudgetExceeded(f"{per_axis ** d} lattice points in the bounding box")

    axis = np.arange(int(math.ceil(-R / g)), int(math.floor(R / g)) + 1, dtype=np.int64)
    coords = axis * g
    count = 0
    if d == 1:
        count = int(np.sum(oracle.query_batch(coords[:, None])))
    else:
        # Chunk over the first axis to bound memory.
        rest = np.meshgrid(*([coords] * (d - 1)), indexing="ij")
        rest = np.stack([r.ravel() for r in rest], axis=1)
        for x0 in coords:
            pts = np.empty((rest.shape[0], d))
            pts[:, 0] = x0
            pts[:, 1:] = rest
            count += int(np.sum(oracle.query_batch(pts)))
    return count
