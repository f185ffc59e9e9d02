"""Multiplicative estimation of accepted-grid-point counts by telescoping.

The count of gamma5-lattice points a body accepts is estimated as an
analytic base count for the inner ball times a product of stage ratios:
each stage restricts the body to a ball whose radius grows by at most
(1 + 1/d), samples the larger restriction near-uniformly, and counts the
fraction landing in the smaller one (a Hoeffding estimate). Stage bodies
for many levels are sampled in one lockstep batch; estimates and failure
budgets per body are unchanged by the batching.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import MembershipOracle, ball_volume
from .sampler import (
    BatchBody,
    PrecisionBudget,
    batch_sample_lattice,
    round_bodies,
    seed_seq,
)

log = logging.getLogger(__name__)

# Estimated stage ratios outside this window contradict the nesting bound
# N(rho') <= (e + o(1)) N(rho) and flag the run.
RATIO_WINDOW = (0.9, 3.0)


@dataclass
class VolumeEstimate:
    count_estimate: float
    rel_error_target: float
    failure_prob: float
    samples_used: int
    stages: int = 0
    flags: list[str] = field(default_factory=list)


def _ladder(r: float, R: float, d: int) -> np.ndarray:
    """Radii r = rho_0 < ... < rho_M = R with rho_{j+1}/rho_j <= 1 + 1/d."""
    if R <= r * (1.0 + 1e-12):
        return np.array([r])
    M = int(math.ceil(math.log(R / r) / math.log(1.0 + 1.0 / d)))
    return np.concatenate([r * (1.0 + 1.0 / d) ** np.arange(M), [R]])


def _base_count(r: float, d: int, gamma5: float) -> float:
    # (r / gamma5)^d vol(B(0,1)), exact up to e^{+-gamma6 d^{3/2} gamma5 / r}.
    return (r / gamma5) ** d * ball_volume(d, 1.0)


def estimate_grid_counts_batched(
    body: BatchBody,
    budget: PrecisionBudget,
    eps: float,
    gamma: float,
    seed,
) -> list[VolumeEstimate]:
    """One VolumeEstimate per row of ``body``; rows share the sampling
    batch but keep independent per-stage Hoeffding budgets."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = body.dimension
    L = body.n_rows
    ladders = [
        _ladder(float(body.inner_r[k]), float(body.outer_R[k]), d) for k in range(L)
    ]
    M_per = [len(lad) - 1 for lad in ladders]

    # Flat stage rows: one per (level, stage j>=1), body = K ∩ B(c, rho_j).
    stage_level: list[int] = []
    stage_inner: list[float] = []
    stage_outer: list[float] = []
    stage_nsamp: list[int] = []
    for k in range(L):
        M = M_per[k]
        if M == 0:
            continue
        eps_stage = eps / M
        n_s = int(math.ceil((2.0 / eps_stage**2) * math.log(4.0 * M / gamma)))
        for j in range(1, M + 1):
            stage_level.append(k)
            stage_inner.append(float(ladders[k][j - 1]))
            stage_outer.append(float(ladders[k][j]))
            stage_nsamp.append(n_s)

    estimates = [
        VolumeEstimate(
            count_estimate=_base_count(float(body.inner_r[k]), d, budget.gamma5),
            rel_error_target=eps,
            failure_prob=gamma,
            samples_used=0,
            stages=M_per[k],
        )
        for k in range(L)
    ]
    if not stage_level:
        return estimates

    stage_level_arr = np.array(stage_level, dtype=np.int64)
    stage_outer_arr = np.array(stage_outer)

    def accept(pts, rows):
        lev = stage_level_arr[rows]
        ok = body.accept(pts, lev)
        ok &= (
            np.linalg.norm(pts - body.centers[lev], axis=1) <= stage_outer_arr[rows]
        )
        return ok

    stage_body = BatchBody(
        accept,
        body.centers[stage_level_arr],
        body.inner_r[stage_level_arr],
        stage_outer_arr,
        d,
    )

    ss = seed_seq(seed).spawn(2)
    maps = round_bodies(stage_body, budget, ss[0])
    row_ids = np.repeat(np.arange(len(stage_level), dtype=np.int64), stage_nsamp)
    Z = batch_sample_lattice(stage_body, row_ids, budget, ss[1], maps=maps)

    dist = np.linalg.norm(Z - body.centers[stage_level_arr[row_ids]], axis=1)
    inner_hit = dist <= np.array(stage_inner)[row_ids]
    for s in range(len(stage_level)):
        sel = row_ids == s
        n_s = int(sel.sum())
        frac = float(inner_hit[sel].mean())
        k = stage_level[s]
        est = estimates[k]
        est.samples_used += n_s
        if frac <= 0:
            est.flags.append(f"stage {s}: empty inner fraction")
            frac = 1.0 / n_s
        ratio = 1.0 / frac
        if not (RATIO_WINDOW[0] <= ratio <= RATIO_WINDOW[1]):
            est.flags.append(f"stage {s}: ratio {ratio:.3f} outside {RATIO_WINDOW}")
        est.count_estimate *= ratio
    for est in estimates:
        if est.flags:
            log.debug("volume estimate flags: %s", est.flags)
    return estimates


def estimate_grid_count(
    oracle: MembershipOracle,
    budget: PrecisionBudget,
    eps: float,
    gamma: float,
    seed,
) -> VolumeEstimate:
    """Estimate the number of accepted gamma5-lattice points within
    e^{+-O(eps)}, with failure probability gamma."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    body = BatchBody.from_oracle(oracle)
    return estimate_grid_counts_batched(body, budget, eps, gamma, seed)[0]
