"""Pure-DP and approx-DP samplers over any bounded, sensitivity-1,
quasi-convex score oracle.

The pure mechanism draws a randomized score threshold, decomposes the
parameter space into nested score level sets, estimates each level's
lattice count, picks a level with probability proportional to
e^{-eps t} (1 - e^{-eps}) N_t, and returns a near-uniform lattice sample
from it; the telescoping makes each grid point land with probability
proportional to e^{-eps score} up to an e^{+-O(eps)} factor. The approx
variant gates on a staircase reject function and replaces the geometric
level weights with increments of a truncated weight h.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SamplerFailure
from .sampler import (
    GAMMA_FLOOR,
    BatchBody,
    PrecisionBudget,
    batch_sample_lattice,
    round_bodies,
    seed_seq,
)
from .volume import estimate_grid_counts_batched

log = logging.getLogger(__name__)

REJECT = "REJECT"

# Tail levels whose total weight is below this fraction of the retained
# weight are folded into the last retained level (their telescoped sum is
# carried by it exactly when counts stop growing, and is otherwise a
# negligible perturbation of the output law).
_TAIL_FOLD = 1e-8


@dataclass
class PrivacyParams:
    epsilon: float
    n: int
    eta: float
    beta: float = 0.05
    delta: float = 0.0
    eta_star: float | None = None

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0,1)")
        if self.epsilon <= 0 or not 0 <= self.delta < 1 or not 0 < self.beta < 1:
            raise ValueError("bad privacy parameters")
        if self.epsilon * self.n < 1:
            raise ValueError("need epsilon * n >= 1")
        if self.delta > 0:
            if self.eta_star is None:
                self.eta_star = min(1.0, 10.0 * self.eta)
            if not (10.0 * self.eta <= self.eta_star <= 1.0):
                raise ValueError("eta_star must lie in [10 eta, 1]")


@dataclass
class ScoreOracle:
    """Contract the mechanisms need from a score function.

    evaluate(theta, tol) returns the score of theta within additive tol;
    evaluate_batch vectorizes it. low_scorer() returns (theta0, r, T')
    with every point within r of theta0 scoring at most min+1 and
    T' in [min, min+1]. The score must be sensitivity-1 in the dataset,
    quasi-convex in theta, and bounded in [0, n] on the domain, a convex
    subset of B(0, domain_radius).
    """

    evaluate: Callable[[np.ndarray, float], float]
    evaluate_batch: Callable[[np.ndarray, float], np.ndarray]
    low_scorer: Callable[[], tuple[np.ndarray, float, float]]
    n: int
    dimension: int
    domain_radius: float

    def self_check(self, rng=None, trials: int = 64) -> list[str]:
        """Spot checks of quasi-convexity on random segments; returns the
        list of violations found (empty means nothing detected)."""
        rng = rng or np.random.default_rng(0)
        issues = []
        R = self.domain_radius
        for _ in range(trials):
            a = rng.uniform(-R, R, self.dimension) / math.sqrt(self.dimension)
            b = rng.uniform(-R, R, self.dimension) / math.sqrt(self.dimension)
            lam = rng.uniform()
            mid = lam * a + (1 - lam) * b
            sa, sb, sm = (self.evaluate(x, 1e-6) for x in (a, b, mid))
            if sm > max(sa, sb) + 1e-6 + 2e-6:
                issues.append(
                    f"quasi-convexity violated at {a}, {b}, lam={lam:.3f}"
                )
        return issues


@dataclass
class MechanismOutcome:
    result: np.ndarray | str
    score_at_output: float | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return isinstance(self.result, str) and self.result == REJECT


def random_threshold(T_prime: float, gamma7: float, seed) -> float:
    """Uniform multiple of gamma7 in (T'+1, T'+2]."""
    if gamma7 > 1:
        raise ValueError("gamma7 must be at most 1")
    rng = np.random.default_rng(seed_seq(seed))
    j_max = int(math.floor(1.0 / gamma7 + 1e-12))
    j = int(rng.integers(1, j_max + 1))
    return T_prime + 1.0 + j * gamma7


def staircase_g(t: float, params: PrivacyParams) -> float:
    """The four-piece reject-probability staircase.

    1 below 0.3 eta* n; max(1/2, 1 - delta e^{eps(t - 0.3 eta* n)}) up to
    the midpoint; min(1/2, delta e^{eps(0.7 eta* n - t)}) through
    0.7 eta* n inclusive; 0 strictly beyond. Keeping the last lattice
    value at delta (rather than 0) is what lets the e^{+-eps}/delta
    difference inequality hold at the final step.
    """
    es, n, eps, delta = params.eta_star, params.n, params.epsilon, params.delta
    a, b, c = 0.3 * es * n, 0.5 * es * n, 0.7 * es * n
    if t < a:
        return 1.0
    if t < b:
        return max(0.5, 1.0 - delta * math.exp(eps * (t - a)))
    if t <= c:
        return min(0.5, delta * math.exp(eps * (c - t)))
    return 0.0


def truncated_h(t: float, params: PrivacyParams) -> float:
    """e^{-eps t} truncated to zero above 0.9 eta* n."""
    if t > 0.9 * params.eta_star * params.n:
        return 0.0
    return math.exp(-params.epsilon * t)


def _mechanism_gammas(
    params: PrivacyParams, budget: PrecisionBudget, r: float, R: float, d: int
) -> tuple[float, float]:
    eps, n = params.epsilon, params.n
    log_g8 = math.log(eps / 2) - n + d * (math.log(budget.gamma5) - math.log(2 * R))
    gamma8 = max(math.exp(max(log_g8, math.log(GAMMA_FLOOR))), GAMMA_FLOOR)
    log_g7 = (
        math.log(gamma8)
        + d * (math.log(budget.gamma1 * r) - math.log(6 * d))
        - math.log(2.0)
        - d * math.log(2 * R)
    )
    gamma7 = max(math.exp(max(log_g7, math.log(GAMMA_FLOOR))), GAMMA_FLOOR)
    return gamma7, gamma8


def _level_body(
    score: ScoreOracle, thresholds: np.ndarray, theta0: np.ndarray, r: float, tol: float
) -> BatchBody:
    R = score.domain_radius
    th = np.asarray(thresholds, dtype=float)

    def accept(pts, rows):
        pts = np.atleast_2d(pts)
        ok = np.linalg.norm(pts, axis=1) <= R
        est = score.evaluate_batch(pts, tol)
        return ok & (est <= th[rows])

    L = len(th)
    return BatchBody(
        accept,
        np.tile(theta0[None, :], (L, 1)),
        np.full(L, r),
        np.full(L, R),
        score.dimension,
    )


def _level_cut(eps: float, n: int, d: int, R: float, gamma5: float) -> int:
    # Levels past this one carry a weight fraction below _TAIL_FOLD of the
    # total; their telescoped sum is folded into the last retained level.
    grid_points = d * math.log(2 * R / gamma5 + 1.0)
    return max(1, int(math.ceil((grid_points + math.log(1.0 / _TAIL_FOLD)) / eps)))


def _weighted_level_sample(
    score: ScoreOracle,
    params: PrivacyParams,
    budget: PrecisionBudget,
    seed,
    level_weight,  # (t, counts) -> weight array over levels
) -> MechanismOutcome:
    d, R = score.dimension, score.domain_radius
    theta0, r0, T_prime = score.low_scorer()
    theta0 = np.asarray(theta0, dtype=float)
    r0 = min(r0, R - float(np.linalg.norm(theta0)))
    if r0 <= 0:
        raise SamplerFailure("low scorer ball escapes the domain")
    ss = seed_seq(seed).spawn(5)
    gamma7, gamma8 = _mechanism_gammas(params, budget, r0, R, d)
    T_hat = random_threshold(T_prime, gamma7, ss[0])

    t_cut = min(params.n, _level_cut(params.epsilon, params.n, d, R, budget.gamma5))
    levels = np.arange(t_cut + 1)
    thresholds = T_hat + levels
    body = _level_body(score, thresholds, theta0, r0, gamma7)
    maps = round_bodies(body, budget, ss[1])
    ests = estimate_grid_counts_batched(body, budget, params.epsilon, gamma8, ss[2])
    counts = np.array([e.count_estimate for e in ests])

    weights = level_weight(levels, counts, T_hat)
    total = float(weights.sum())
    if total <= 0:
        raise SamplerFailure("all level weights vanished")
    rng = np.random.default_rng(ss[3])
    t_star = int(rng.choice(levels, p=weights / total))
    z = batch_sample_lattice(
        body,
        np.full(1, t_star, dtype=np.int64),
        budget,
        ss[4],
        maps=maps,
    )[0]
    out_score = score.evaluate(z, gamma7)
    return MechanismOutcome(
        result=z,
        score_at_output=out_score,
        diagnostics={
            "level": t_star,
            "T_hat": T_hat,
            "T_prime": T_prime,
            "level_counts": counts.tolist(),
            "level_weights": (weights / total).tolist(),
            "t_cut": t_cut,
            "samples_used": int(sum(e.samples_used for e in ests)),
            "flags": [f for e in ests for f in e.flags],
        },
    )


def pure_dp_sample(
    score: ScoreOracle, params: PrivacyParams, budget: PrecisionBudget, seed
) -> MechanismOutcome:
    """Sample theta from the gamma5-grid of the domain with probability
    proportional to e^{-eps score(theta)} times an e^{+-O(eps)} factor."""
    eps = params.epsilon

    def weight(levels, counts, T_hat):
        w = np.exp(-eps * levels) * (1.0 - math.exp(-eps)) * counts
        # Fold the telescoped tail beyond the last retained level into it.
        w[-1] = math.exp(-eps * levels[-1]) * counts[-1]
        return w

    return _weighted_level_sample(score, params, budget, seed, weight)


def approx_dp_sample(
    score: ScoreOracle, params: PrivacyParams, budget: PrecisionBudget, seed
) -> MechanismOutcome:
    """Two-phase approx-DP mechanism: reject with probability 1 - g(T_hat),
    then sample with level weights given by increments of the truncated h."""
    if params.delta <= 0:
        raise ValueError("approx-DP mechanism needs delta > 0")
    if params.n < math.log(1 / params.delta) + math.log(1 / params.beta):
        raise ValueError("need n >= log(1/delta) + log(1/beta)")
    ss = seed_seq(seed).spawn(2)
    theta0, r0, T_prime = score.low_scorer()
    g = staircase_g(T_prime, params)
    rng = np.random.default_rng(ss[0])
    if rng.uniform() > g:
        return MechanismOutcome(
            result=REJECT,
            score_at_output=None,
            diagnostics={"T_prime": T_prime, "g": g, "phase": 1},
        )

    def weight(levels, counts, T_hat):
        h_now = np.array([truncated_h(T_hat + t, params) for t in levels])
        h_next = np.array([truncated_h(T_hat + t + 1, params) for t in levels])
        w = (h_now - h_next) * counts
        w[-1] = h_now[-1] * counts[-1]
        return w

    out = _weighted_level_sample(score, params, budget, ss[1], weight)
    out.diagnostics["g"] = g
    out.diagnostics["phase"] = 2
    return out


def privacy_audit(
    run: Callable[[np.ndarray, int], MechanismOutcome],
    Y: np.ndarray,
    Y_prime: np.ndarray,
    trials: int,
    bounds: tuple[float, float],
    bins_per_axis: int = 32,
    seed: int = 0,
    eps_design: float | None = None,
    outcomes: tuple[list, list] | None = None,
) -> dict:
    """Empirical lower-bound audit of a mechanism on neighboring datasets.

    Runs the mechanism ``trials`` times on each dataset (or consumes
    precomputed ``outcomes``), histograms the outputs over shared uniform
    bins plus a REJECT bin, and reports the max absolute log-ratio with
    add-one smoothing together with the residual mass above e^{eps} when a
    design epsilon is supplied.
    """
    if trials < 10**3 and outcomes is None:
        raise ValueError("audit needs at least 1000 trials")
    lo, hi = bounds
    if outcomes is None:
        ss = seed_seq(seed).spawn(2 * trials)
        outs1 = [run(Y, ss[2 * i]) for i in range(trials)]
        outs2 = [run(Y_prime, ss[2 * i + 1]) for i in range(trials)]
    else:
        outs1, outs2 = outcomes
        trials = len(outs1)

    def histo(outs):
        counts = np.zeros(bins_per_axis + 1)  # last bin: REJECT
        for o in outs:
            if o.rejected:
                counts[-1] += 1
            else:
                x = float(np.atleast_1d(o.result)[0])
                b = int((x - lo) / (hi - lo) * bins_per_axis)
                counts[min(max(b, 0), bins_per_axis - 1)] += 1
        return counts

    c1, c2 = histo(outs1), histo(outs2)
    n1, n2 = c1.sum(), c2.sum()
    p1 = (c1 + 1.0) / (n1 + len(c1))
    p2 = (c2 + 1.0) / (n2 + len(c2))
    logratio = np.abs(np.log(p1) - np.log(p2))
    report = {
        "eps_hat": float(logratio.max()),
        "argmax_bin": int(np.argmax(logratio)),
        "trials": int(trials),
        "bins": bins_per_axis,
        "max_ratio_bin_counts": (
            float(c1[int(np.argmax(logratio))]),
            float(c2[int(np.argmax(logratio))]),
        ),
    }
    if eps_design is not None:
        resid = np.maximum(p1 - math.exp(eps_design) * p2, 0.0).sum()
        resid = max(resid, np.maximum(p2 - math.exp(eps_design) * p1, 0.0).sum())
        report["delta_hat_at_eps"] = float(resid)
        report["eps_design"] = eps_design
    return report
