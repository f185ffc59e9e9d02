"""Hit-and-run sampling from convex bodies behind weak membership oracles.

The pipeline follows a fixed precision cascade: chains walk on a gamma1
step grid, isotropic rounding places the body between balls of radius 1
and 2d^3, and a final perturb-round-reject stage turns a nearly uniform
chain point into a sample that is pointwise (1 +- gamma6)-uniform over the
accepted gamma5-lattice points.

Chains for independent samples run in lockstep as numpy batches; that is
purely an implementation detail, each chain evolves exactly as the scalar
API describes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    IterationLimit,
    NotInBody,
    RejectionBudgetExceeded,
    Unbounded,
)
from .geometry import GridSpec, MembershipOracle, grid_round

log = logging.getLogger(__name__)

# Floating point floor for the exponentially small precision parameters.
GAMMA_FLOOR = 2.0**-60


def seed_seq(seed) -> np.random.SeedSequence:
    """Normalize ints, SeedSequences, and Generators into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass
class PrecisionBudget:
    """The gamma cascade driving chain precision and output granularity.

    ``from_radii`` derives all six parameters from (r, R, d, gamma6) the
    way the sampling analysis does; tests may construct budgets directly
    with coarser grids, which trades the pointwise guarantee for speed.
    The paper's regime is gamma6 <= d^-100; the implementation accepts
    gamma6 <= 1e-2 and floors the exponentially small parameters at 2^-60
    (double precision cannot represent the full cascade).
    """

    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float
    gamma5: float
    gamma6: float
    mixing_constant: float = 1.0
    mixing_steps: int | None = None

    @classmethod
    def from_radii(
        cls,
        r: float,
        R: float,
        d: int,
        gamma6: float = 1e-2,
        mixing_constant: float = 1.0,
        mixing_steps: int | None = None,
    ) -> "PrecisionBudget":
        if gamma6 > 1e-2:
            raise ValueError("gamma6 must be at most 1e-2")
        gamma4 = r / d**2
        gamma5 = gamma4 * gamma6 / d
        gamma2 = gamma5 * gamma6 / d**2
        log_gamma3 = d * (math.log(gamma5) - math.log(2 * R)) + math.log(gamma6 / d)
        gamma3 = max(math.exp(max(log_gamma3, math.log(GAMMA_FLOOR))), GAMMA_FLOOR)
        # gamma1 from the coupling argument: min(gamma2/(2Dm),
        # gamma*(tau/2)^m/(mD), (tau/2)^{m+1}/(4Dm)) with m and tau as in
        # the mixing proof; the (tau/2)^m terms underflow double precision,
        # so the 2^-60 floor is always the binding value in practice.
        D = 2.0 * d**3
        gamma = gamma3 / 8.0
        m = max(1, math.ceil(d * d * D * D * math.log(1.0 / gamma)))
        tau = gamma / (m * m)
        log_terms = [
            math.log(gamma2) - math.log(2 * D * m),
            math.log(gamma) + m * math.log(tau / 2) - math.log(m * D),
            (m + 1) * math.log(tau / 2) - math.log(4 * D * m),
        ]
        gamma1 = max(math.exp(max(min(log_terms), math.log(GAMMA_FLOOR))), GAMMA_FLOOR)
        return cls(gamma1, gamma2, gamma3, gamma4, gamma5, gamma6,
                   mixing_constant, mixing_steps)

    def steps(self, d: int) -> int:
        """Chain length m >= C d^2 D^2 log(1/gamma3), D = 2d^3 after rounding.

        The worst-case constant C = 1 may be overridden; statistical
        acceptance tests gate the resulting mixing quality.
        """
        if self.mixing_steps is not None:
            return max(1, int(self.mixing_steps))
        D = 2.0 * d**3
        m = self.mixing_constant * d * d * D * D * math.log(1.0 / self.gamma3)
        return max(16, int(math.ceil(m)))


@dataclass
class AffineMap:
    """y = matrix @ x + offset, with the condition number recorded."""

    matrix: np.ndarray
    offset: np.ndarray
    condition: float = 1.0
    iterations: int = 0

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.matrix.T + self.offset

    def invert(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim == 1:
            return np.linalg.solve(self.matrix, y - self.offset)
        return np.linalg.solve(self.matrix, (y - self.offset).T).T

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.eye(d), np.zeros(d))


# ---------------------------------------------------------------------------
# Batched body abstraction
# ---------------------------------------------------------------------------


class BatchBody:
    """A family of convex bodies indexed by row, queried in batches.

    ``accept(points, rows)`` evaluates each point against its row's body.
    A plain MembershipOracle wraps into a one-row family.
    """

    def __init__(self, accept, centers, inner_r, outer_R, dimension):
        self._accept = accept
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.inner_r = np.atleast_1d(np.asarray(inner_r, dtype=float))
        self.outer_R = np.atleast_1d(np.asarray(outer_R, dtype=float))
        self.dimension = dimension
        self.n_rows = self.centers.shape[0]

    def accept(self, pts: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self._accept(pts, rows)

    @classmethod
    def from_oracle(cls, oracle: MembershipOracle) -> "BatchBody":
        def accept(pts, rows):
            return oracle.query_batch(pts)

        return cls(
            accept,
            oracle.inner_center[None, :],
            [oracle.inner_radius],
            [oracle.outer_radius],
            oracle.dimension,
        )


class _TransformedBody:
    """Row-wise affine reparametrization of a BatchBody (chain side)."""

    def __init__(self, body: BatchBody, maps: list[AffineMap]):
        self.body = body
        self.mats = np.stack([m.matrix for m in maps])
        self.invs = np.stack([np.linalg.inv(m.matrix) for m in maps])
        self.offs = np.stack([m.offset for m in maps])

    def to_original(self, pts: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return np.einsum("rij,rj->ri", self.invs[rows], pts - self.offs[rows])

    def accept(self, pts: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self.body.accept(self.to_original(pts, rows), rows)


# ---------------------------------------------------------------------------
# Chord search
# ---------------------------------------------------------------------------


def _batch_endpoints(accept, X, V, step, rows, t_cap):
    """Largest t >= 0 (integer multiples of step) with X + t*step*V accepted,
    assuming X itself is accepted. Vectorized gallop plus bisection."""
    B = X.shape[0]
    hi = np.ones(B)
    active = accept(X + step * hi[:, None] * V, rows)
    hi[~active] = 1.0  # first step already rejected; endpoint is 0
    lo = np.where(active, 1.0, 0.0)
    growing = active.copy()
    while np.any(growing):
        idx = np.nonzero(growing)[0]
        hi[idx] *= 2.0
        over = hi[idx] > t_cap[idx]
        probe = accept(X[idx] + step * hi[idx][:, None] * V[idx], rows[idx])
        still = probe & ~over
        lo[idx[probe]] = hi[idx[probe]]
        if np.any(probe & over):
            raise Unbounded("oracle accepts beyond its outer radius")
        growing[:] = False
        growing[idx[still]] = True
    # now lo accepted, hi rejected (or hi == 1 rejected with lo == 0).
    # Bisection stops at integer resolution where float64 can express it;
    # past 2^52 the index grid is below double precision (the clipped
    # arithmetic regime) and the relative tolerance takes over.
    for _ in range(128):
        tol = np.maximum(1.0, (np.abs(hi) + np.abs(lo)) * 2.0**-50)
        open_rows = (hi - lo) > tol
        if not np.any(open_rows):
            break
        mid = np.floor((lo + hi) / 2.0)
        idx = np.nonzero(open_rows)[0]
        ok = accept(X[idx] + step * mid[idx][:, None] * V[idx], rows[idx])
        lo[idx[ok]] = mid[idx[ok]]
        hi[idx[~ok]] = mid[idx[~ok]]
    return lo


def chord_endpoints(
    oracle: MembershipOracle, x: np.ndarray, v: np.ndarray, step: float
) -> tuple[int, int]:
    """Find (a1, a2) with the oracle accepting x + a1*step*v and
    x - a2*step*v but rejecting one more step out on either side."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if step <= 0:
        raise ValueError("step must be positive")
    if not oracle.accepts(x):
        raise NotInBody("chord search started outside the body")
    body = BatchBody.from_oracle(oracle)
    X = np.stack([x, x])
    V = np.stack([v, -v])
    rows = np.zeros(2, dtype=np.int64)
    vnorm = max(float(np.linalg.norm(v)), 1e-300)
    t_cap = np.full(2, math.ceil(2 * oracle.outer_radius / (step * vnorm)) + 2.0)
    t = _batch_endpoints(lambda p, r: body.accept(p, r), X, V, step, rows, t_cap)
    return int(t[0]), int(t[1])


def _batch_chain_steps(accept, X, rows, m, gamma1, outer_R, rng):
    """Advance all chains m hit-and-run steps in lockstep.

    Chain states stay oracle-accepted: a proposed point the oracle rejects
    (possible only inside the K2 \\ K1 gap) is re-drawn along the same
    chord a few times, then the chain stays put for that step. The gap has
    negligible volume under the sampling preconditions, so this matches
    the nominal walk.
    """
    B, d = X.shape
    t_cap = np.ceil(2 * outer_R[rows] / gamma1) + 2.0
    rejected_proposals = 0
    for _ in range(m):
        V = rng.standard_normal((B, d))
        V /= np.maximum(np.linalg.norm(V, axis=1, keepdims=True), 1e-300)
        if gamma1 >= 2.0**-40:
            V = np.round(V / gamma1) * gamma1
            norms = np.linalg.norm(V, axis=1, keepdims=True)
            V = np.where(norms > 0, V, 1.0)  # degenerate rounding fallback
        t1 = _batch_endpoints(accept, X, V, gamma1, rows, t_cap)
        t2 = _batch_endpoints(accept, X, -V, gamma1, rows, t_cap)
        a = np.floor(rng.uniform(-t2, t1 + 1.0))
        a = np.clip(a, -t2, t1)
        cand = X + gamma1 * a[:, None] * V
        ok = accept(cand, rows)
        for _retry in range(8):
            if np.all(ok):
                break
            bad = ~ok
            rejected_proposals += int(bad.sum())
            a_bad = np.floor(rng.uniform(-t2[bad], t1[bad] + 1.0))
            cand[bad] = X[bad] + gamma1 * a_bad[:, None] * V[bad]
            ok[bad] = accept(cand[bad], rows[bad])
        X = np.where(ok[:, None], cand, X)
    if rejected_proposals:
        log.debug("chain proposals rejected in oracle gap: %d", rejected_proposals)
    return X


def hit_and_run_chain(
    oracle: MembershipOracle,
    start: np.ndarray,
    m: int,
    budget: PrecisionBudget,
    seed,
) -> np.ndarray:
    """Run m hit-and-run steps with gamma1 precision from ``start``.

    Each step draws a random unit direction, rounds it to the gamma1 grid,
    finds the chord through the current point by binary search, and jumps
    to a uniform gamma1-multiple along the chord.
    """
    start = np.asarray(start, dtype=float)
    if not oracle.accepts(start):
        raise NotInBody("chain start rejected by the oracle")
    if m == 0:
        return start.copy()
    rng = np.random.default_rng(seed)
    body = BatchBody.from_oracle(oracle)
    X = start[None, :].copy()
    rows = np.zeros(1, dtype=np.int64)
    X = _batch_chain_steps(
        lambda p, r: body.accept(p, r), X, rows, m, budget.gamma1, body.outer_R, rng
    )
    return X[0]


# ---------------------------------------------------------------------------
# Isotropic rounding
# ---------------------------------------------------------------------------


def _interval_endpoints(accept_line, lo_guess: float, hi_cap: float) -> float:
    """1-d boundary location by gallop and bisection on t >= 0."""
    t = max(lo_guess, 1e-9)
    if not accept_line(0.0):
        return 0.0
    while t <= hi_cap and accept_line(t):
        t *= 2.0
    hi = min(t, hi_cap * 2.0)
    lo = t / 2.0 if t > max(lo_guess, 1e-9) else 0.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if accept_line(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _round_1d(oracle_accept, center: float, r: float, R: float) -> AffineMap:
    def acc_pos(t):
        return bool(oracle_accept(np.array([[center + t]]))[0])

    def acc_neg(t):
        return bool(oracle_accept(np.array([[center - t]]))[0])

    hi = center + _interval_endpoints(acc_pos, r / 2, 4 * R)
    lo = center - _interval_endpoints(acc_neg, r / 2, 4 * R)
    mid = (lo + hi) / 2.0
    s = max((hi - lo) / 2.0 * 0.99, 1e-300)
    return AffineMap(
        np.array([[1.0 / s]]), np.array([-mid / s]), condition=(hi - lo) / (2 * s)
    )


def isotropic_round(
    oracle: MembershipOracle, budget: PrecisionBudget, seed
) -> AffineMap:
    """Affine map A with B(0,1) inside A(K1) inside B(0, 2d^3).

    Alternates sampling from the current transformed body with either
    growing the inner ellipsoid (when a sample lands beyond 25d) or
    re-estimating the covariance and renormalizing; the final map is
    verified by probing chords in every coordinate direction plus random
    ones. In one dimension the interval endpoints are located directly.
    """
    d = oracle.dimension
    c = oracle.inner_center
    r, R = oracle.inner_radius, oracle.outer_radius
    if d == 1:
        amap = _round_1d(oracle.query_batch, float(c[0]), r, R)
        amap.iterations = 1
        return amap

    D = 2.0 * d**3
    rng = np.random.default_rng(seed)
    M = np.eye(d) / r
    b = -M @ c
    cap = max(16, math.ceil(10 * d * math.log(max(R / r, 2.0))))
    n_samples = max(32, 16 * d)
    m_steps = budget.mixing_steps or max(32, 16 * d)

    probe_dirs = np.concatenate([np.eye(d), -np.eye(d)], axis=0)

    for it in range(1, cap + 1):
        Minv = np.linalg.inv(M)

        def accept_t(pts, rows):
            orig = pts @ Minv.T - (Minv @ b)[None, :]
            inside = np.linalg.norm(pts, axis=1) <= D
            return inside & oracle.query_batch(orig)

        start = np.tile((M @ c + b)[None, :], (n_samples, 1))
        rows = np.zeros(n_samples, dtype=np.int64)
        pts = _batch_chain_steps(
            accept_t, start, rows, m_steps, budget.gamma1, np.full(1, D), rng
        )
        norms = np.linalg.norm(pts, axis=1)
        far = norms >= 25.0 * d
        if np.any(far):
            y = pts[int(np.argmax(norms))]
            yhat = y / np.linalg.norm(y)
            # Ellipse inside hull(B(0,1), y): center 10*yhat, semiaxis 10
            # along yhat and (1 - 1/d) across. New map sends it to B(0,1).
            Q = np.linalg.qr(
                np.concatenate([yhat[:, None], rng.standard_normal((d, d - 1))], axis=1)
            )[0]
            scales = np.full(d, 1.0 - 1.0 / d)
            scales[0] = 10.0
            Mell_inv = Q @ np.diag(1.0 / scales) @ Q.T
            shift = 10.0 * yhat
            M = Mell_inv @ M
            b = Mell_inv @ (b - shift)
            continue
        mu = pts.mean(axis=0)
        cov = np.cov(pts.T) + 0.25 * np.eye(d)
        evals, evecs = np.linalg.eigh(cov)
        W = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, 1e-12))) @ evecs.T
        Mc = W @ M
        bc = W @ (b - mu)

        # Probe the candidate map: chord extents through the image of the
        # inner center along axes and random directions.
        Mc_inv = np.linalg.inv(Mc)

        def acc_c(pts2, rows2):
            orig = pts2 @ Mc_inv.T - (Mc_inv @ bc)[None, :]
            return oracle.query_batch(orig)

        p0 = Mc @ c + bc
        dirs = np.concatenate(
            [probe_dirs, rng.standard_normal((4 * d, d))], axis=0
        )
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        exts = np.empty(len(dirs))
        for i, u in enumerate(dirs):
            exts[i] = _interval_endpoints(
                lambda t, u=u: bool(acc_c(p0[None, :] + t * u[None, :], None)[0]),
                0.1,
                1e9,
            )
        emin, emax = float(exts.min()), float(exts.max())
        if emin <= 0:
            continue
        if emax / emin <= D / 1.05:
            # Recenter at the probe point and scale the smallest extent
            # just past 1 so B(0,1) sits inside the image.
            scale = 1.02 / emin
            amap = AffineMap(
                scale * Mc, scale * (bc - p0), condition=emax / emin, iterations=it
            )
            return amap
        M, b = Mc, bc
    raise IterationLimit("isotropic rounding did not converge; oracle contract suspect")


def _batch_round_1d(body: BatchBody, budget: PrecisionBudget) -> list[AffineMap]:
    """Exact interval rounding for every row of a 1-d family at once."""
    K = body.n_rows
    rows = np.arange(K, dtype=np.int64)
    c = body.centers[:, 0]
    maps: list[AffineMap] = []
    ends = np.empty((2, K))
    cap = 4.0 * body.outer_R
    for side, sign in enumerate((1.0, -1.0)):
        t = np.maximum(body.inner_r / 2.0, 1e-9)
        lo = np.zeros(K)
        hi = np.zeros(K)
        active = np.ones(K, dtype=bool)
        while np.any(active):
            idx = np.nonzero(active)[0]
            pts = (c[idx] + sign * t[idx])[:, None]
            ok = body.accept(pts, rows[idx]) & (t[idx] <= cap[idx])
            lo[idx[ok]] = t[idx[ok]]
            hi[idx[~ok]] = t[idx[~ok]]
            t[idx[ok]] *= 2.0
            active[:] = False
            active[idx[ok]] = True
        for _ in range(70):
            mid = (lo + hi) / 2.0
            ok = body.accept((c + sign * mid)[:, None], rows)
            lo[ok] = mid[ok]
            hi[~ok] = mid[~ok]
        ends[side] = lo
    hi_end = c + ends[0]
    lo_end = c - ends[1]
    for k in range(K):
        mid = (lo_end[k] + hi_end[k]) / 2.0
        s = max((hi_end[k] - lo_end[k]) / 2.0 * 0.99, 1e-300)
        maps.append(AffineMap(np.array([[1.0 / s]]), np.array([-mid / s]),
                              condition=(hi_end[k] - lo_end[k]) / (2 * s)))
    return maps


def round_bodies(body: BatchBody, budget: PrecisionBudget, seed) -> list[AffineMap]:
    """Isotropic rounding for every row of a family."""
    if body.dimension == 1:
        return _batch_round_1d(body, budget)
    maps = []
    ss = seed_seq(seed).spawn(body.n_rows)
    for k in range(body.n_rows):
        oracle = MembershipOracle(
            query=lambda p, k=k: bool(body.accept(p[None, :], np.array([k]))[0]),
            inner_radius=float(body.inner_r[k]),
            outer_radius=float(body.outer_R[k]),
            inner_center=body.centers[k],
            dimension=body.dimension,
            query_batch=lambda pts, k=k: body.accept(
                np.atleast_2d(pts), np.full(len(np.atleast_2d(pts)), k, dtype=np.int64)
            ),
        )
        maps.append(isotropic_round(oracle, budget, ss[k]))
    return maps


def batch_sample_lattice(
    body: BatchBody,
    row_ids: np.ndarray,
    budget: PrecisionBudget,
    seed,
    maps: list[AffineMap] | None = None,
) -> np.ndarray:
    """Draw one pointwise-near-uniform lattice sample per requested row.

    Pipeline per sample: hit-and-run on the rounded body, dilation by
    (1 + 1/d) about the row's inner center, per-coordinate uniform noise
    in [-gamma4, gamma4], rounding to the gamma5 grid, and a rejection
    check against the row's oracle; rejected samples restart their chain.
    """
    d = body.dimension
    row_ids = np.asarray(row_ids, dtype=np.int64)
    ss = seed_seq(seed).spawn(2)
    if maps is None:
        maps = round_bodies(body, budget, ss[0])
    rng = np.random.default_rng(ss[1])
    tbody = _TransformedBody(body, maps)
    m = budget.steps(d)
    D_out = np.full(body.n_rows, 2.0 * d**3 * 1.2)
    grid = GridSpec(budget.gamma5, d)
    starts_all = np.einsum("rij,rj->ri", tbody.mats, body.centers) + tbody.offs

    B = len(row_ids)
    out = np.empty((B, d))
    need = np.arange(B)
    retries = max(16, int(math.ceil(2.0 * math.log(1.0 / budget.gamma3))))
    rejections = 0
    for _attempt in range(retries):
        rows = row_ids[need]
        X = _batch_chain_steps(
            tbody.accept, starts_all[rows].copy(), rows, m, budget.gamma1, D_out, rng
        )
        P = tbody.to_original(X, rows)
        centers = body.centers[rows]
        Pd = centers + (1.0 + 1.0 / d) * (P - centers)
        Y = rng.uniform(-budget.gamma4, budget.gamma4, size=P.shape)
        if budget.gamma1 >= 2.0**-40:
            Y = np.round(Y / budget.gamma1) * budget.gamma1
        Z = grid_round(Pd + Y, grid)
        ok = body.accept(Z, rows)
        out[need[ok]] = Z[ok]
        rejections += int((~ok).sum())
        need = need[~ok]
        if need.size == 0:
            log.debug("lattice sampling rejections: %d", rejections)
            return out
    raise RejectionBudgetExceeded(f"{need.size} samples still rejected")


def sample_lattice_uniform(
    oracle: MembershipOracle,
    budget: PrecisionBudget,
    seed,
    amap: AffineMap | None = None,
) -> np.ndarray:
    """One (1 +- gamma6)-pointwise-uniform sample from the accepted
    gamma5-lattice points of the oracle's body."""
    body = BatchBody.from_oracle(oracle)
    z = batch_sample_lattice(
        body, np.zeros(1, dtype=np.int64), budget, seed,
        maps=[amap] if amap is not None else None,
    )
    return z[0]
