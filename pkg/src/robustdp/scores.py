"""Concrete score functions for private estimation.

Two families: exact combinatorial inverse-sensitivity scores for 1-d
robust estimators (median, trimmed mean), and the certifiable-mean score
whose level sets are feasibility regions of an approximate-
pseudoexpectation system over variables {w_i}, {x'_ij}, {M_jk} at degree 6.

For the certifiable-mean score the searcher leans on structured
certificates: point masses that keep a subset of points and re-pin the
rest (the construction behind the volume lower bound), plus convex
mixtures of two such masses to reach intermediate pinned means. Every
certificate the search relies on is validated by the engine's
check_satisfies before it decides a level, so accepted levels are always
genuinely witnessed; the ellipsoid covers systems without such structure.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mechanism import ScoreOracle
from .polynomials import MonomialBasis, Poly, basis_size
from .pseudoexpectation import (
    Constraint,
    ConstraintSystem,
    FunctionalRep,
    Kind,
    check_satisfies,
    compute_score_T,
    mixture,
    point_mass,
)

TAU_FLOOR = 2.0**-60


@dataclass
class Dataset:
    """n points in R^d, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("need an (n, d) array with n >= 1")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("dataset entries must be finite")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def save_csv(self, path) -> None:
        header = ",".join(f"x{j}" for j in range(self.d))
        np.savetxt(path, self.points, delimiter=",", header=header, comments="")

    @classmethod
    def load_csv(cls, path) -> "Dataset":
        pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(pts)


@dataclass
class MeanScoreConfig:
    """Knobs for the certifiable-mean score.

    tau defaults to (n d)^-12 floored at 2^-60; phi defaults to
    alpha / sqrt(d). ellipsoid_budget caps ellipsoid iterations per
    feasibility probe once structured certificates are exhausted (0 means
    certificates decide alone, the desk-scale default).
    """

    alpha: float
    R: float = 10.0
    tau: float | None = None
    phi: float | None = None
    gamma: float = 0.05
    degree: int = 6
    ellipsoid_budget: int = 0

    def resolved(self, n: int, d: int) -> "MeanScoreConfig":
        tau = self.tau if self.tau is not None else max((n * d) ** -12.0, TAU_FLOOR)
        phi = self.phi if self.phi is not None else self.alpha / math.sqrt(d)
        if phi > self.alpha / math.sqrt(d) + 1e-12:
            raise ValueError("phi must be at most alpha / sqrt(d)")
        if self.degree != 6:
            raise ValueError("the mean system is fixed at degree 6")
        return MeanScoreConfig(
            alpha=self.alpha, R=self.R, tau=max(tau, TAU_FLOOR), phi=phi,
            gamma=self.gamma, degree=self.degree,
            ellipsoid_budget=self.ellipsoid_budget,
        )


# ---------------------------------------------------------------------------
# Combinatorial inverse-sensitivity scores (d = 1)
# ---------------------------------------------------------------------------


def _median_index(n: int) -> int:
    return (n - 1) // 2


def median_estimate(y: np.ndarray) -> float:
    return float(np.sort(y)[_median_index(len(y))])


def trimmed_mean_estimate(y: np.ndarray, eta0: float) -> float:
    g = math.ceil(eta0 * len(y))
    ys = np.sort(y)
    core = ys[g : len(y) - g] if len(y) > 2 * g else ys
    return float(core.mean())


def median_score_batch(thetas: np.ndarray, y_sorted: np.ndarray, alpha: float) -> np.ndarray:
    """Min replacements moving the (lower) median within alpha of theta."""
    n = len(y_sorted)
    j0 = _median_index(n)
    a = np.searchsorted(y_sorted, thetas - alpha, side="left")
    b = n - np.searchsorted(y_sorted, thetas + alpha, side="right")
    return np.maximum(0, a - j0) + np.maximum(0, b - (n - 1 - j0))


def _trimmed_windows(y_sorted: np.ndarray, g: int, k: int) -> tuple[float, float]:
    """Interval of trimmed means achievable with k replacements."""
    n = len(y_sorted)
    if k > g or n <= 2 * g:
        return (-math.inf, math.inf)
    hi = float(y_sorted[g + k : n - g + k].mean())
    lo = float(y_sorted[g - k : n - g - k].mean())
    return (lo, hi)


def trimmed_score_batch(
    thetas: np.ndarray, y_sorted: np.ndarray, alpha: float, eta0: float
) -> np.ndarray:
    n = len(y_sorted)
    g = math.ceil(eta0 * n)
    out = np.full(len(np.atleast_1d(thetas)), g + 1, dtype=np.int64)
    th = np.atleast_1d(thetas)
    for k in range(g + 1):
        lo, hi = _trimmed_windows(y_sorted, g, k)
        hit = (th >= lo - alpha) & (th <= hi + alpha) & (out > k)
        out[hit] = k
    return out


def inverse_sensitivity_score(
    theta: float, Y: Dataset, estimator: str = "median", alpha: float = 0.25,
    eta0: float = 0.1,
) -> int:
    """Minimum number of points of Y that must be replaced so the robust
    estimator of the modified dataset lies within alpha of theta."""
    if Y.d != 1:
        raise ValueError("combinatorial scores are 1-d")
    ys = np.sort(Y.points[:, 0])
    if estimator == "median":
        return int(median_score_batch(np.array([theta]), ys, alpha)[0])
    if estimator == "trimmed_mean":
        return int(trimmed_score_batch(np.array([theta]), ys, alpha, eta0)[0])
    raise ValueError(f"unknown estimator {estimator!r}")


def bruteforce_inverse_sensitivity(
    theta: float, Y: Dataset, estimator: str, alpha: float, eta0: float = 0.1
) -> int:
    """Exhaustive oracle for tiny n.

    Tries every replacement subset with values from a closing grid
    (theta, theta +- alpha, data values, far sentinels), leaving one
    replaced value free: the estimator is continuous and monotone in a
    single value, so the free value reaches the whole interval between its
    two sentinel evaluations. The finite grid alone can miss the optimum
    for the trimmed mean (a window completion value need not lie on it).
    """
    y = Y.points[:, 0]
    n = len(y)
    big = float(np.abs(y).max() + abs(theta) + alpha + 1e6)
    values = np.unique(
        np.concatenate([[theta, theta - alpha, theta + alpha, big, -big], y])
    )

    def est(arr):
        return (
            median_estimate(arr)
            if estimator == "median"
            else trimmed_mean_estimate(arr, eta0)
        )

    if abs(est(y) - theta) <= alpha:
        return 0
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            idx = list(idx)
            for vals in itertools.product(values, repeat=k - 1):
                mod = y.copy()
                mod[idx[1:]] = vals
                mod[idx[0]] = -big
                lo = est(mod)
                mod[idx[0]] = big
                hi = est(mod)
                if lo - alpha <= theta <= hi + alpha:
                    return k
    return n


# ---------------------------------------------------------------------------
# Certifiable-mean system construction
# ---------------------------------------------------------------------------


def _mean_var_indices(n: int, d: int) -> tuple[int, range, int]:
    """Variable layout: w_0..w_{n-1}, x'_{ij} (row-major), M_{jk}."""
    return n, range(n, n + n * d), n + n * d


def _xvar(n: int, d: int, i: int, j: int) -> int:
    return n + i * d + j


def _mvar(n: int, d: int, j: int, k: int) -> int:
    return n + n * d + j * d + k


def mean_norm_bound(n: int, d: int, R: float, degree: int = 6) -> float:
    """R' large enough that the keep/re-pin certificates stay inside.

    Point-mass moment vectors have entries up to V^degree for coordinate
    values bounded by V; keep/re-pin masses use values up to about 2nR.
    """
    B = basis_size(n + n * d + d * d, degree)
    vmax = max(2.0, 2.0 * n * R)
    return 2.0 * math.sqrt(B) * vmax**degree


def build_mean_system(
    Y: Dataset, mu_tilde: np.ndarray | None, cfg: MeanScoreConfig
) -> ConstraintSystem:
    """The degree-6 certifiable-mean constraint family Q_T for dataset Y.

    With mu_tilde None the output-pinning box constraints are dropped (the
    low-scorer variant). The keep/re-pin certificate generator is attached
    as the system's witness hint.
    """
    n, d = Y.n, Y.d
    if n > 6 or d > 2:
        raise ValueError("certifiable-mean systems are limited to n <= 6, d <= 2")
    cfg = cfg.resolved(n, d)
    nv = n + n * d + d * d
    basis = MonomialBasis(nv, cfg.degree)
    y = Y.points

    psd: list[Constraint] = []
    regular: list[Constraint] = []

    # 2b: w_i^2 = w_i (two-sided).
    for i in range(n):
        q: Poly = {(i, i): 1.0, (i,): -1.0}
        psd.append(Constraint(Kind.PSD, poly=q, name=f"w_bool_{i}+"))
        psd.append(Constraint(Kind.PSD, poly={m: -c for m, c in q.items()},
                              name=f"w_bool_{i}-"))

    # 2d: w_i (x'_ij - y_ij) = 0 (two-sided).
    for i in range(n):
        for j in range(d):
            xi = _xvar(n, d, i, j)
            q = {tuple(sorted((i, xi))): 1.0, (i,): -float(y[i, j])}
            psd.append(Constraint(Kind.PSD, poly=q, name=f"pin_{i}_{j}+"))
            psd.append(Constraint(Kind.PSD, poly={m: -c for m, c in q.items()},
                                  name=f"pin_{i}_{j}-"))

    # 2e: (1/n) sum (x'-mu')(x'-mu')^T + M M^T = (1+alpha) I entrywise.
    for j in range(d):
        for k in range(j, d):
            q = {}
            for i in range(n):
                xij, xik = _xvar(n, d, i, j), _xvar(n, d, i, k)
                q[tuple(sorted((xij, xik)))] = q.get(tuple(sorted((xij, xik))), 0.0) + 1.0 / n
            for i1 in range(n):
                for i2 in range(n):
                    xij, xik = _xvar(n, d, i1, j), _xvar(n, d, i2, k)
                    key = tuple(sorted((xij, xik)))
                    q[key] = q.get(key, 0.0) - 1.0 / n**2
            for l in range(d):
                mj, mk = _mvar(n, d, j, l), _mvar(n, d, k, l)
                key = tuple(sorted((mj, mk)))
                q[key] = q.get(key, 0.0) + 1.0
            if j == k:
                q[()] = q.get((), 0.0) - (1.0 + cfg.alpha)
            q = {m: c for m, c in q.items() if c != 0.0}
            psd.append(Constraint(Kind.PSD, poly=q, name=f"cov_{j}{k}+"))
            psd.append(Constraint(Kind.PSD, poly={m: -c for m, c in q.items()},
                                  name=f"cov_{j}{k}-"))

    # 3: per-coordinate pinning of L[mu'] to mu_tilde within phi.
    if mu_tilde is not None:
        mu_tilde = np.atleast_1d(np.asarray(mu_tilde, dtype=float))
        for j in range(d):
            mu_poly = {(_xvar(n, d, i, j),): 1.0 / n for i in range(n)}
            lo = dict(mu_poly)
            lo[()] = -float(mu_tilde[j]) + cfg.phi
            hi = {m: -c for m, c in mu_poly.items()}
            hi[()] = float(mu_tilde[j]) + cfg.phi
            regular.append(Constraint(Kind.REGULAR, poly=lo, name=f"out_lo_{j}"))
            regular.append(Constraint(Kind.REGULAR, poly=hi, name=f"out_hi_{j}"))

    # 2c as the T-constraint: (sum w - n + T) / (2n); original slack
    # -5 tau T n becomes -2.5 tau T after the normalization.
    t_base: Poly = {(i,): 1.0 / (2 * n) for i in range(n)}
    t_base[()] = -0.5
    t_con = Constraint(Kind.PSD, poly=t_base, slack_scale=2.5, name="size_T")

    system = ConstraintSystem(
        basis=basis,
        regular=regular,
        psd=psd,
        matrix_psd=[],
        t_constraint=t_con,
        t_max=float(n),
        norm_bound=mean_norm_bound(n, d, cfg.R, cfg.degree),
        tau=cfg.tau,
    )
    system.witness_hint = lambda T: _mean_witnesses(system, Y, mu_tilde, cfg, T)
    return system


def _keep_repin_mass(
    system: ConstraintSystem, Y: Dataset, kept: tuple[int, ...],
    pinned_mean: np.ndarray, alpha: float,
) -> FunctionalRep | None:
    """Point mass keeping ``kept`` at their data values and moving the rest
    to a common value that pins the empirical mean, with M absorbing the
    variance slack; None when the covariance constraint cannot hold."""
    n, d = Y.n, Y.d
    m = np.atleast_1d(pinned_mean)
    k = n - len(kept)
    vals = np.zeros(system.basis.num_vars)
    x = np.empty((n, d))
    for i in kept:
        x[i] = Y.points[i]
        vals[i] = 1.0
    if k > 0:
        repl = (n * m - Y.points[list(kept)].sum(axis=0)) / k
        for i in range(n):
            if i not in kept:
                x[i] = repl
    emp_mean = x.mean(axis=0)
    cov = (x - emp_mean).T @ (x - emp_mean) / n
    slack = (1.0 + alpha) * np.eye(d) - cov
    evals, evecs = np.linalg.eigh((slack + slack.T) / 2.0)
    if evals.min() < -1e-11 * max(1.0, abs(evals).max()):
        return None
    M = evecs @ np.diag(np.sqrt(np.maximum(evals, 0.0))) @ evecs.T
    for i in range(n):
        for j in range(d):
            vals[_xvar(n, d, i, j)] = x[i, j]
    for j in range(d):
        for l in range(d):
            vals[_mvar(n, d, j, l)] = M[j, l]
    return point_mass(system.basis, vals)


def _subset_interval_1d(
    y: np.ndarray, kept: tuple[int, ...], alpha: float, n: int
) -> tuple[float, float] | None:
    """Interval of pinnable means for a kept subset (1-d closed form)."""
    k = n - len(kept)
    bound = n * (1.0 + alpha)
    if k == 0:
        s2 = float(np.sum((y - y.mean()) ** 2))
        return (float(y.mean()), float(y.mean())) if s2 <= bound else None
    if k == n:
        return (-math.inf, math.inf)
    yk = y[list(kept)]
    S1, S2 = float(yk.sum()), float(np.sum(yk**2))
    A = (n - k) * n / k
    Bq = -2.0 * S1 * n / k
    C = S2 + S1 * S1 / k - bound
    disc = Bq * Bq - 4 * A * C
    if disc < 0:
        return None
    root = math.sqrt(disc)
    return ((-Bq - root) / (2 * A), (-Bq + root) / (2 * A))


def _mean_intervals_1d(y: np.ndarray, alpha: float, n: int) -> list[list[tuple]]:
    """For k = 0..n, the list of (lo, hi, kept) pinnable-mean intervals."""
    out: list[list[tuple]] = []
    idx = range(n)
    for k in range(n + 1):
        entries = []
        for kept in itertools.combinations(idx, n - k):
            iv = _subset_interval_1d(y, kept, alpha, n)
            if iv is not None:
                entries.append((iv[0], iv[1], kept))
        out.append(entries)
    return out


def _mean_witnesses(
    system: ConstraintSystem, Y: Dataset, mu_tilde: np.ndarray | None,
    cfg: MeanScoreConfig, T: float,
):
    """Certificate candidates at level T: keep/re-pin masses (and straddle
    mixtures of two) whose pinned mean lands within phi of the target."""
    cfg = cfg.resolved(Y.n, Y.d)
    n, d = Y.n, Y.d
    k_max = min(n, int(math.floor(T + 1e-9)))
    if k_max < 0:
        return
    if d == 1:
        y = Y.points[:, 0]
        per_k = _mean_intervals_1d(y, cfg.alpha, n)
        cap = cfg.R + cfg.phi + 1.0
        target = None if mu_tilde is None else float(np.atleast_1d(mu_tilde)[0])
        for k in range(k_max + 1):
            entries = per_k[k]
            if not entries:
                continue
            if target is None:
                lo, hi, kept = min(entries, key=lambda e: abs((e[0] + e[1]) / 2))
                m = min(max((lo + hi) / 2.0, -cap), cap)
                w = _keep_repin_mass(system, Y, kept, np.array([m]), cfg.alpha)
                if w is not None:
                    yield w
                continue
            # Single-subset reach.
            best = None
            for lo, hi, kept in entries:
                lo_c, hi_c = max(lo, -cap), min(hi, cap)
                if lo_c > hi_c:
                    continue
                m = min(max(target, lo_c), hi_c)
                gap = abs(m - target)
                if best is None or gap < best[0]:
                    best = (gap, m, kept)
            if best is not None and best[0] <= cfg.phi + 1e-12:
                w = _keep_repin_mass(system, Y, best[2], np.array([best[1]]), cfg.alpha)
                if w is not None:
                    yield w
                    continue
            # Straddle mixture of two subsets.
            lo_all = [(e[0], e[2]) for e in entries]
            hi_all = [(e[1], e[2]) for e in entries]
            left = max((h for h in hi_all if h[0] <= target), default=None,
                       key=lambda e: e[0])
            right = min((l for l in lo_all if l[0] >= target), default=None,
                        key=lambda e: e[0])
            if left is None or right is None:
                continue
            m1, m2 = left[0], right[0]
            if m1 < -cap or m2 > cap:
                continue
            w1 = _keep_repin_mass(system, Y, left[1], np.array([m1]), cfg.alpha)
            w2 = _keep_repin_mass(system, Y, right[1], np.array([m2]), cfg.alpha)
            if w1 is None or w2 is None:
                continue
            lam = 0.5 if m2 == m1 else (m2 - target) / (m2 - m1)
            yield mixture([w1, w2], [lam, 1.0 - lam])
    else:
        yield from _mean_witnesses_2d(system, Y, mu_tilde, cfg, k_max)


def _subset_region_2d(y: np.ndarray, kept: tuple[int, ...], alpha: float, n: int):
    """(center, E) with pinnable means = {center + E u : |u| <= 1}, or None."""
    k = n - len(kept)
    bound = n * (1.0 + alpha)
    if k == 0:
        c = y.mean(axis=0)
        cov = (y - c).T @ (y - c)
        return (c, np.zeros((2, 2))) if np.linalg.eigvalsh(cov).max() <= bound else None
    if k == n:
        return (np.zeros(2), None)  # unconstrained
    yk = y[list(kept)]
    c = yk.mean(axis=0)
    Ck = (yk - c).T @ (yk - c)
    A = bound * np.eye(2) - Ck
    evals, evecs = np.linalg.eigh(A)
    if evals.min() <= 0:
        return None
    scale = math.sqrt(k / ((n - k) * n))
    E = evecs @ np.diag(np.sqrt(evals)) @ evecs.T * scale
    return (c, E)


def _mean_witnesses_2d(system, Y, mu_tilde, cfg, k_max):
    n = Y.n
    y = Y.points
    target = None if mu_tilde is None else np.atleast_1d(mu_tilde)
    for k in range(k_max + 1):
        cands = []
        for kept in itertools.combinations(range(n), n - k):
            reg = _subset_region_2d(y, kept, cfg.alpha, n)
            if reg is None:
                continue
            c, E = reg
            if target is None:
                cands.append((0.0, c, kept))
                continue
            if E is None:
                m = target.copy()  # fully re-pinned: any mean reachable
            else:
                u = np.linalg.solve(E + 1e-15 * np.eye(2), target - c)
                nu = np.linalg.norm(u)
                m = c + E @ (u / max(nu, 1.0))
            cands.append((float(np.abs(m - target).max()) if target is not None else 0.0, m, kept))
        if not cands:
            continue
        cands.sort(key=lambda e: e[0])
        gap, m, kept = cands[0]
        if target is not None and gap > cfg.phi + 1e-12:
            # Try a two-subset mixture along the segment between the two
            # closest reachable points.
            if len(cands) >= 2:
                g2, m2, kept2 = cands[1]
                best = None
                for lam in np.linspace(0.0, 1.0, 33):
                    mm = lam * m + (1 - lam) * m2
                    gg = float(np.abs(mm - target).max())
                    if best is None or gg < best[0]:
                        best = (gg, lam)
                if best is not None and best[0] <= cfg.phi + 1e-12:
                    w1 = _keep_repin_mass(system, Y, kept, m, cfg.alpha)
                    w2 = _keep_repin_mass(system, Y, kept2, m2, cfg.alpha)
                    if w1 is not None and w2 is not None:
                        yield mixture([w1, w2], [best[1], 1 - best[1]])
            continue
        w = _keep_repin_mass(system, Y, kept, m, cfg.alpha)
        if w is not None:
            yield w


# ---------------------------------------------------------------------------
# Certifiable-mean score and low scorer
# ---------------------------------------------------------------------------


def sos_mean_score(
    mu_tilde: np.ndarray, Y: Dataset, cfg: MeanScoreConfig, gamma: float | None = None
) -> float:
    """Minimal T (within O(gamma)) at which the certifiable-mean system
    for (mu_tilde, Y) admits a tau-approximately satisfying functional."""
    mu_tilde = np.atleast_1d(np.asarray(mu_tilde, dtype=float))
    if np.linalg.norm(mu_tilde) > cfg.R + 1e-9:
        raise ValueError("target mean outside the parameter domain")
    cfg = cfg.resolved(Y.n, Y.d)
    gamma = gamma if gamma is not None else cfg.gamma
    system = build_mean_system(Y, mu_tilde, cfg)
    return compute_score_T(
        system, gamma=min(gamma / 4.0, system.t_max / 4.0),
        max_iters=cfg.ellipsoid_budget,
    )


def sos_mean_low_scorer(
    Y: Dataset, cfg: MeanScoreConfig, gamma: float | None = None
) -> tuple[np.ndarray, float, float]:
    """(mu_hat, r, T'): center and radius of a box of near-minimal scores.

    Runs the score search without the output-pinning constraints and reads
    the pinned mean off the witness functional."""
    cfg = cfg.resolved(Y.n, Y.d)
    gamma = gamma if gamma is not None else cfg.gamma
    system = build_mean_system(Y, None, cfg)
    t_min = compute_score_T(
        system, gamma=min(gamma / 4.0, system.t_max / 4.0),
        max_iters=cfg.ellipsoid_budget,
    )
    witness = None
    for w in system.witness_hint(t_min + 0.5):
        if check_satisfies(w, system, t_min + 0.5, gamma).satisfied:
            witness = w
            break
    if witness is None:
        raise RuntimeError("no witness at the computed minimal level")
    n, d = Y.n, Y.d
    mu_hat = np.array(
        [
            sum(witness.coords[system.basis.index[(_xvar(n, d, i, j),)]] for i in range(n)) / n
            for j in range(d)
        ]
    )
    return mu_hat, cfg.phi, float(t_min)


# ---------------------------------------------------------------------------
# Score-oracle adapters
# ---------------------------------------------------------------------------


def wrap_as_score_oracle(
    impl: str,
    Y: Dataset,
    alpha: float = 0.25,
    R: float = 10.0,
    eta0: float = 0.1,
    cfg: MeanScoreConfig | None = None,
) -> ScoreOracle:
    """Adapt a score implementation to the mechanism contract.

    impl is one of "median", "trimmed_mean", "sos_mean". Evaluations are
    cached keyed by the grid point, so repeated queries are deterministic
    and cheap.
    """
    n, d = Y.n, Y.d
    cache: dict[bytes, float] = {}

    if impl in ("median", "trimmed_mean"):
        if d != 1:
            raise ValueError("combinatorial scores are 1-d")
        ys = np.sort(Y.points[:, 0])

        def batch(thetas, tol):
            th = np.atleast_2d(thetas)[:, 0]
            if impl == "median":
                return median_score_batch(th, ys, alpha).astype(float)
            return trimmed_score_batch(th, ys, alpha, eta0).astype(float)

        def single(theta, tol):
            return float(batch(np.atleast_1d(theta)[None, :], tol)[0])

        def low():
            t0 = (
                median_estimate(ys) if impl == "median"
                else trimmed_mean_estimate(ys, eta0)
            )
            t0 = min(max(t0, -R + alpha), R - alpha)
            return np.array([t0]), alpha, 0.0

        return ScoreOracle(
            evaluate=single, evaluate_batch=batch, low_scorer=low,
            n=n, dimension=1, domain_radius=R,
        )

    if impl == "sos_mean":
        cfg = (cfg or MeanScoreConfig(alpha=alpha, R=R)).resolved(n, d)

        def single(theta, tol):
            key = np.asarray(theta, dtype=float).tobytes()
            if key not in cache:
                cache[key] = sos_mean_score(theta, Y, cfg, gamma=min(tol, cfg.gamma))
            return cache[key]

        def batch(thetas, tol):
            return np.array([single(t, tol) for t in np.atleast_2d(thetas)])

        def low():
            return sos_mean_low_scorer(Y, cfg)

        return ScoreOracle(
            evaluate=single, evaluate_batch=batch, low_scorer=low,
            n=n, dimension=d, domain_radius=cfg.R,
        )

    raise ValueError(f"unknown implementation {impl!r}")
