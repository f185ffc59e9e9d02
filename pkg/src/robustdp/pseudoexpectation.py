"""Approximate-pseudoexpectation engine.

Linear functionals over a monomial basis are represented by their moment
vectors. A constraint system is a family Q_T of polynomial constraints
(regular, PSD, matrix-PSD, plus a single T-constraint linear in T with
slope 1/(2 T_max)); a functional tau-approximately satisfies Q_T when all
constraints hold with tau*(T+gamma)-scaled slack. Feasible functionals are
searched with an ellipsoid method driven by explicit separating
hyperplanes, and the minimal feasible T is located by binary search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .errors import DegreeOverflow
from .polynomials import (
    Monomial,
    MonomialBasis,
    Poly,
    mono_mul,
    monomial_values,
    poly_degree,
    poly_eval,
    poly_norm2,
    poly_to_vec,
)

# Dense ellipsoid updates become impractical past this basis size.
ELLIPSOID_BASIS_GUARD = 5000
# Default per-search iteration budget; the full 2(B-1)^2 ln(R'/r) bound is
# also enforced, whichever is smaller.
DEFAULT_MAX_ITERS = 20000


class Kind(Enum):
    REGULAR = "regular"
    PSD = "psd"
    MATRIX_PSD = "matrix_psd"


@dataclass
class Constraint:
    kind: Kind
    poly: Poly | None = None
    matrix: list[list[Poly]] | None = None
    slack_scale: float = 1.0
    name: str = ""


@dataclass
class FunctionalRep:
    """Moment vector of a linear functional L; coords[0] = L[1] = 1."""

    coords: np.ndarray
    basis: MonomialBasis

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.shape != (self.basis.size,):
            raise ValueError("coords length must equal the basis size")
        if not math.isclose(self.coords[0], 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("coords[empty] must be 1 (L 1 = 1)")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords must be finite")

    def apply(self, p: Poly) -> float:
        """Evaluate L[p]."""
        idx = self.basis.index
        return float(sum(c * self.coords[idx[m]] for m, c in p.items()))


def point_mass(basis: MonomialBasis, values: np.ndarray) -> FunctionalRep:
    """The expectation functional of a single assignment to all variables."""
    return FunctionalRep(monomial_values(values, basis), basis)


def mixture(funcs: list[FunctionalRep], weights: Iterable[float]) -> FunctionalRep:
    w = np.asarray(list(weights), dtype=float)
    w = w / w.sum()
    coords = sum(wi * f.coords for wi, f in zip(w, funcs))
    return FunctionalRep(coords, funcs[0].basis)


@dataclass
class Verdict:
    satisfied: bool
    hyperplane: np.ndarray | None = None  # non-empty coordinates, length B-1
    offset: float = 0.0  # feasible x satisfy <x, H> >= offset up to tau slack
    constraint: str = ""
    margin: float = 0.0

    @property
    def status(self) -> str:
        return "SATISFIED" if self.satisfied else "SEPARATED"


@dataclass
class InfeasibleBall:
    """Certificate that the feasible set (projected to non-empty coords)
    has volume below that of a ball of this radius. ``certified`` is False
    when the verdict came from an iteration cap short of the full ellipsoid
    bound rather than from volume exhaustion."""

    radius: float
    iterations: int
    certified: bool


@dataclass
class ConstraintSystem:
    """The family Q_T over a fixed monomial basis.

    ``t_constraint`` stores the T-constraint's polynomial at T = 0; the
    effective polynomial at level T adds T/(2 t_max) to the constant
    coefficient, so (q_T - q_T') = (T - T')/(2 t_max) as required.
    """

    basis: MonomialBasis
    regular: list[Constraint] = field(default_factory=list)
    psd: list[Constraint] = field(default_factory=list)
    matrix_psd: list[Constraint] = field(default_factory=list)
    t_constraint: Constraint | None = None
    t_max: float = 1.0
    norm_bound: float = 0.0  # R'
    tau: float = 0.0
    witness_hint: Callable[[float], Iterable[FunctionalRep]] | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.norm_bound <= 0:
            self.norm_bound = (2.0 + 1.0) * self.basis.size
        for c in self.all_psd():
            if c.poly is not None and poly_degree(c.poly) > self.basis.max_degree:
                raise DegreeOverflow(c.name)

    def all_psd(self) -> list[Constraint]:
        return list(self.psd) + ([self.t_constraint] if self.t_constraint else [])

    def t_poly(self, T: float) -> Poly:
        q = dict(self.t_constraint.poly)
        q[()] = q.get((), 0.0) + T / (2.0 * self.t_max)
        return q

    # -- precomputed localizing structure -------------------------------

    def _local_struct(self, q: Poly):
        """Index tensors for X[V,W] = sum_U q_U * RL[U+V+W].

        Keyed by the monomial support of q, so the T-constraint (whose
        constant coefficient varies with T) reuses one structure.
        """
        terms = tuple(sorted(q.keys()))
        key = terms
        if key in self._cache:
            return self._cache[key]
        deg_q = poly_degree(q)
        half = self.basis.half_basis(room=deg_q)
        h = len(half)
        idx = np.empty((len(terms), h, h), dtype=np.int64)
        for t, U in enumerate(terms):
            for i, V in enumerate(half):
                for j in range(i, h):
                    s = self.basis.index[mono_mul(U, mono_mul(V, half[j]))]
                    idx[t, i, j] = s
                    idx[t, j, i] = s
        struct = (terms, idx, half)
        self._cache[key] = struct
        return struct

    def localized_matrix(self, L: FunctionalRep, q: Poly) -> np.ndarray:
        terms, idx, _ = self._local_struct(q)
        coeffs = np.array([q[U] for U in terms])
        return np.einsum("t,tij->ij", coeffs, L.coords[idx])

    def separation_poly_vec(self, q: Poly, c: np.ndarray) -> np.ndarray:
        """Coefficient vector (length B) of q * h^2 for h = <c, half basis>,
        expressed as a linear functional of the moment vector."""
        terms, idx, _ = self._local_struct(q)
        H = np.zeros(self.basis.size)
        cc = np.outer(c, c)
        for t, U in enumerate(terms):
            np.add.at(H, idx[t].ravel(), q[U] * cc.ravel())
        return H

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        def enc_poly(p: Poly):
            return [[list(m), c] for m, c in sorted(p.items())]

        def enc_con(c: Constraint):
            out = {"kind": c.kind.value, "slack_scale": c.slack_scale, "name": c.name}
            if c.poly is not None:
                out["poly"] = enc_poly(c.poly)
            if c.matrix is not None:
                out["matrix"] = [[enc_poly(p) for p in row] for row in c.matrix]
            return out

        doc = {
            "num_vars": self.basis.num_vars,
            "max_degree": self.basis.max_degree,
            "regular": [enc_con(c) for c in self.regular],
            "psd": [enc_con(c) for c in self.psd],
            "matrix_psd": [enc_con(c) for c in self.matrix_psd],
            "t_constraint": enc_con(self.t_constraint) if self.t_constraint else None,
            "t_max": self.t_max,
            "norm_bound": self.norm_bound,
            "tau": self.tau,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConstraintSystem":
        doc = json.loads(text)

        def dec_poly(items) -> Poly:
            return {tuple(m): float(c) for m, c in items}

        def dec_con(d) -> Constraint:
            return Constraint(
                kind=Kind(d["kind"]),
                poly=dec_poly(d["poly"]) if "poly" in d else None,
                matrix=[[dec_poly(p) for p in row] for row in d["matrix"]]
                if "matrix" in d
                else None,
                slack_scale=d["slack_scale"],
                name=d["name"],
            )

        basis = MonomialBasis(doc["num_vars"], doc["max_degree"])
        return cls(
            basis=basis,
            regular=[dec_con(c) for c in doc["regular"]],
            psd=[dec_con(c) for c in doc["psd"]],
            matrix_psd=[dec_con(c) for c in doc["matrix_psd"]],
            t_constraint=dec_con(doc["t_constraint"]) if doc["t_constraint"] else None,
            t_max=doc["t_max"],
            norm_bound=doc["norm_bound"],
            tau=doc["tau"],
        )


def _eig_floor(X: np.ndarray) -> float:
    # Numerical slack for the symmetric eigensolver; scales with the matrix.
    scale = float(np.abs(X).max(initial=0.0))
    return 5e-11 * max(1.0, scale) * max(1, X.shape[0])


def check_satisfies(
    L: FunctionalRep, Q: ConstraintSystem, T: float, gamma: float
) -> Verdict:
    """Decide whether L tau-approximately satisfies Q_T with O(gamma) slack.

    SATISFIED means every condition holds with tau*(T+3*gamma)-level slack
    (per-constraint slack scales applied). SEPARATED returns an explicit
    hyperplane over the non-empty coordinates: the candidate lies strictly
    below ``offset`` while every feasible moment vector lies above it, up
    to tau*(T+gamma) slack.
    """
    tau = Q.tau
    v = L.coords
    worst = math.inf

    def separated(Hfull: np.ndarray, slack: float, name: str) -> Verdict:
        return Verdict(
            satisfied=False,
            hyperplane=Hfull[1:].copy(),
            offset=-slack - Hfull[0],
            constraint=name,
        )

    # Norm bound (condition 6).
    norm_ne = float(np.linalg.norm(v[1:]))
    slack = tau * (T + gamma)
    if norm_ne > Q.norm_bound + slack + 1e-12 * Q.norm_bound:
        # Feasible N have <N, -v_ne> >= -(R' + slack) * |v_ne| while the
        # candidate sits at -|v_ne|^2, strictly below.
        return Verdict(
            satisfied=False,
            hyperplane=-v[1:].copy(),
            offset=-(Q.norm_bound + slack) * norm_ne,
            constraint="norm",
        )
    worst = min(worst, Q.norm_bound + slack - norm_ne)

    # Regular constraints (condition 3).
    for con in Q.regular:
        slack = con.slack_scale * tau * (T + gamma)
        qvec = poly_to_vec(con.poly, Q.basis)
        val = float(qvec @ v)
        if val < -slack - 1e-12 * max(1.0, float(np.abs(qvec).max())):
            return separated(qvec, slack, con.name or "regular")
        worst = min(worst, val + slack)

    # Positivity plus PSD constraints, including the T-constraint
    # (conditions 2 and 4).
    psd_items: list[tuple[Poly, float, str]] = [
        ({(): 1.0}, 1.0, "positivity")
    ]
    for con in Q.psd:
        psd_items.append((con.poly, con.slack_scale, con.name or "psd"))
    if Q.t_constraint is not None:
        psd_items.append(
            (Q.t_poly(T), Q.t_constraint.slack_scale, Q.t_constraint.name or "t")
        )

    for qp, sscale, name in psd_items:
        X = Q.localized_matrix(L, qp)
        floor = _eig_floor(X)
        eigvals, eigvecs = np.linalg.eigh(X)
        accept_at = sscale * tau * (T + 3 * gamma)
        if eigvals[0] >= -accept_at - floor:
            worst = min(worst, eigvals[0] + accept_at + floor)
            continue
        c = eigvecs[:, 0]
        slack = sscale * tau * (T + gamma)
        H = Q.separation_poly_vec(qp, c)
        # <v, H> = c^T X c = eigvals[0] < -slack by the threshold gap.
        return separated(H, slack, name)

    # Matrix PSD constraints (condition 5).
    for con in Q.matrix_psd:
        k = len(con.matrix)
        X = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                X[i, j] = L.apply(con.matrix[i][j])
        X = (X + X.T) / 2.0
        floor = _eig_floor(X)
        eigvals, eigvecs = np.linalg.eigh(X)
        accept_at = con.slack_scale * tau * (T + 3 * gamma)
        if eigvals[0] >= -accept_at - floor:
            worst = min(worst, eigvals[0] + accept_at + floor)
            continue
        c = eigvecs[:, 0]
        H = np.zeros(Q.basis.size)
        for i in range(k):
            for j in range(k):
                H += c[i] * c[j] * poly_to_vec(con.matrix[i][j], Q.basis)
        slack = con.slack_scale * tau * (T + gamma)
        return separated(H, slack, con.name or "matrix_psd")

    return Verdict(satisfied=True, margin=worst)


def ellipsoid_search(
    Q: ConstraintSystem,
    T: float,
    r: float,
    gamma: float,
    max_iters: int | None = None,
) -> FunctionalRep | InfeasibleBall:
    """Find a feasible functional for Q_T or certify that the feasible set
    is smaller than a ball of radius r.

    Structured witness candidates attached to the system are probed first;
    any that checks out is returned without iterating. The ellipsoid then
    runs deep cuts from the returned separating hyperplanes, with
    re-symmetrization every 50 iterations. Hitting the iteration cap is
    reported as infeasible-at-radius-r, flagged ``certified=False`` when
    the cap was below the full 2(B-1)^2 ln(R'/r) bound.
    """
    B = Q.basis.size
    if Q.witness_hint is not None:
        for w in Q.witness_hint(T):
            if check_satisfies(w, Q, T, gamma).satisfied:
                return w

    m = B - 1
    Rp = Q.norm_bound
    r = max(r, 1e-300)
    full_bound = int(math.ceil(2 * m * m * math.log(max(Rp / r, 2.0))))
    cap = min(full_bound, max_iters if max_iters is not None else DEFAULT_MAX_ITERS)

    if B > ELLIPSOID_BASIS_GUARD or cap <= 0:
        return InfeasibleBall(radius=r, iterations=0, certified=False)

    x = np.zeros(m)
    P = np.eye(m) * (Rp * Rp)
    it = 0
    while it < cap:
        it += 1
        cand = FunctionalRep(np.concatenate(([1.0], x)), Q.basis)
        verdict = check_satisfies(cand, Q, T, gamma)
        if verdict.satisfied:
            return cand
        H = verdict.hyperplane
        a = -H  # keep {a.y <= b} with b = -offset
        b = -verdict.offset
        Pa = P @ a
        denom2 = float(a @ Pa)
        if denom2 <= 0 or not math.isfinite(denom2):
            return InfeasibleBall(radius=r, iterations=it, certified=False)
        denom = math.sqrt(denom2)
        alpha = (float(a @ x) - b) / denom
        if alpha >= 1.0:
            # The violated constraint excludes the entire ellipsoid.
            return InfeasibleBall(radius=r, iterations=it, certified=True)
        alpha = max(alpha, 0.0)  # never cut shallower than through the center
        if m == 1:
            # In one dimension the ellipsoid is an interval; intersect it
            # with the half-line and re-center.
            x = x - ((1 + alpha) / 2.0) * Pa / denom
            half = math.sqrt(P[0, 0]) * (1 - alpha) / 2.0
            P = np.array([[half * half]])
        else:
            tau1 = (1 + m * alpha) / (m + 1)
            sigma = 2 * (1 + m * alpha) / ((m + 1) * (1 + alpha))
            delta = (m * m / (m * m - 1.0)) * (1 - alpha * alpha)
            x = x - tau1 * Pa / denom
            P = delta * (P - sigma * np.outer(Pa, Pa) / denom2)
        if it % 50 == 0:
            P = (P + P.T) / 2.0
        if float(np.trace(P)) < r * r:
            return InfeasibleBall(radius=r, iterations=it, certified=True)
    return InfeasibleBall(radius=r, iterations=it, certified=it >= full_bound)


def robust_ball_radius(Q: ConstraintSystem, T0: float, gamma: float) -> float:
    """Radius of the feasibility ball around a satisfying functional.

    Evaluates the three explicit ceilings with the poly factor fixed as B^2
    (square of the basis size). Returns 0 when tau = 0.
    """
    tau = Q.tau
    if tau == 0.0:
        return 0.0
    B = Q.basis.size
    poly = float(B) ** 2
    r1 = tau * gamma / poly

    qT = Q.t_poly(T0) if Q.t_constraint is not None else {(): 1.0}
    qT_inf = max((abs(c) for c in qT.values()), default=1.0)
    r2 = (tau / (4 * poly)) * min(gamma / max(qT_inf, 1e-300), 1.0 / max(Q.t_max, 1e-300))

    r3 = math.inf
    if Q.matrix_psd:
        k = max(len(c.matrix) for c in Q.matrix_psd)
        q_inf = max(
            abs(coef)
            for c in Q.matrix_psd
            for row in c.matrix
            for p in row
            for coef in p.values()
        )
        r3 = tau * gamma / (math.sqrt(k) * poly * max(q_inf, 1e-300))
    return min(r1, r2, r3)


def compute_score_T(
    Q: ConstraintSystem,
    tau: float | None = None,
    gamma: float = 1e-2,
    max_iters: int | None = None,
) -> float:
    """Estimate T0 = inf{T : some L tau-approximately satisfies Q_T}.

    Binary search over [0, T_max]: a SATISFIED verdict at T implies
    feasibility at T + 4*gamma, an infeasible-ball verdict implies
    T < T0 + gamma, so the returned level is within O(gamma) of T0.
    """
    if tau is not None:
        Q.tau = tau
    if gamma >= Q.t_max / 2:
        raise ValueError("gamma must be below T_max / 2")

    def feasible(T: float) -> bool:
        r = robust_ball_radius(Q, T, gamma)
        out = ellipsoid_search(Q, T, r, gamma, max_iters=max_iters)
        return isinstance(out, FunctionalRep)

    hi = Q.t_max
    if not feasible(hi):
        return hi
    lo = 0.0
    if feasible(lo):
        return 0.0
    while hi - lo > gamma:
        mid = (lo + hi) / 2.0
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
