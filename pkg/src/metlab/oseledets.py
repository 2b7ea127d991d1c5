"""Fast spaces, slow projections, deflation and the full semi-invertible decomposition.

Nothing here inverts a generator.  Fast spaces come from pushing forward
near-optimal subspaces of ``L_{-n->n}`` by ``L_{-n->0}``; slow projections come
from translating basis vectors by elements of the fast space until forward
growth drops to the next exponent.  Deeper levels repeat both steps on the
deflated cocycle ``L o Pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .cocycle import BasePoint, CocycleSystem, FunctionGenerator, ScaledMatrix, compound, orbit
from .grassmannian import (
    DenseEnumeration,
    DimensionCollapse,
    EnumerationExhausted,
    Projection,
    Subspace,
    _primitive_vectors,
    first_hit,
    hausdorff_distance,
    push_forward,
)
from .kingman import lyapunov_spectrum
from .normed import NormSpec, min_growth_basis, norm, operator_norm, to_base
from .opstats import PreconditionError, _l2_weighted_svd, bernstein, check_sandwich


def _fit_slope(ns, values, floor: float = 1e-13):
    """Least-squares slope of ``log value`` against n over values above ``floor``."""
    ns = np.asarray(ns, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v) & (v > floor)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(ns[ok], np.log(v[ok]), 1)[0])


# ---------------------------------------------------------------------------
# Fast space.

@dataclass
class FastSpaceRecord:
    n: int
    E_tilde: Subspace
    E: Subspace
    gap: float = math.nan
    index: int | None = None


@dataclass
class FastSpaceRun:
    m1: int
    eps: float
    selection: str
    records: list
    E_final: Subspace
    slope: float
    converged: bool
    stop_tol: float

    @property
    def gaps(self) -> list[tuple[int, float]]:
        return [(r.n, r.gap) for r in self.records if np.isfinite(r.gap)]

    @property
    def contracting(self) -> bool:
        """False when the gaps show no decay (the quasicompactness hypothesis looks violated)."""
        return self.converged or (np.isfinite(self.slope) and self.slope < 0)


def _top_subspace(M: np.ndarray, m: int, n: NormSpec, seed: int) -> Subspace:
    if n.base_kind == "L2":
        _, right = _l2_weighted_svd(M, n)
        return Subspace.span(right[:, :m], dim=m)
    return bernstein(M, m, n, method="optimized", seed=seed).witness


def _enumerated_choice(M: np.ndarray, P: np.ndarray, m: int, eps: float, n: NormSpec, max_index: int,
                       seed: int):
    """First enumerated E with ``g(M, E) > e^-eps rho_m(M)`` whose push-forward by P keeps its dimension."""
    d = M.shape[0]
    rho = bernstein(M, m, n, seed=seed).value
    thr = math.exp(-eps) * rho
    if m == 1:
        # batch screen of the direction stream, same order as first_hit over DenseEnumeration(d, 1)
        start = 0
        chunk = 4096
        while start < max_index:
            count = min(max_index, start + chunk)
            V = np.array(_primitive_vectors(d, count)[start:count])
            ratio = norm(V @ M.T, n) / norm(V, n)
            img = V @ P.T
            alive = np.linalg.norm(img, axis=1) > 1e-13 * np.linalg.norm(P, 2) * np.linalg.norm(V, axis=1)
            hits = np.nonzero((ratio > thr) & alive)[0]
            if len(hits):
                i = int(hits[0])
                return Subspace.span(V[i][:, None]), start + i + 1
            start = count
            chunk *= 2
        raise EnumerationExhausted(f"no fast direction within {max_index} elements")

    def pred(S):
        if min_growth_basis(M, S.basis, n) <= thr:
            return False
        try:
            push_forward(P, S)
        except DimensionCollapse:
            return False
        return True

    return first_hit(DenseEnumeration(d, m), pred, max_index)


def fast_space(c: CocycleSystem, w: BasePoint, m1: int, eps: float, n_max: int = 200,
               selection: str = "optimized", stop_tol: float = 1e-6, n_min: int = 1,
               max_index: int = 10**6, gap_estimate: float | None = None, seed: int = 0) -> FastSpaceRun:
    """Approximate the m1-dimensional fast space at w.

    For n = n_min, n_min+1, ...: pick a near-optimal m1-space of ``L_{-n->n}``
    (first enumerated hit or the optimizer witness), push it forward by
    ``L_{-n->0}``, and stop once consecutive push-forwards are within
    ``stop_tol``.  If the product stops resolving the image first, the run ends
    with ``converged`` False and returns the iterate with the smallest gap.
    """
    if selection not in ("enumerated", "optimized"):
        raise ValueError("selection must be 'enumerated' or 'optimized'")
    if gap_estimate is not None and not eps < gap_estimate / 5:
        raise PreconditionError(f"eps={eps} must be below (lambda1 - lambda2)/5 = {gap_estimate / 5}")
    nrm = c.norm
    records: list[FastSpaceRecord] = []
    converged = False
    back = c.evaluate_interval(w, -(n_min - 1), 0)
    fwd = c.evaluate_interval(w, 0, n_min - 1)
    for n in range(n_min, n_max + 1):
        # one new factor on each side per step
        back = back @ ScaledMatrix.of(c.matrix(orbit(w, -n)))
        fwd = ScaledMatrix.of(c.matrix(orbit(w, n - 1))) @ fwd
        M = (fwd @ back).matrix
        P = back.matrix
        if selection == "optimized":
            Et, idx = _top_subspace(M, m1, nrm, seed), None
        else:
            Et, idx = _enumerated_choice(M, P, m1, eps, nrm, max_index, seed)
        try:
            E = push_forward(P, Et)
        except DimensionCollapse:
            # the scaled product no longer resolves the image; keep the last resolved space
            if not records:
                raise
            break
        if records:
            records[-1].gap = hausdorff_distance(records[-1].E, E, nrm, seed)
            if records[-1].gap < stop_tol:
                records.append(FastSpaceRecord(n, Et, E, math.nan, idx))
                converged = True
                break
        records.append(FastSpaceRecord(n, Et, E, math.nan, idx))
    gaps = [(r.n, r.gap) for r in records if np.isfinite(r.gap)]
    slope = _fit_slope([g[0] for g in gaps], [g[1] for g in gaps]) if gaps else math.nan
    final = records[-1].E
    if not converged and gaps:
        # rounding eventually dominates the gaps; the most stable iterate is the best estimate
        final = min((r for r in records if np.isfinite(r.gap)), key=lambda r: r.gap).E
    return FastSpaceRun(m1, eps, selection, records, final, slope, converged, stop_tol)


def equivariance_residual(c: CocycleSystem, w: BasePoint, E, n: NormSpec | None = None) -> float:
    """``d(L_w E(w), E(sigma w))`` for a field ``E: point -> Subspace``."""
    n = n or c.norm
    return hausdorff_distance(push_forward(c.matrix(w), E(w)), E(orbit(w, 1)), n)


# ---------------------------------------------------------------------------
# Slow projection.

@dataclass
class SlowProjectionRun:
    matrices: list
    gaps: list
    final: Projection
    coefficients: np.ndarray
    slope: float
    converged: bool
    refine_change: float = 0.0

    @property
    def idempotency_residual(self) -> float:
        return self.final.idempotency_residual()


def _translate_coefficients(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Coefficients C with ``M (I - B C)`` of least Euclidean size column by column."""
    C, *_ = np.linalg.lstsq(M @ B, M, rcond=None)
    return C


def _min_ratio_l2(M: np.ndarray, B: np.ndarray, x: np.ndarray, n: NormSpec):
    """Exact minimizer c of ``||M (x - B c)|| / ||x - B c||`` for weighted Euclidean norms.

    With ``A = [x, B] = Q R`` the ratio is ``||M Q u|| / ||u||`` for ``u = R z``,
    minimized by the last right singular vector of ``M Q``; c is read off
    from ``z = (1, -c)``.  Returns None when that vector has no x-component.
    """
    w = n.weight_vector(len(x))
    A = w[:, None] * np.column_stack([x, B])
    Q, R = np.linalg.qr(A)
    u = np.linalg.svd(to_base(M, n) @ Q)[2][-1]
    z = scipy.linalg.solve_triangular(R, u)
    if abs(z[0]) <= 1e-12 * np.abs(z).max():
        return None
    return -z[1:] / z[0]


def _refine_column(M: np.ndarray, B: np.ndarray, x: np.ndarray, c0: np.ndarray, n: NormSpec) -> np.ndarray:
    """Locally minimize ``||M (x - B c)|| / ||x - B c||`` starting from c0."""

    def ratio(cv):
        y = x - B @ cv
        ny = norm(y, n)
        return norm(M @ y, n) / ny if ny > 0 else math.inf

    if n.base_kind == "L2":
        c = _min_ratio_l2(M, B, x, n)
        if c is not None and ratio(c) <= ratio(c0):
            return c
        return c0
    f0 = ratio(c0)
    if not np.isfinite(f0) or f0 == 0:
        return c0
    h = 1e-6 * (1.0 + np.abs(c0).max())
    simplex = np.vstack([c0] + [c0 + h * e for e in np.eye(len(c0))])
    res = minimize(ratio, c0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-15, "fatol": 0.0, "maxfev": 60 * len(c0)})
    return res.x if res.fun < f0 else c0


def slow_projection(c: CocycleSystem, w: BasePoint, E: Subspace, eps: float | None = None, n_max: int = 200,
                    stop_tol: float = 1e-10, refine: bool = True, gap_estimate: float | None = None
                    ) -> SlowProjectionRun:
    """Projection along the fast space E onto the slow space at w.

    Column i of ``Pi^(n)`` is ``e_i - B c``, where ``c`` makes ``e_i - B c`` grow
    as slowly as possible under ``L_{0->n}``.  Columns for ``e_i`` in E are 0.
    """
    if eps is not None and gap_estimate is not None and not eps < gap_estimate / 2:
        raise PreconditionError("eps must be below (lambda1 - lambda2)/2")
    d = c.dim
    B = E.basis
    mats, gaps = [], []
    prev = None
    converged = False
    C = np.zeros((E.dim, d))
    fwd = ScaledMatrix(np.eye(d), 0.0)
    for n in range(1, n_max + 1):
        fwd = ScaledMatrix.of(c.matrix(orbit(w, n - 1))) @ fwd
        M = fwd.matrix
        C = _translate_coefficients(M, B)
        Pi = np.eye(d) - B @ C
        mats.append(Pi)
        if prev is not None:
            gaps.append((n, operator_norm(Pi - prev, c.norm)))
            if gaps[-1][1] < stop_tol:
                converged = True
                break
        prev = Pi
    change = 0.0
    if refine:
        Cr = C.copy()
        for i in range(d):
            x = np.eye(d)[:, i]
            if E.contains(x):
                continue
            Cr[:, i] = _refine_column(M, B, x, C[:, i], c.norm)
        change = float(np.abs(Cr - C).max())
        C = Cr
        mats[-1] = np.eye(d) - B @ C
    Pi = mats[-1]
    slope = _fit_slope([g[0] for g in gaps], [g[1] for g in gaps]) if gaps else math.nan
    rng = Subspace.span(Pi, rtol=1e-8, dim=d - E.dim)
    return SlowProjectionRun(mats, gaps, Projection(Pi, rng, E), C, slope, converged, change)


def rational_grid_level(m: int, lev: int) -> np.ndarray:
    """Points of ``2^-lev Z^m`` with sup-norm at most ``2^lev`` that are new at this level."""
    side = np.arange(-(4**lev), 4**lev + 1) / 2.0**lev
    G = np.stack(np.meshgrid(*([side] * m), indexing="ij"), axis=-1).reshape(-1, m)
    if lev == 0:
        return G
    old = np.all((G * 2.0 ** (lev - 1)) == np.round(G * 2.0 ** (lev - 1)), axis=1) & (np.abs(G).max(axis=1) <= 2.0 ** (lev - 1))
    return G[~old]


def slow_projection_grid(c: CocycleSystem, w: BasePoint, E: Subspace, eps: float, n: int, max_level: int = 10):
    """Slow projection at a single n by first hit over a dyadic rational grid of translates.

    Translate ``T_j x = x - B q_j`` is accepted when
    ``||L_{0->n} T_j x|| <= e^eps rho_{m+1}(L_{0->n}) ||T_j x||``.
    Returns ``(Pi, indices)``; indices are 1-based positions in the grid stream.
    """
    d, m = c.dim, E.dim
    M = c.evaluate_interval(w, 0, n).matrix
    thr = math.exp(eps) * bernstein(M, m + 1, c.norm).value
    B = E.basis
    Pi = np.zeros((d, d))
    indices = []
    for i in range(d):
        x = np.eye(d)[:, i]
        if E.contains(x):
            indices.append(0)
            continue
        offset = 0
        for lev in range(max_level + 1):
            Q = rational_grid_level(m, lev)
            Y = x[None, :] - Q @ B.T
            ok = norm(Y @ M.T, c.norm) <= thr * norm(Y, c.norm)
            hits = np.nonzero(ok)[0]
            if len(hits):
                j = int(hits[0])
                Pi[:, i] = Y[j]
                indices.append(offset + j + 1)
                break
            offset += len(Q)
        else:
            raise EnumerationExhausted(f"no grid translate for e_{i} up to level {max_level}")
    return Pi, indices


# ---------------------------------------------------------------------------
# Growth of single vectors.

def log_growth_profile(c: CocycleSystem, w: BasePoint, x, n_max: int, field=None) -> np.ndarray:
    """``log ||L_{0->n} x||`` for n = 0..n_max (``-inf`` once the orbit hits a kernel).

    With ``field`` (points -> projection matrices) each iterate is projected
    again.  For x in range(Pi) and an equivariant field this is the same orbit,
    but rounding can no longer seed a fast component that outgrows it.
    """
    v = np.asarray(x, dtype=float).copy()
    out = np.full(n_max + 1, -math.inf)
    nv = norm(v, c.norm)
    if nv == 0:
        return out
    acc = math.log(nv)
    v = v / nv
    out[0] = acc
    for i in range(n_max):
        v = c.matrix(orbit(w, i)) @ v
        if field is not None:
            v = field(orbit(w, i + 1)) @ v
        nv = norm(v, c.norm)
        if nv == 0:
            break
        acc += math.log(nv)
        v = v / nv
        out[i + 1] = acc
    return out


def vector_growth_rate(c: CocycleSystem, w: BasePoint, x, n_max: int, tail: float = 0.5, field=None) -> float:
    """Estimate ``limsup (1/n) log ||L_{0->n} x||`` by the slope over the last ``tail`` of [0, n_max]."""
    prof = log_growth_profile(c, w, x, n_max, field)
    if not np.isfinite(prof[-1]):
        return -math.inf
    lo = int(n_max * (1 - tail))
    ns = np.arange(lo, n_max + 1)
    return float(np.polyfit(ns, prof[lo:], 1)[0])


def log_min_growth(c: CocycleSystem, w: BasePoint, n: int, B) -> float:
    """``log g(L_{0->n}(w), span B)``.

    Weighted Euclidean norms use ``s_j(L B) = ||wedge^j(L) wedge^j(B)|| / ||wedge^(j-1)(L) wedge^(j-1)(B)||``
    which stays exact at any horizon; other norms evaluate on the scaled product.
    """
    B = np.asarray(B, dtype=float)
    j = B.shape[1]
    if c.norm.base_kind != "L2":
        S = c.evaluate_interval(w, 0, n)
        g = min_growth_basis(S.matrix, B, c.norm)
        return math.log(g) + S.log_scale if g > 0 else -math.inf
    Bb = np.linalg.qr(n_weighted(B, c.norm))[0]

    def vol(k):
        if k == 0:
            return 0.0
        S = c.exterior_interval(w, 0, n, k)
        if S.is_zero:
            return -math.inf
        v = np.linalg.svd(S.matrix @ compound(Bb, k), compute_uv=False)[0]
        return math.log(v) + S.log_scale if v > 0 else -math.inf

    top = vol(j)
    return top - vol(j - 1) if top > -math.inf else -math.inf


def n_weighted(B, n: NormSpec):
    return n.weight_vector(B.shape[0])[:, None] * B


# ---------------------------------------------------------------------------
# Fields of projections and deflation.

class ProjectionField:
    """Fast space and slow projection of one level, computed lazily at any base point."""

    def __init__(self, c: CocycleSystem, m: int, eps: float, selection: str = "optimized",
                 fast_tol: float = 1e-12, slow_tol: float = 1e-12, n_max: int = 400, seed: int = 0):
        self.c, self.m, self.eps, self.selection = c, m, eps, selection
        self.fast_tol, self.slow_tol, self.n_max, self.seed = fast_tol, slow_tol, n_max, seed
        self._fast: dict = {}
        self._slow: dict = {}

    def fast_run(self, w: BasePoint) -> FastSpaceRun:
        key = (w.anchor, w.t)
        run = self._fast.get(key)
        if run is None:
            run = fast_space(self.c, w, self.m, self.eps, self.n_max, self.selection, self.fast_tol, seed=self.seed)
            self._fast[key] = run
        return run

    def fast(self, w: BasePoint) -> Subspace:
        return self.fast_run(w).E_final

    def slow_run(self, w: BasePoint) -> SlowProjectionRun:
        key = (w.anchor, w.t)
        run = self._slow.get(key)
        if run is None:
            run = slow_projection(self.c, w, self.fast(w), self.eps, self.n_max, self.slow_tol)
            self._slow[key] = run
        return run

    def projection(self, w: BasePoint) -> Projection:
        return self.slow_run(w).final

    def __call__(self, w: BasePoint) -> np.ndarray:
        return self.projection(w).matrix


def deflate(c: CocycleSystem, field, restrict_bound: float | None = None) -> CocycleSystem:
    """The cocycle ``L'_w = L_w o Pi_w``.

    ``field`` maps base points to projection matrices.  With ``restrict_bound``
    set, Pi is applied only where ``||Pi_w|| <= restrict_bound`` and ``L_w`` is
    kept elsewhere.
    """

    def gen(base, w):
        P = field(w)
        if restrict_bound is not None and operator_norm(P, c.norm) > restrict_bound:
            return c.matrix(w)
        return c.matrix(w) @ P

    return c.with_generator(FunctionGenerator(gen, c.dim, "deflated"))


def temperedness_profile(field: ProjectionField, w: BasePoint, N: int, grid=None):
    """``(n, (1/n) log ||Pi_{sigma^n w}||)`` along the orbit, with the fitted slope of ``log ||Pi||``."""
    grid = np.unique(np.linspace(1, N, min(N, 20)).round().astype(int)) if grid is None else np.asarray(grid)
    prof, logs = [], []
    for n in grid:
        v = math.log(operator_norm(field(orbit(w, int(n))), field.c.norm))
        logs.append(v)
        prof.append((int(n), v / n))
    slope = float(np.polyfit(grid, logs, 1)[0]) if len(grid) > 1 else math.nan
    return prof, slope


# ---------------------------------------------------------------------------
# Full decomposition.

@dataclass
class Level:
    lam: float
    m: int
    E: Subspace
    eps: float
    fast: FastSpaceRun
    slow: SlowProjectionRun
    residuals: dict = field(default_factory=dict)


@dataclass
class Decomposition:
    levels: list
    Pi_slow: Projection
    spectrum: object
    residuals: dict = field(default_factory=dict)
    complete: bool = True
    error: str | None = None

    @property
    def exponents(self) -> list[float]:
        return [lv.lam for lv in self.levels]

    @property
    def multiplicities(self) -> list[int]:
        return [lv.m for lv in self.levels]

    def dimension_audit(self) -> bool:
        d = self.Pi_slow.matrix.shape[0]
        return sum(self.multiplicities) + self.Pi_slow.range.dim == d

    def to_json(self) -> dict:
        return {
            "exponents": self.exponents,
            "multiplicities": self.multiplicities,
            "fast_spaces": [lv.E.to_json() for lv in self.levels],
            "projection": self.Pi_slow.matrix.tolist(),
            "residuals": self.residuals,
            "levels": [lv.residuals for lv in self.levels],
            "complete": self.complete,
            "error": self.error,
        }


def default_eps(lam_i: float, lam_next: float, cap: float = 0.1) -> float:
    """``(lambda_i - lambda_{i+1}) / 10``, capped when the next level is -inf or absent."""
    if not math.isfinite(lam_next):
        return cap
    return min((lam_i - lam_next) / 10.0, cap)


def full_decomposition(c: CocycleSystem, w: BasePoint, L_target: int | None = None, spectrum=None,
                       pilot_n: int = 2000, selection: str = "optimized", eps: float | None = None,
                       growth_n: int | None = None, seed: int = 0) -> Decomposition:
    """Inductive decomposition: spectrum, fast space, slow projection, deflate, repeat.

    The pilot spectrum fixes exponents and multiplicities; each level deflates
    the previous cocycle and composes ``Pi_{l+1} = Pi_l o Pi'``.
    """
    d = c.dim
    spec = spectrum if spectrum is not None else lyapunov_spectrum(c, w, d, pilot_n, seed=seed)
    lam = [float(v) for v in spec.lam]
    mult = [int(m) for m in spec.mult]
    finite = [i for i, v in enumerate(lam) if math.isfinite(v)]
    L = len(finite) if L_target is None else L_target
    if L > len(finite):
        raise PreconditionError(f"only {len(finite)} separated finite exponents, {L} requested")
    cur = c
    Pi_total = np.eye(d)
    levels: list[Level] = []
    fields = []
    fast_total: list[np.ndarray] = []
    try:
        for i in range(L):
            lam_next = lam[i + 1] if i + 1 < len(lam) else -math.inf
            e = eps if eps is not None else default_eps(lam[i], lam_next)
            fld = ProjectionField(cur, mult[i], e, selection, seed=seed)
            frun = fld.fast_run(w)
            srun = fld.slow_run(w)
            E = frun.E_final
            Pi_total = Pi_total @ srun.final.matrix
            fast_total.append(E.basis)
            res = {
                "lambda": lam[i],
                "m": mult[i],
                "eps": e,
                "fast_converged": frun.converged,
                "fast_slope": frun.slope,
                "slow_converged": srun.converged,
                "slow_slope": srun.slope,
                "idempotency": srun.idempotency_residual,
                "equivariance": equivariance_residual(cur, w, fld.fast),
            }
            if growth_n:
                lg = log_min_growth(c, w, growth_n, np.column_stack(fast_total)) / growth_n
                res["fast_sum_growth"] = lg
                res["fast_sum_bound"] = lam[i] - 3 * e
                res["fast_sum_ok"] = bool(lg >= lam[i] - 3 * e)
            levels.append(Level(lam[i], mult[i], E, e, frun, srun, res))
            fields.append(fld)
            if i + 1 < L:
                cur = deflate(cur, fld)
    except (DimensionCollapse, EnumerationExhausted, np.linalg.LinAlgError) as exc:
        Pi = _projection_from(Pi_total, levels, d)
        return Decomposition(levels, Pi, spec, {"fields": fields}, complete=False, error=repr(exc))
    Pi = _projection_from(Pi_total, levels, d)
    dec = Decomposition(levels, Pi, spec, {})
    dec.residuals = {
        "idempotency": Pi.idempotency_residual(),
        "dimension_audit": dec.dimension_audit(),
    }
    dec.fields = fields
    return dec


def _projection_from(P: np.ndarray, levels, d: int) -> Projection:
    k = sum(lv.m for lv in levels)
    rng = Subspace.span(P, rtol=1e-8, dim=d - k) if k < d else Subspace(np.zeros((d, 0)))
    ker = Subspace.span(np.column_stack([lv.E.basis for lv in levels]), dim=k) if levels else Subspace(np.zeros((d, 0)))
    return Projection(P, rng, ker)


def sandwich_at(c: CocycleSystem, field: ProjectionField, w: BasePoint, n: int, l: int = 1):
    """check_sandwich with T = L_{0->n}(w), Pi = Pi(w), Pi' = Pi(sigma^n w)."""
    T = c.evaluate_interval(w, 0, n).matrix
    return check_sandwich(T, field.projection(w), field.projection(orbit(w, n)), field.m, l, c.norm)
