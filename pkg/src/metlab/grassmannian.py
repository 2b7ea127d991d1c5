"""Subspaces of R^d, the sphere-Hausdorff metric, projections and enumerations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import qmc

from .normed import L2, NormSpec, norm, sphere_extremize

EQ_TOL = 1e-9


class DimensionCollapse(ValueError):
    """Image of a subspace has lower dimension than the subspace."""


class EnumerationExhausted(LookupError):
    """No element of an indexed stream satisfied the predicate within budget."""


class NotComplementary(ValueError):
    pass


def _canonical_basis(Q: np.ndarray) -> np.ndarray:
    d, k = Q.shape
    if k == 0:
        return np.zeros((d, 0))
    if k == d:
        return np.eye(d)
    if k == 1:
        # what pivoted QR of the projector gives for a line
        q = Q[:, 0] / np.linalg.norm(Q[:, 0])
        return (q * math.copysign(1.0, q[np.argmax(np.abs(q))]))[:, None]
    P = Q @ Q.T
    q, r, _ = scipy.linalg.qr(P, pivoting=True)
    q = q[:, :k]
    s = np.sign(np.diag(r)[:k])
    s[s == 0] = 1.0
    return q * s


@dataclass(frozen=True, eq=False)
class Subspace:
    """A k-dimensional subspace of R^d held by a canonical orthonormal basis."""

    basis: np.ndarray

    @classmethod
    def span(cls, M, rtol: float = 1e-10, dim: int | None = None) -> "Subspace":
        """Span of the columns of ``M``.

        With ``dim`` given the result is the dominant ``dim``-dimensional part
        of the column space, otherwise the numerical rank decides.
        """
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.ndim != 2:
            raise ValueError("expected a matrix of column vectors")
        d = M.shape[0]
        if M.shape[1] == 0:
            return cls(np.zeros((d, 0)))
        if M.shape[1] == 1 and dim == 1:
            return cls(_canonical_basis(M))
        u, s, _ = np.linalg.svd(M, full_matrices=False)
        if dim is None:
            dim = int((s > rtol * s[0]).sum()) if s[0] > 0 else 0
        return cls(_canonical_basis(u[:, :dim]))

    @classmethod
    def coordinate(cls, d: int, indices) -> "Subspace":
        return cls.span(np.eye(d)[:, list(indices)])

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        r = x - self.basis @ (self.basis.T @ x)
        return bool(np.linalg.norm(r) <= tol * max(1.0, np.linalg.norm(x)))

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        if self.ambient_dim != other.ambient_dim or self.dim != other.dim:
            return False
        return hausdorff_distance(self, other) < EQ_TOL

    __hash__ = None

    def __repr__(self):
        return f"Subspace(d={self.ambient_dim}, k={self.dim})"

    def to_json(self) -> list:
        return self.basis.T.tolist()


@dataclass(frozen=True, eq=False)
class Projection:
    matrix: np.ndarray
    range: Subspace
    kernel: Subspace

    def idempotency_residual(self) -> float:
        P = self.matrix
        return float(np.abs(P @ P - P).max())

    def complement(self) -> "Projection":
        return Projection(np.eye(len(self.matrix)) - self.matrix, self.kernel, self.range)

    @classmethod
    def from_matrix(cls, P) -> "Projection":
        P = np.asarray(P, dtype=float)
        d = len(P)
        rng = Subspace.span(P, rtol=1e-8)
        ker = Subspace.span(np.eye(d) - P, rtol=1e-8)
        return cls(P, rng, ker)


# ---------------------------------------------------------------------------
# Metric.

def _principal_angle_max(V: Subspace, W: Subspace) -> float:
    """Largest angle between a unit vector of V and the subspace W."""
    QV, QW = V.basis, W.basis
    if V.dim == 1 and W.dim == 1:
        u, v = QV[:, 0], QW[:, 0]
        cos = abs(float(u @ v))
        return float(math.atan2(np.linalg.norm(u - v * (v @ u)), cos))
    c = np.linalg.svd(QW.T @ QV, compute_uv=False) if W.dim else np.zeros(V.dim)
    cmin = c[-1] if len(c) == V.dim else 0.0
    resid = QV - QW @ (QW.T @ QV)
    smax = np.linalg.svd(resid, compute_uv=False)[0]
    return float(math.atan2(smax, max(cmin, 0.0)))


_CIRCLE_GRID = 720


def _circle(B: np.ndarray, n: NormSpec, th) -> np.ndarray:
    """Points ``B (cos t, sin t) / ||.||`` of the unit sphere of a plane, one row per angle."""
    th = np.atleast_1d(th)
    X = np.column_stack([np.cos(th), np.sin(th)]) @ B.T
    return X / norm(X, n)[:, None]


def _refine_angle(f, th0: float, h: float) -> float:
    res = minimize_scalar(f, bounds=(th0 - h, th0 + h), method="bounded", options={"xatol": 1e-12})
    return min(float(res.fun), float(f(th0)))


def _dist_to_sphere(v, BW: np.ndarray, n: NormSpec) -> np.ndarray:
    """``min ||v - w||`` over unit w of span(BW) for each row of v, BW with at most two columns."""
    v = np.atleast_2d(v)
    if BW.shape[1] == 1:
        w = BW[:, 0] / norm(BW[:, 0], n)
        return np.minimum(norm(v - w, n), norm(v + w, n))
    th = np.linspace(0.0, 2 * np.pi, 2 * _CIRCLE_GRID, endpoint=False)
    S = _circle(BW, n, th)
    D = norm(v[:, None, :] - S[None, :, :], n)
    h = th[1]
    out = np.empty(len(v))
    for i, row in enumerate(D):
        j = int(row.argmin())
        out[i] = _refine_angle(lambda t: norm(v[i] - _circle(BW, n, t)[0], n), th[j], h)
    return out


def _one_sided(V: Subspace, W: Subspace, n: NormSpec, seed: int) -> float:
    BV, BW = V.basis, W.basis
    if V.dim <= 2 and W.dim <= 2:
        if V.dim == 1:
            return float(_dist_to_sphere(BV[:, 0] / norm(BV[:, 0], n), BW, n)[0])
        # the sphere of V is a closed curve and v -> d(v, S_W) is even: sweep half of it, then refine
        th = np.linspace(0.0, np.pi, _CIRCLE_GRID // 2, endpoint=False)
        vals = _dist_to_sphere(_circle(BV, n, th), BW, n)
        best = float(vals.max())
        for j in np.argsort(-vals)[:3]:
            g = -_refine_angle(lambda t: -_dist_to_sphere(_circle(BV, n, t), BW, n)[0], th[j], th[1])
            best = max(best, g)
        return best

    def inner(v):
        if W.dim == 1:
            w = BW[:, 0] / norm(BW[:, 0], n)
            return min(norm(v - w, n), norm(v + w, n))
        val, _ = sphere_extremize(lambda w: norm(v - w, n), BW, n, "min", seeds=24 * W.dim, refine=2, seed=seed)
        return val

    val, _ = sphere_extremize(inner, BV, n, "max", seeds=24 * V.dim, refine=2, seed=seed + 1)
    return float(val)


def hausdorff_distance(V: Subspace, W: Subspace, n: NormSpec = L2, seed: int = 0) -> float:
    """Hausdorff distance between the unit spheres of V and W in norm ``n``."""
    if V.ambient_dim != W.ambient_dim:
        raise ValueError("subspaces live in different ambient spaces")
    if V.dim == 0 or W.dim == 0:
        return 0.0 if V.dim == W.dim else math.inf
    if n.kind == "L2":
        if V.dim != W.dim:
            raise ValueError("distance is defined within one Grassmannian")
        return 2.0 * math.sin(_principal_angle_max(V, W) / 2.0)
    return max(_one_sided(V, W, n, seed), _one_sided(W, V, n, seed))


def point_to_subspace_distance(x, W: Subspace, n: NormSpec = L2, seed: int = 0) -> float:
    """``d(x, W) = inf ||x - w||`` over w in W (not restricted to the sphere)."""
    x = np.asarray(x, dtype=float)
    if n.kind == "L2":
        return float(np.linalg.norm(x - W.basis @ (W.basis.T @ x)))
    B = W.basis

    def f(c):
        return norm(x - B @ c, n)

    c0 = B.T @ x
    res = minimize(f, c0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxfev": 4000})
    return float(min(res.fun, f(c0)))


# ---------------------------------------------------------------------------
# Complements and projections.

def euclidean_complement(V: Subspace) -> Subspace:
    d, k = V.basis.shape
    if not 1 <= k < d:
        raise ValueError("complement needs 1 <= k < d")
    q, _ = np.linalg.qr(V.basis, mode="complete")
    return Subspace(_canonical_basis(q[:, k:]))


def oblique_projection(U: Subspace, V: Subspace, tol: float = 1e-10) -> Projection:
    """Projection onto U along V."""
    d = U.ambient_dim
    if V.ambient_dim != d or U.dim + V.dim != d:
        raise NotComplementary("dimensions of U and V must sum to the ambient dimension")
    if U.dim == 0:
        return Projection(np.zeros((d, d)), U, V)
    if V.dim == 0:
        return Projection(np.eye(d), U, V)
    cos_max = np.linalg.svd(U.basis.T @ V.basis, compute_uv=False)[0]
    if cos_max >= 1.0 - tol:
        raise NotComplementary(f"subspaces intersect (largest cosine {cos_max:.3g})")
    M = np.hstack([U.basis, V.basis])
    rhs = np.hstack([U.basis, np.zeros_like(V.basis)])
    P = np.linalg.solve(M.T, rhs.T).T
    return Projection(P, U, V)


# ---------------------------------------------------------------------------
# Indexed streams.

def first_hit(stream, pred, max_index: int):
    """Least 1-based index ``i <= max_index`` whose element satisfies ``pred``.

    ``stream`` is a sequence or a callable ``i -> element``; ``None`` elements
    are skipped.  Returns ``(element, index)``.
    """
    if max_index < 1:
        raise ValueError("max_index must be >= 1")
    get = stream if callable(stream) else (lambda i: stream[i - 1] if i <= len(stream) else None)
    for i in range(1, max_index + 1):
        e = get(i)
        if e is not None and pred(e):
            return e, i
    raise EnumerationExhausted(f"no hit within {max_index} elements")


_VEC_CACHE: dict[int, list[np.ndarray]] = {}
_VEC_HEIGHT: dict[int, int] = {}


def _primitive_vectors(d: int, count: int) -> list[np.ndarray]:
    """First ``count`` primitive integer directions, ordered by height then lexicographically."""
    vecs = _VEC_CACHE.setdefault(d, [])
    h = _VEC_HEIGHT.get(d, 0)
    while len(vecs) < count:
        h += 1
        batch = []
        for c in itertools.product(range(-h, h + 1), repeat=d):
            if max(abs(v) for v in c) != h:
                continue
            nz = next(v for v in c if v != 0)
            if nz < 0 or math.gcd(*c) != 1:
                continue
            batch.append(np.array(c, dtype=float))
        vecs.extend(batch)
        _VEC_HEIGHT[d] = h
    return vecs


def vector_stream(d: int, i: int) -> np.ndarray:
    """The i-th (1-based) element of the dense direction enumeration of R^d."""
    return _primitive_vectors(d, i)[i - 1]


def _unrank_colex(r: int, k: int) -> tuple[int, ...]:
    out = []
    for j in range(k, 0, -1):
        c = j - 1
        while math.comb(c + 1, j) <= r:
            c += 1
        out.append(c)
        r -= math.comb(c, j)
    return tuple(reversed(out))


@dataclass(frozen=True)
class DenseEnumeration:
    """Index-addressable stream of k-subspaces of R^d with dense image.

    Index i decodes (combinatorial number system) to a k-tuple of
    rational directions; rank-deficient tuples yield ``None``.
    """

    d: int
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= self.d:
            raise ValueError("need 1 <= k <= d")

    def __call__(self, i: int) -> Subspace | None:
        if self.k == self.d:
            return Subspace(np.eye(self.d))
        combo = _unrank_colex(i - 1, self.k)
        vecs = _primitive_vectors(self.d, combo[-1] + 1)
        M = np.column_stack([vecs[c] for c in combo])
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] < 1e-9 * s[0]:
            return None
        return Subspace.span(M, dim=self.k)

    def __getitem__(self, i: int) -> Subspace | None:
        return self(i)


def measurable_basis(V: Subspace, n: NormSpec = L2, max_index: int = 100000) -> list[np.ndarray]:
    """Deterministic basis of unit vectors (in norm ``n``) spanning V.

    Each vector is the normalized projection onto V of the first enumerated
    direction that makes an angle under 45 degrees with V and keeps a
    definite distance from the vectors already chosen.
    """
    d, k = V.basis.shape
    P = V.projector()
    chosen: list[np.ndarray] = []
    for _ in range(k):
        Q = np.linalg.qr(np.column_stack(chosen))[0] if chosen else np.zeros((d, 0))

        def ok(x):
            y = P @ x
            ny = np.linalg.norm(y)
            if ny < np.linalg.norm(x) / math.sqrt(2.0):
                return False
            r = y - Q @ (Q.T @ y)
            return np.linalg.norm(r) >= 0.5 * ny

        x, _ = first_hit(lambda i: vector_stream(d, i), ok, max_index)
        y = P @ x
        chosen.append(y / norm(y, n))
    return chosen


def push_forward(T, V: Subspace, rtol: float = 1e-13) -> Subspace:
    """The image subspace ``T V``."""
    T = np.asarray(T, dtype=float)
    M = T @ V.basis
    s = np.linalg.norm(M, axis=0) if V.dim == 1 else np.linalg.svd(M, compute_uv=False)
    scale = np.linalg.norm(T)
    if V.dim and (scale == 0 or s[-1] <= rtol * scale):
        raise DimensionCollapse(f"image of a {V.dim}-dimensional subspace collapsed")
    return Subspace.span(M, dim=V.dim)


# ---------------------------------------------------------------------------
# Optimization over a Grassmannian.

def random_subspaces(d: int, k: int, count: int, seed: int = 0) -> list[np.ndarray]:
    from scipy.special import ndtri

    h = qmc.Halton(d=d * k, scramble=True, seed=seed).random(count)
    G = ndtri(np.clip(h, 1e-12, 1 - 1e-12)).reshape(count, d, k)
    return [np.linalg.qr(g)[0] for g in G]


def grassmann_extremize(f, d: int, k: int, mode: str = "max", starts=(), seeds: int | None = None,
                        refine: int = 3, seed: int = 0, tol: float = 1e-9):
    """Extremize ``f(basis)`` over k-dimensional subspaces of R^d.

    ``f`` must depend on the span only; it receives full-rank, not
    necessarily orthonormal, bases.

    Multi-start: ``starts`` plus a scrambled Halton set of random subspaces;
    the best ``refine`` seeds are polished with Nelder-Mead in the affine
    chart ``span(Q + Q_perp X)`` centred on each seed.

    Returns ``(value, orthonormal basis)``.
    """
    if not 1 <= k <= d:
        raise ValueError("need 1 <= k <= d")
    sgn = -1.0 if mode == "max" else 1.0
    if k == d:
        B = np.eye(d)
        return float(f(B)), B
    cands = [np.linalg.qr(np.asarray(s, dtype=float))[0][:, :k] for s in starts]
    cands += random_subspaces(d, k, seeds or 64 * k, seed)
    vals = np.array([sgn * f(B) for B in cands])
    order = np.argsort(vals, kind="stable")
    best_val, best_B = vals[order[0]], cands[order[0]]
    for idx in order[:refine]:
        Q = cands[idx]
        full = np.linalg.qr(Q, mode="complete")[0]
        Qc = full[:, k:]

        def obj(x, Q=Q, Qc=Qc):
            return sgn * f(Q + Qc @ x.reshape(d - k, k))

        x0 = np.zeros((d - k) * k)
        val = vals[idx]
        for scale in (0.2, 0.02):
            simplex = np.vstack([x0] + [x0 + scale * e for e in np.eye(len(x0))])
            res = minimize(obj, x0, method="Nelder-Mead",
                           options={"initial_simplex": simplex, "xatol": tol, "fatol": 1e-14,
                                    "maxfev": 120 * len(x0) + 100})
            if res.fun < val:
                x0, val = res.x, res.fun
        if val < best_val - 1e-15:
            best_val = val
            best_B = np.linalg.qr(Q + Qc @ x0.reshape(d - k, k))[0]
    return float(sgn * best_val), best_B
