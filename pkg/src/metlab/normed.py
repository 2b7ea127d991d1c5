"""Norms on R^d, operator norms, and extremization over unit spheres.

Every norm here is a (weighted) p-norm ``||x|| = ||W x||_p`` with ``W`` a
positive diagonal.  For ``p`` in {1, 2, inf} the quantities used downstream
(operator norm, slowest growth on a subspace, restricted norm) have exact
finite formulas; other ``p`` go through :func:`sphere_extremize`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

TAU_OPT = 1e-7

_KINDS = ("L1", "L2", "Linf", "WeightedLp")


@dataclass(frozen=True)
class NormSpec:
    kind: str = "L2"
    p: float | None = None
    weights: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "WeightedLp":
            if self.p is None or not (self.p >= 1):
                raise ValueError("WeightedLp needs p >= 1")
            if self.weights is None or len(self.weights) == 0:
                raise ValueError("WeightedLp needs weights")
            w = tuple(float(v) for v in self.weights)
            if not all(v > 0 and math.isfinite(v) for v in w):
                raise ValueError("weights must be strictly positive")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "p", float(self.p))

    @property
    def base_p(self) -> float:
        if self.kind == "L1":
            return 1.0
        if self.kind == "L2":
            return 2.0
        if self.kind == "Linf":
            return math.inf
        return self.p

    @property
    def base_kind(self) -> str:
        """One of 'L1', 'L2', 'Linf' or 'Lp' after removing the weights."""
        p = self.base_p
        if p == 1.0:
            return "L1"
        if p == 2.0:
            return "L2"
        if math.isinf(p):
            return "Linf"
        return "Lp"

    @property
    def is_exact(self) -> bool:
        return self.base_kind != "Lp"

    def weight_vector(self, d: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(d)
        if len(self.weights) != d:
            raise ValueError(f"norm has {len(self.weights)} weights, vector has dimension {d}")
        return np.asarray(self.weights)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "WeightedLp":
            out["p"] = self.p
            out["weights"] = list(self.weights)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "NormSpec":
        weights = obj.get("weights")
        return cls(obj["kind"], obj.get("p"), tuple(weights) if weights is not None else None)


L1 = NormSpec("L1")
L2 = NormSpec("L2")
LINF = NormSpec("Linf")


def _pnorm(y: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(y)
    if p == 1.0:
        return a.sum(axis=-1)
    if p == 2.0:
        return np.sqrt((a * a).sum(axis=-1))
    if math.isinf(p):
        return a.max(axis=-1)
    m = a.max(axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    r = safe[..., 0] * ((a / safe) ** p).sum(axis=-1) ** (1.0 / p)
    return np.where(m[..., 0] > 0, r, 0.0)


def norm(x, n: NormSpec = L2, d: int | None = None) -> np.ndarray | float:
    """Norm of ``x`` (or of every row of a stack of vectors)."""
    x = np.asarray(x, dtype=float)
    if d is not None and x.shape[-1] != d:
        raise ValueError(f"vector has dimension {x.shape[-1]}, expected {d}")
    if n.weights is not None:
        x = x * n.weight_vector(x.shape[-1])
    r = _pnorm(x, n.base_p)
    return float(r) if np.ndim(r) == 0 else r


def to_base(T: np.ndarray, n: NormSpec) -> np.ndarray:
    """Conjugate ``T`` by the weight diagonal so the base p-norm applies."""
    if n.weights is None:
        return T
    w = n.weight_vector(T.shape[0])
    return (w[:, None] * T) / w[None, :]


def basis_to_base(B: np.ndarray, n: NormSpec) -> np.ndarray:
    if n.weights is None:
        return B
    return n.weight_vector(B.shape[0])[:, None] * B


# ---------------------------------------------------------------------------
# Exact machinery for polyhedral unit balls.

@lru_cache(maxsize=None)
def _combos(m: int, j: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(m), j)), dtype=int).reshape(-1, j)


@lru_cache(maxsize=None)
def _signs(j: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=j))).reshape(-1, j)


def _null_rays(M: np.ndarray, scale: float) -> np.ndarray:
    """Directions u with j-1 independent rows of M vanishing on u."""
    m, j = M.shape
    if j == 2:
        u = np.column_stack([-M[:, 1], M[:, 0]])
        ok = np.abs(u).max(axis=1) > 1e-12 * scale
        return u[ok]
    if j == 3:
        a, b = _combos(m, 2).T
        u = np.cross(M[a], M[b])
        ok = np.abs(u).max(axis=1) > 1e-12 * scale * scale
        return u[ok]
    rows = _combos(m, j - 1)
    _, s, vh = np.linalg.svd(M[rows])
    ok = s[:, -1] > 1e-12 * scale
    return vh[ok, -1, :]


def _cramer_solutions(M: np.ndarray, scale: float) -> np.ndarray:
    """Solutions of M_I u = s over row subsets I (|I| = j) and sign vectors s."""
    m, j = M.shape
    signs = _signs(j)
    if j == 2:
        a, b = _combos(m, 2).T
        det = M[a, 0] * M[b, 1] - M[a, 1] * M[b, 0]
        ok = np.abs(det) > 1e-12 * scale * scale
        a, b, det = a[ok], b[ok], det[ok]
        # inverse of [[p, q], [r, t]] is [[t, -q], [-r, p]] / det
        p_, q_, r_, t_ = M[a, 0], M[a, 1], M[b, 0], M[b, 1]
        s1, s2 = signs[:, 0][None, :], signs[:, 1][None, :]
        u0 = (t_[:, None] * s1 - q_[:, None] * s2) / det[:, None]
        u1 = (-r_[:, None] * s1 + p_[:, None] * s2) / det[:, None]
        return np.stack([u0.ravel(), u1.ravel()], axis=1)
    rows = _combos(m, j)
    sub = M[rows]
    det = np.abs(np.linalg.det(sub))
    sub = sub[det > 1e-12 * scale**j]
    if len(sub) == 0:
        return np.zeros((0, j))
    u = np.linalg.solve(sub[:, None, :, :], np.broadcast_to(signs[None, :, :, None], (len(sub), len(signs), j, 1)))
    return u[..., 0].reshape(-1, j)


def ball_vertices(M: np.ndarray, kind: str) -> np.ndarray:
    """Vertices of ``{u : ||M u|| <= 1}`` for M (m x j) of full column rank.

    ``kind`` is 'L1' or 'Linf'.  Returns an array of shape (N, j); empty or
    degenerate output signals a rank-deficient M.
    """
    m, j = M.shape
    scale = np.abs(M).max()
    if scale == 0:
        return np.zeros((0, j))
    if kind == "L1":
        if j == 1:
            u = np.array([[1.0 / np.abs(M[:, 0]).sum()]])
            return np.vstack([u, -u])
        u = _null_rays(M, scale)
        nrm = np.abs(u @ M.T).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = u / nrm[:, None]
        return np.vstack([u, -u])
    if kind == "Linf":
        if j == 1:
            u = np.array([[1.0 / np.abs(M[:, 0]).max()]])
            return np.vstack([u, -u])
        u = _cramer_solutions(M, scale)
        keep = np.abs(u @ M.T).max(axis=1) <= 1.0 + 1e-9
        return u[keep]
    raise ValueError(f"no vertex enumeration for {kind}")


def _exact_restricted_norm(T: np.ndarray, B: np.ndarray, kind: str) -> float:
    if kind == "L2":
        Q, _ = np.linalg.qr(B)
        return float(np.linalg.svd(T @ Q, compute_uv=False)[0])
    V = ball_vertices(B, kind)
    return float(_pnorm(V @ (T @ B).T, 1.0 if kind == "L1" else math.inf).max())


def _exact_min_growth(T: np.ndarray, B: np.ndarray, kind: str) -> float:
    C = T @ B
    if kind == "L2":
        Q, R = np.linalg.qr(B)
        s = np.linalg.svd(T @ Q, compute_uv=False)
        return 0.0 if s[0] == 0 or s[-1] <= 1e-13 * s[0] else float(s[-1])
    V = ball_vertices(C, kind)
    if len(V) == 0:
        return 0.0
    p = 1.0 if kind == "L1" else math.inf
    with np.errstate(invalid="ignore", over="ignore"):
        # a rank-deficient C has vertices at infinity
        top = _pnorm(V @ B.T, p).max()
    if not np.isfinite(top):
        return 0.0
    return float(1.0 / top)


# ---------------------------------------------------------------------------
# Generic sphere optimizer.

def _sphere_seeds(k: int, count: int, seed: int) -> np.ndarray:
    if k == 1:
        return np.array([[1.0], [-1.0]])
    from scipy.special import ndtri

    h = qmc.Halton(d=k, scramble=True, seed=seed).random(count)
    z = ndtri(np.clip(h, 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z


def sphere_extremize(f, V, n: NormSpec = L2, mode: str = "min", seeds: int | None = None,
                     tol: float = TAU_OPT, refine: int = 4, seed: int = 0):
    """Extremize ``f`` over the unit sphere of the subspace ``V``.

    ``V`` is a Subspace or a d x k basis matrix.  Points are ``B u / ||B u||``
    with ``u`` on the Euclidean k-sphere.  Seeding is a scrambled Halton set
    (``64 k`` points by default); the best ``refine`` seeds are polished by
    coordinate descent until the step drops below ``tol``.

    Returns ``(value, argpoint)``.
    """
    B = np.asarray(getattr(V, "basis", V), dtype=float)
    if B.ndim != 2 or B.shape[1] == 0:
        raise ValueError("cannot extremize over a zero-dimensional subspace")
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    k = B.shape[1]
    sgn = 1.0 if mode == "min" else -1.0

    def point(u):
        y = B @ u
        return y / norm(y, n)

    def obj(u):
        return sgn * float(f(point(u)))

    U = _sphere_seeds(k, seeds or 64 * k, seed)
    vals = np.array([obj(u) for u in U])
    order = np.argsort(vals, kind="stable")
    best_val, best_u = vals[order[0]], U[order[0]]
    if k > 1:
        for idx in order[:refine]:
            u, v = _coordinate_descent(obj, U[idx].copy(), vals[idx], tol)
            if v < best_val - 1e-15:
                best_val, best_u = v, u
    return sgn * best_val, point(best_u)


def _coordinate_descent(obj, u, val, tol, h=0.25, max_evals=20000):
    k = len(u)
    evals = 0
    while h >= tol and evals < max_evals:
        improved = False
        for i in range(k):
            for step in (h, -h):
                w = u.copy()
                w[i] += step
                w /= np.linalg.norm(w)
                fw = obj(w)
                evals += 1
                if fw < val:
                    u, val, improved = w, fw, True
                    break
        if not improved:
            h *= 0.5
    return u, val


# ---------------------------------------------------------------------------
# Operator-level quantities.

def operator_norm(T, n: NormSpec = L2, seed: int = 0) -> float:
    """Operator norm of T with respect to ``n`` on domain and codomain."""
    T = np.asarray(T, dtype=float)
    Tb = to_base(T, n)
    kind = n.base_kind
    if kind == "L1":
        return float(np.abs(Tb).sum(axis=0).max())
    if kind == "Linf":
        return float(np.abs(Tb).sum(axis=1).max())
    if kind == "L2":
        return float(np.linalg.svd(Tb, compute_uv=False)[0])
    val, _ = sphere_extremize(lambda x: norm(T @ x, n), np.eye(T.shape[1]), n, mode="max", seed=seed)
    return float(val)


def restricted_norm(T, B, n: NormSpec = L2, seed: int = 0) -> float:
    """``||T|_V||`` for V spanned by the columns of ``B``."""
    T = np.asarray(T, dtype=float)
    B = np.asarray(getattr(B, "basis", B), dtype=float)
    if n.is_exact:
        return _exact_restricted_norm(to_base(T, n), basis_to_base(B, n), n.base_kind)
    val, _ = sphere_extremize(lambda x: norm(T @ x, n), B, n, mode="max", seed=seed)
    return float(val)


def min_growth_basis(T, B, n: NormSpec = L2, seed: int = 0) -> float:
    """Slowest growth ``inf ||T x||`` over unit x in span(B)."""
    T = np.asarray(T, dtype=float)
    B = np.asarray(getattr(B, "basis", B), dtype=float)
    if n.is_exact:
        return _exact_min_growth(to_base(T, n), basis_to_base(B, n), n.base_kind)
    val, _ = sphere_extremize(lambda x: norm(T @ x, n), B, n, mode="min", seed=seed)
    return float(val)
