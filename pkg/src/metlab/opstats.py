"""Growth statistics of operators and executable checks of their inequalities.

``min_growth`` is the slowest growth of unit vectors of a subspace,
``bernstein`` its supremum over k-dimensional subspaces and ``gelfand`` the
infimum of restricted norms over codimension-(k-1) subspaces.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .grassmannian import (
    DenseEnumeration,
    DimensionCollapse,
    Projection,
    Subspace,
    grassmann_extremize,
    hausdorff_distance,
    push_forward,
)
from .normed import (
    L2,
    TAU_OPT,
    NormSpec,
    min_growth_basis,
    norm,
    operator_norm,
    restricted_norm,
    sphere_extremize,
    to_base,
)

REL_SLACK = 1e-6


class PreconditionError(ValueError):
    """Inputs violate the hypotheses of the inequality being checked."""


@dataclass
class GrowthReport:
    k: int
    value: float
    witness: Subspace
    method: str
    certified_gap: float


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, (int, float)):
            a = np.array([a], dtype=float)
        a = np.ascontiguousarray(np.asarray(a, dtype=float))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def _inner_gap(value: float, n: NormSpec) -> float:
    return (1e-12 if n.is_exact else TAU_OPT) * max(1.0, abs(value))


def min_growth(T, V, n: NormSpec = L2, seed: int = 0) -> float:
    """Slowest growth of unit vectors of V under T."""
    B = getattr(V, "basis", V)
    if np.shape(B)[1] == 0:
        raise ValueError("subspace must be at least one-dimensional")
    return min_growth_basis(T, B, n, seed=seed)


def _l2_weighted_svd(T, n: NormSpec):
    """SVD of T in the coordinates where ``n`` is a plain p-norm."""
    Tb = to_base(np.asarray(T, dtype=float), n)
    _, s, vh = np.linalg.svd(Tb)
    w = n.weight_vector(Tb.shape[0])
    return s, vh.T / w[:, None]


def _norm_attaining_vector(T, n: NormSpec) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    Tb = to_base(T, n)
    w = n.weight_vector(T.shape[0])
    kind = n.base_kind
    if kind == "L1":
        x = np.eye(T.shape[0])[int(np.abs(Tb).sum(axis=0).argmax())]
    elif kind == "Linf":
        i = int(np.abs(Tb).sum(axis=1).argmax())
        x = np.where(Tb[i] >= 0, 1.0, -1.0)
    elif kind == "L2":
        x = np.linalg.svd(Tb)[2][0]
    else:
        return sphere_extremize(lambda y: norm(T @ y, n), np.eye(len(T)), n, "max")[1]
    return x / w


def bernstein(T, k: int, n: NormSpec = L2, method: str = "auto", seed: int = 0,
              budget: int = 2000) -> GrowthReport:
    """k-th Bernstein number of T with its near-optimal subspace.

    ``method`` is 'closed_form' (L2 family only), 'optimized', 'enumerated'
    or 'auto' (closed form when available).
    """
    T = np.asarray(T, dtype=float)
    d = T.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if method == "auto":
        method = "closed_form" if n.base_kind == "L2" else "optimized"
    if method == "closed_form":
        if n.base_kind != "L2":
            raise ValueError("closed form Bernstein numbers need a Euclidean norm")
        s, right = _l2_weighted_svd(T, n)
        W = Subspace.span(right[:, :k], dim=k)
        return GrowthReport(k, float(s[k - 1]), W, "closed_form", 1e-12 * max(1.0, s[0]))
    if method == "enumerated":
        enum = DenseEnumeration(d, k)
        best, wit = -1.0, None
        for i in range(1, budget + 1):
            V = enum(i)
            if V is None:
                continue
            g = min_growth(T, V, n, seed=seed)
            if g > best:
                best, wit = g, V
        return GrowthReport(k, best, wit, "enumerated", _inner_gap(best, n))
    if method != "optimized":
        raise ValueError(f"unknown method {method!r}")
    if k == 1:
        x = _norm_attaining_vector(T, n)
        val = operator_norm(T, n, seed=seed)
        return GrowthReport(1, val, Subspace.span(x[:, None]), "optimized", _inner_gap(val, n))
    if k == d:
        val = min_growth(T, np.eye(d), n, seed=seed)
        return GrowthReport(k, val, Subspace(np.eye(d)), "optimized", _inner_gap(val, n))
    _, right = _l2_weighted_svd(T, n)
    start = np.linalg.qr(right[:, :k])[0]
    val, B = grassmann_extremize(lambda B: min_growth_basis(T, B, n, seed=seed), d, k, "max",
                                 starts=[start], seed=seed)
    return GrowthReport(k, val, Subspace.span(B, dim=k), "optimized", _inner_gap(val, n))


def bernstein_numbers(T, n: NormSpec = L2, k_max: int | None = None, **kw) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    k_max = k_max or T.shape[0]
    return np.array([bernstein(T, k, n, **kw).value for k in range(1, k_max + 1)])


def gelfand_report(T, k: int, n: NormSpec = L2, seed: int = 0):
    """k-th Gelfand number and the codimension-(k-1) subspace attaining it."""
    T = np.asarray(T, dtype=float)
    d = T.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if k == 1:
        return operator_norm(T, n, seed=seed), Subspace(np.eye(d))
    if n.base_kind == "L2":
        s, right = _l2_weighted_svd(T, n)
        w = n.weight_vector(d)
        # annihilators of the weighted top k-1 right singular vectors
        F = (right[:, : k - 1] * (w**2)[:, None])
        V = _annihilated(F)
        return float(s[k - 1]), V
    if k == d:
        val = min_growth(T, np.eye(d), n, seed=seed)
        x = sphere_extremize(lambda y: norm(T @ y, n), np.eye(d), n, "min", seed=seed)[1]
        return val, Subspace.span(x[:, None])
    _, right = _l2_weighted_svd(T, n)
    start = np.linalg.qr(right[:, : k - 1])[0]

    def obj(F):
        return restricted_norm(T, _annihilator_basis(F), n, seed=seed)

    val, F = grassmann_extremize(obj, d, k - 1, "min", starts=[start], seed=seed)
    return val, _annihilated(F)


def _annihilator_basis(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    q = np.linalg.qr(F, mode="complete")[0]
    return q[:, F.shape[1]:]


def _annihilated(F) -> Subspace:
    """Common kernel of the functionals given as columns of F."""
    B = _annihilator_basis(F)
    return Subspace.span(B, dim=B.shape[1])


def gelfand(T, k: int, n: NormSpec = L2, seed: int = 0) -> float:
    return gelfand_report(T, k, n, seed)[0]


# ---------------------------------------------------------------------------
# Checks.

@dataclass
class Inequality:
    name: str
    lhs: float
    rhs: float
    gap: float = 0.0

    @property
    def slack(self) -> float:
        return self.rhs * (1.0 + REL_SLACK) + self.gap - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.slack >= 0.0)


@dataclass
class CheckReport:
    lemma: str
    inputs_digest: str
    rows: list[Inequality] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def __bool__(self):
        return self.passed

    def to_json(self) -> list[dict]:
        return [
            {"lemma": self.lemma, "inputs_digest": self.inputs_digest, "name": r.name,
             "lhs": r.lhs, "rhs": r.rhs, "slack": r.slack, "pass": r.passed}
            for r in self.rows
        ]


def _rho(T, k, n, seed=0) -> GrowthReport:
    return bernstein(T, k, n, seed=seed)


def check_growth_inequalities(T, S, V: Subspace, k: int, n: NormSpec = L2, seed: int = 0) -> CheckReport:
    """Growth bounds for a composition ``S o T`` (T applied first).

    The g-chain on V and the two upper bounds on ``rho_k(S o T)`` are checked.
    The product lower bound ``rho_k(T) rho_k(S) <= rho_k(S o T)`` is false in
    general (take S = T nilpotent), so the valid replacement
    ``max(rho_k(T) rho_d(S), rho_d(T) rho_k(S)) <= rho_k(S o T)`` is checked and
    the literal product form is only recorded in ``info``.
    """
    T = np.asarray(T, dtype=float)
    S = np.asarray(S, dtype=float)
    d = T.shape[0]
    ST = S @ T
    rep = CheckReport("growth_ineq", _digest(T, S, V.basis, k))
    gT = min_growth(T, V, n, seed)
    gST = min_growth(ST, V, n, seed)
    try:
        TV = push_forward(T, V)
        gS_TV = min_growth(S, TV, n, seed)
    except DimensionCollapse:
        gS_TV = 0.0
    eps = 2 * _inner_gap(max(gST, 1.0), n)
    nS, nT_V = operator_norm(S, n, seed), restricted_norm(T, V.basis, n, seed)
    rep.rows.append(Inequality("g_T(V) g_S(TV) <= g_ST(V)", gT * gS_TV, gST, eps))
    rep.rows.append(Inequality("g_ST(V) <= ||T|V|| g_S(TV)", gST, nT_V * gS_TV, eps))
    rep.rows.append(Inequality("g_ST(V) <= g_T(V) ||S||", gST, gT * nS, eps))

    rT, rS, rST = _rho(T, k, n, seed), _rho(S, k, n, seed), _rho(ST, k, n, seed)
    rTd, rSd = _rho(T, d, n, seed).value, _rho(S, d, n, seed).value
    gap = rT.certified_gap + rS.certified_gap + rST.certified_gap + 2 * TAU_OPT * (not n.is_exact)
    rep.rows.append(Inequality("rho_k(ST) <= rho_k(T) ||S||", rST.value, rT.value * nS, gap))
    rep.rows.append(Inequality("rho_k(ST) <= rho_k(S) ||T||", rST.value, rS.value * operator_norm(T, n, seed), gap))
    rep.rows.append(Inequality("max(rho_k(T) rho_d(S), rho_d(T) rho_k(S)) <= rho_k(ST)",
                               max(rT.value * rSd, rTd * rS.value), rST.value, gap))
    literal = Inequality("rho_k(T) rho_k(S) <= rho_k(ST)", rT.value * rS.value, rST.value, gap)
    rep.info["literal_product_lower"] = {"lhs": literal.lhs, "rhs": literal.rhs, "holds": literal.passed}
    return rep


def contraction_bound(rho_next: float, theta: float) -> float:
    r = rho_next / theta
    return 2.0 / (1.0 - r) * r


def check_contraction(T, V: Subspace, W: Subspace, theta: float, n: NormSpec = L2, seed: int = 0) -> dict:
    """Images of two Theta-fast k-subspaces are close: ``d(TV, TW) <= bound``."""
    T = np.asarray(T, dtype=float)
    k = V.dim
    if W.dim != k:
        raise ValueError("V and W must have the same dimension")
    rk = _rho(T, k, n, seed).value
    rk1 = _rho(T, k + 1, n, seed).value if k < T.shape[0] else 0.0
    if not rk1 < theta < rk:
        raise PreconditionError(f"theta={theta:g} not in (rho_k+1, rho_k) = ({rk1:g}, {rk:g})")
    gV, gW = min_growth(T, V, n, seed), min_growth(T, W, n, seed)
    if not (gV > theta and gW > theta):
        raise PreconditionError("V and W must both grow faster than theta")
    actual = hausdorff_distance(push_forward(T, V), push_forward(T, W), n, seed=seed)
    bound = contraction_bound(rk1, theta)
    out = {"bound": bound, "actual": actual, "pass": bool(actual <= bound * (1 + REL_SLACK)),
           "rho_k": rk, "rho_k1": rk1}
    if theta > 2 * rk1:
        simple = 4 * rk1 / theta
        out["simplified_bound"] = simple
        out["simplified_pass"] = bool(actual <= simple * (1 + REL_SLACK))
    return out


def check_sandwich(T, proj: Projection, proj_next: Projection, k: int, l: int, n: NormSpec = L2,
                   seed: int = 0, equiv_tol: float = 1e-9) -> CheckReport:
    """``rho_{k+l}(T) <= rho_l(T Pi) <= 4 ||Pi|| ||Pi'|| rho_{k+l}(T)``.

    ``proj`` maps onto a codimension-k space; ``proj_next`` is its partner at
    the image point with ``Pi' T = T Pi``.  The upper bound is only asserted
    when the kernel of ``proj`` grows faster than T on its range.
    """
    T = np.asarray(T, dtype=float)
    P, Pn = proj.matrix, proj_next.matrix
    d = T.shape[0]
    rep = CheckReport("sandwich", _digest(T, P, Pn, k, l))
    scale = max(1.0, np.abs(T).max())
    resid = float(np.abs(Pn @ T - T @ P).max()) / scale
    codim = d - proj.range.dim
    rep.info.update(equivariance_residual=resid, codim=codim)
    if resid > equiv_tol or codim != k:
        rep.info["hypothesis"] = "failed"
        raise PreconditionError(f"sandwich hypotheses fail (residual {resid:.3g}, codim {codim} vs k={k})")
    TP = T @ P
    r_kl = _rho(T, k + l, n, seed)
    r_l = _rho(TP, l, n, seed)
    gap = r_kl.certified_gap + r_l.certified_gap
    rep.rows.append(Inequality("rho_{k+l}(T) <= rho_l(T Pi)", r_kl.value, r_l.value, gap))
    g_fast = min_growth(T, proj.kernel, n, seed) if proj.kernel.dim else math.inf
    slow_norm = restricted_norm(T, proj.range.basis, n, seed) if proj.range.dim else 0.0
    upper_applies = g_fast > slow_norm
    nP, nPn = operator_norm(P, n, seed), operator_norm(Pn, n, seed)
    rep.info.update(upper_applies=upper_applies, norm_pi=nP, norm_pi_next=nPn)
    if upper_applies:
        rep.rows.append(Inequality("rho_l(T Pi) <= 4 ||Pi|| ||Pi'|| rho_{k+l}(T)", r_l.value,
                                   4 * nP * nPn * r_kl.value, gap))
        single = Inequality("single factor", r_l.value, 4 * nPn * r_kl.value, gap)
        rep.info["single_factor_holds"] = single.passed
    rep.info["hypothesis"] = "ok"
    return rep


def snumber_constant(k: int) -> float:
    return 4.0 ** (k - 1) * math.sqrt(math.factorial(k - 1))


def check_snumber_chain(T, k_max: int, n: NormSpec = L2, seed: int = 0) -> CheckReport:
    """``rho_k <= s_k <= 4^(k-1) sqrt((k-1)!) rho_k`` for k = 1..k_max."""
    T = np.asarray(T, dtype=float)
    if k_max > T.shape[0]:
        raise ValueError("k_max exceeds the dimension")
    rep = CheckReport("snumber_chain", _digest(T, k_max))
    for k in range(1, k_max + 1):
        r = _rho(T, k, n, seed)
        s = gelfand(T, k, n, seed)
        gap = r.certified_gap + _inner_gap(s, n)
        rep.rows.append(Inequality(f"rho_{k} <= s_{k}", r.value, s, gap))
        rep.rows.append(Inequality(f"s_{k} <= c_{k} rho_{k}", s, snumber_constant(k) * r.value, gap))
        rep.info[k] = {"rho": r.value, "s": s}
    return rep
