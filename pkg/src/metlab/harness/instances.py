"""Seeded random instances for the operator-statistics checks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..grassmannian import Subspace, oblique_projection
from ..normed import L1, L2, LINF, NormSpec
from ..opstats import (
    PreconditionError,
    bernstein,
    check_contraction,
    check_growth_inequalities,
    check_sandwich,
    check_snumber_chain,
    min_growth,
)

NORMS = (L1, L2, LINF)


def _rng(seed: int, i: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, i])


def growth_instance(seed: int, i: int, norms=NORMS):
    rng = _rng(seed, i, 1)
    n = norms[i % len(norms)]
    d = int(rng.integers(2, 4 if n.base_kind != "L2" else 6))
    T, S = rng.normal(size=(2, d, d))
    j = int(rng.integers(1, d + 1))
    V = Subspace.span(rng.normal(size=(d, j)), dim=j)
    k = int(rng.integers(1, d + 1))
    return T, S, V, k, n


def snumber_instance(seed: int, i: int, norms=NORMS):
    rng = _rng(seed, i, 2)
    n = norms[i % len(norms)]
    d = int(rng.integers(2, 5))
    T = rng.normal(size=(d, d))
    if rng.random() < 0.15:
        # rank-deficient instances exercise the zero end of the chain
        T[:, -1] = T[:, :-1] @ rng.normal(size=d - 1)
    return T, min(d, 3), n


def contraction_instance(seed: int, i: int, norms=(L2,), max_tries: int = 60):
    """``(T, V, W, theta, n)`` meeting the contraction preconditions."""
    rng = _rng(seed, i, 3)
    n = norms[i % len(norms)]
    if n.base_kind == "L2":
        d = int(rng.integers(2, 5))
        k = int(rng.integers(1, d))
    else:
        d, k = 2, 1
    U = np.linalg.qr(rng.normal(size=(d, d)))[0]
    Vt = np.linalg.qr(rng.normal(size=(d, d)))[0]
    s = np.sort(np.exp(rng.uniform(-1.5, 1.5, size=d)))[::-1]
    s[k:] *= rng.uniform(0.05, 0.7)
    T = U @ np.diag(s) @ Vt.T
    rk = bernstein(T, k, n).value
    rk1 = bernstein(T, k + 1, n).value
    theta = rk1 + (rk - rk1) * rng.uniform(0.05, 0.95)
    top = bernstein(T, k, n).witness.basis
    found = []
    scale = rng.uniform(0.05, 1.0)
    for _ in range(max_tries):
        cand = Subspace.span(top + scale * rng.normal(size=top.shape), dim=k)
        if min_growth(T, cand, n) > theta:
            found.append(cand)
            if len(found) == 2:
                return T, found[0], found[1], float(theta), n
        else:
            scale *= 0.7
    return T, Subspace.span(top, dim=k), Subspace.span(top, dim=k), float(theta), n


def sandwich_instance(seed: int, i: int, n: NormSpec = L2):
    """Diagonal-conjugated ``T = P D P^-1`` with its spectral projection killing the top k directions."""
    rng = _rng(seed, i, 4)
    d = int(rng.integers(2, 5))
    k = int(rng.integers(1, d))
    l = int(rng.integers(1, d - k + 1))
    P = np.eye(d) + 0.5 * rng.normal(size=(d, d)) / math.sqrt(d)
    s = np.sort(np.exp(rng.uniform(-1.0, 2.0, size=d)))[::-1] * rng.choice([-1.0, 1.0], size=d)
    T = P @ np.diag(s) @ np.linalg.solve(P, np.eye(d))
    proj = oblique_projection(Subspace.span(P[:, k:], dim=d - k), Subspace.span(P[:, :k], dim=k))
    return T, proj, proj, k, l, n


def _run_many(fn, count: int, threads: int):
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(count)))


def verify_growth(count: int, seed: int = 0, threads: int = 1, norms=NORMS) -> list:
    def one(i):
        T, S, V, k, n = growth_instance(seed, i, norms)
        return check_growth_inequalities(T, S, V, k, n, seed=i)

    return _run_many(one, count, threads)


def verify_snumber(count: int, seed: int = 0, threads: int = 1, norms=NORMS) -> list:
    def one(i):
        T, k_max, n = snumber_instance(seed, i, norms)
        return check_snumber_chain(T, k_max, n, seed=i)

    return _run_many(one, count, threads)


def verify_contraction(count: int, seed: int = 0, threads: int = 1, norms=(L2,)) -> list:
    def one(i):
        T, V, W, theta, n = contraction_instance(seed, i, norms)
        try:
            return check_contraction(T, V, W, theta, n, seed=i)
        except PreconditionError as exc:
            return {"pass": None, "precondition": str(exc)}

    return _run_many(one, count, threads)


def verify_sandwich(count: int, seed: int = 0, threads: int = 1) -> list:
    def one(i):
        T, proj, proj_next, k, l, n = sandwich_instance(seed, i)
        return check_sandwich(T, proj, proj_next, k, l, n, seed=i)

    return _run_many(one, count, threads)
