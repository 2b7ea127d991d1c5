"""Catalog of cocycle scenarios with ground truth where it is known in closed form.

Ground-truth oracles (diagonal powers, eigendecompositions, symbol averages
and orbit strong-law averages) live here so the core never consults them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..cocycle import (
    BasePoint,
    BernoulliShift,
    CocycleSystem,
    ConjugatedDiagonal,
    Constant,
    Rotation,
    RotationCell,
    SymbolTable,
    base_from_json,
    generator_from_json,
)
from ..normed import L2, NormSpec

SCHEMA = 1
EXPERIMENTS = ("spectrum", "decompose", "kingman_compare", "verify_lemmas")


@dataclass
class ScenarioSpec:
    name: str
    seed: int
    cocycle: CocycleSystem | None
    point: BasePoint = field(default_factory=lambda: BasePoint(0, 0))
    experiment: str = "spectrum"
    params: dict = field(default_factory=dict)
    ground_truth: dict | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.seed is None:
            raise ValueError("scenarios must be seeded")

    def to_json(self) -> dict:
        out = {"schema": SCHEMA, "name": self.name, "seed": self.seed, "experiment": self.experiment,
               "params": self.params, "point": self.point.to_json()}
        if self.cocycle is not None:
            out.update(self.cocycle.to_json())
        if self.ground_truth is not None:
            out["ground_truth"] = _json_safe(self.ground_truth)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioSpec":
        if obj.get("schema") != SCHEMA:
            raise ValueError(f"unsupported scenario schema {obj.get('schema')!r}")
        if "seed" not in obj:
            raise ValueError("scenario has no seed")
        name = obj.get("name", "custom")
        seed = int(obj["seed"])
        if name in CATALOG and "generator" not in obj:
            spec = build_scenario(name, seed, **obj.get("options", {}))
            spec.experiment = obj.get("experiment", spec.experiment)
            spec.params.update(obj.get("params", {}))
            return spec
        c = None
        if "generator" in obj:
            c = CocycleSystem(base_from_json(obj["base"]), generator_from_json(obj["generator"]),
                              NormSpec.from_json(obj.get("norm", {"kind": "L2"})))
        point = BasePoint.from_json(obj["point"]) if "point" in obj else BasePoint(0, 0)
        gt = obj.get("ground_truth")
        if gt is not None:
            gt = {k: ([-math.inf if v == "-inf" else v for v in val] if isinstance(val, list) else val)
                  for k, val in gt.items()}
        return cls(name, seed, c, point, obj.get("experiment", "spectrum"), dict(obj.get("params", {})), gt)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# Oracles.

def eigen_oracle(A) -> dict:
    """Exponents (log moduli of eigenvalues, with multiplicity, decreasing) of a constant cocycle."""
    ev = np.linalg.eigvals(np.asarray(A, dtype=float))
    with np.errstate(divide="ignore"):
        lam = np.sort(np.log(np.abs(ev)))[::-1]
    return {"mu": lam.tolist()}


def eigenprojection_oracle(A, k: int) -> np.ndarray:
    """Spectral projection of A onto the eigenvectors of its d-k smallest-modulus eigenvalues."""
    ev, V = np.linalg.eig(np.asarray(A, dtype=float))
    order = np.argsort(-np.abs(ev))
    ev, V = ev[order], V[:, order]
    W = np.linalg.inv(V)
    return np.real(V[:, k:] @ W[k:, :])


def symbol_average(diags, probs) -> np.ndarray:
    """``E log |d_i|`` for i.i.d. diagonal symbols (``-inf`` when a zero has positive mass)."""
    with np.errstate(divide="ignore"):
        L = np.log(np.abs(np.asarray(diags, dtype=float)))
    probs = np.asarray(probs, dtype=float)
    out = []
    for i in range(L.shape[1]):
        col = L[:, i]
        live = probs > 0
        if np.any(np.isneginf(col) & live):
            out.append(-math.inf)
        else:
            out.append(float(probs[live] @ col[live]))
    return np.array(out)


def strong_law_oracle(spec: ScenarioSpec, n: int, w: BasePoint | None = None) -> np.ndarray:
    """Orbit averages ``(1/n) sum_j log|d_i(sigma^j w)|`` of the diagonal symbols, sorted decreasingly."""
    w = w or spec.point
    c = spec.cocycle
    table = spec.ground_truth["log_diag_table"]
    table = np.array([[(-math.inf if v == "-inf" else v) for v in row] for row in table])
    counts = np.zeros(len(table))
    for j in range(n):
        counts[c.base.symbol(BasePoint(w.anchor, w.t + j))] += 1
    with np.errstate(invalid="ignore"):
        avg = np.array([(counts[counts > 0] @ table[counts > 0, i]) / n for i in range(table.shape[1])])
    return np.sort(avg)[::-1]


def _clusters(mu, tol=1e-12):
    lam, mult = [], []
    for v in mu:
        if lam and (v == lam[-1] or (math.isfinite(v) and abs(v - lam[-1]) < tol)):
            mult[-1] += 1
        else:
            lam.append(v)
            mult.append(1)
    return lam, mult


# ---------------------------------------------------------------------------
# Catalog.

def constant_diagonal(seed: int = 0, diag=(3.0, 1.0, 0.25), norm: NormSpec = L2) -> ScenarioSpec:
    diag = np.asarray(diag, dtype=float)
    c = CocycleSystem(Rotation(), Constant(np.diag(diag)), norm)
    mu = eigen_oracle(np.diag(diag))["mu"]
    lam, mult = _clusters(mu)
    order = np.argsort(-np.abs(diag), kind="stable")
    gt = {"mu": mu, "lambda": lam, "multiplicity": mult,
          "E": [np.eye(len(diag))[:, [i]].tolist() for i in order]}
    return ScenarioSpec("constant_diagonal", seed, c, BasePoint(0, 0), "spectrum",
                        {"n_max": 64, "tol": 1e-6}, gt)


JORDANLIKE = ((2.0, 1.0), (0.0, 0.5))


def constant_jordanlike(seed: int = 0, A=JORDANLIKE, norm: NormSpec = L2) -> ScenarioSpec:
    A = np.asarray(A, dtype=float)
    c = CocycleSystem(Rotation(), Constant(A), norm)
    mu = eigen_oracle(A)["mu"]
    lam, mult = _clusters(mu)
    ev, V = np.linalg.eig(A)
    top = np.real(V[:, np.argmax(np.abs(ev))])
    gt = {"mu": mu, "lambda": lam, "multiplicity": mult, "E": [top[:, None].tolist()],
          "projection": eigenprojection_oracle(A, 1).tolist()}
    # non-normal: (1/n) log ||A^n|| approaches log 2 only at rate O(1/n)
    return ScenarioSpec("constant_jordanlike", seed, c, BasePoint(0, 0), "decompose",
                        {"n_max": 2000, "tol": 1e-3}, gt)


IID_LAMBDA = (0.9, 0.4, -0.1, -0.7)


def _diag_table(rng, lam, noise, m):
    z = rng.normal(size=(m, len(lam)))
    z -= z.mean(axis=0)
    z *= noise / z.std(axis=0)
    signs = rng.choice([-1.0, 1.0], size=z.shape)
    return signs * np.exp(np.asarray(lam) + z)


def _conditioned(rng, d, spread=0.4):
    return np.eye(d) + spread * rng.normal(size=(d, d)) / math.sqrt(d)


def conjugated_iid_diagonal(seed: int = 0, lam=IID_LAMBDA, noise: float = 0.2, m: int = 8,
                            norm: NormSpec = L2) -> ScenarioSpec:
    """``P diag(d_s) P^-1`` with s i.i.d. uniform on m symbols and ``E log|d_i| = lam_i``."""
    rng = np.random.default_rng([seed, 1])
    d = len(lam)
    D = _diag_table(rng, lam, noise, m)
    P = _conditioned(rng, d)
    probs = np.full(m, 1.0 / m)
    c = CocycleSystem(BernoulliShift(probs, seed), ConjugatedDiagonal(P, D), norm)
    mu = symbol_average(D, probs)
    order = np.argsort(-mu, kind="stable")
    mu = mu[order]
    lam_gt, mult = _clusters(mu.tolist())
    gt = {"mu": mu.tolist(), "lambda": lam_gt, "multiplicity": mult,
          "E": [P[:, [i]].tolist() for i in order], "log_diag_table": np.log(np.abs(D)).tolist()}
    return ScenarioSpec("conjugated_iid_diagonal", seed, c, BasePoint(0, 0), "spectrum",
                        {"n_max": 5000, "tol": 0.05}, gt)


def triangular_coupled(seed: int = 0, lam=(0.6, 0.0, -0.6), noise: float = 0.2, m: int = 8,
                       coupling: float = 0.5, norm: NormSpec = L2) -> ScenarioSpec:
    """i.i.d. upper-triangular matrices; exponents are ``E log|a_ii|`` and the fast spaces move."""
    rng = np.random.default_rng([seed, 2])
    d = len(lam)
    D = _diag_table(rng, lam, noise, m)
    mats = np.array([np.diag(D[s]) + coupling * np.triu(rng.normal(size=(d, d)), 1) for s in range(m)])
    probs = np.full(m, 1.0 / m)
    c = CocycleSystem(BernoulliShift(probs, seed), SymbolTable(mats), norm)
    mu = np.sort(symbol_average(D, probs))[::-1]
    lam_gt, mult = _clusters(mu.tolist())
    gt = {"mu": mu.tolist(), "lambda": lam_gt, "multiplicity": mult,
          "log_diag_table": np.log(np.abs(D)).tolist()}
    return ScenarioSpec("triangular_coupled", seed, c, BasePoint(0, 0), "spectrum",
                        {"n_max": 5000, "tol": 0.05}, gt)


def rank_deficient_bernoulli(seed: int = 0, lam=(0.8, 0.2, -0.4, 0.0), noise: float = 0.2, m: int = 10,
                             norm: NormSpec = L2) -> ScenarioSpec:
    """Conjugated diagonal cocycle whose last diagonal entry vanishes on one symbol in ten.

    The last exponent is ``-inf``; the three finite exponents are symbol averages.
    """
    rng = np.random.default_rng([seed, 3])
    d = len(lam)
    D = _diag_table(rng, lam, noise, m)
    D[0, -1] = 0.0
    P = _conditioned(rng, d)
    probs = np.full(m, 1.0 / m)
    c = CocycleSystem(BernoulliShift(probs, seed), ConjugatedDiagonal(P, D), norm)
    mu = symbol_average(D, probs)
    order = np.argsort(-mu, kind="stable")
    mu = mu[order]
    lam_gt, mult = _clusters(mu.tolist())
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(D))
    gt = {"mu": mu.tolist(), "lambda": lam_gt, "multiplicity": mult,
          "E": [P[:, [i]].tolist() for i in order if math.isfinite(mu[list(order).index(i)])],
          "untracked": [i for i, v in enumerate(mu) if not math.isfinite(v)],
          "singular_probability": float(probs[0]),
          "log_diag_table": logs.tolist()}
    return ScenarioSpec("rank_deficient_bernoulli", seed, c, BasePoint(0, 0), "decompose",
                        {"n_max": 2000, "tol": 0.05}, gt)


def rotation_piecewise(seed: int = 0, d: int = 2, cells: int = 3, norm: NormSpec = L2) -> ScenarioSpec:
    """Golden rotation driving finitely many matrices on arcs.

    Only the sum of the exponents is known in closed form:
    ``sum_i lambda_i = sum_cells |arc| log|det A|`` by unique ergodicity.
    """
    rng = np.random.default_rng([seed, 4])
    breaks = np.sort(rng.uniform(0.1, 0.9, size=cells - 1))
    mats = []
    for _ in range(cells):
        A = rng.normal(size=(d, d))
        A[0] *= 2.0
        mats.append(A)
    mats = np.array(mats)
    c = CocycleSystem(Rotation(), RotationCell(breaks, mats), norm)
    arcs = np.diff(np.concatenate([[0.0], breaks, [1.0]]))
    total = float(arcs @ np.log(np.abs(np.linalg.det(mats))))
    return ScenarioSpec("rotation_piecewise", seed, c, c.base.point(0.1), "spectrum",
                        {"n_max": 5000, "tol": 0.05}, {"sum_lambda": total})


CATALOG = {
    "constant_diagonal": constant_diagonal,
    "constant_jordanlike": constant_jordanlike,
    "conjugated_iid_diagonal": conjugated_iid_diagonal,
    "triangular_coupled": triangular_coupled,
    "rank_deficient_bernoulli": rank_deficient_bernoulli,
    "rotation_piecewise": rotation_piecewise,
}


def build_scenario(name: str, seed: int = 0, **options) -> ScenarioSpec:
    """Catalog scenario ``name`` seeded with ``seed``."""
    if name not in CATALOG:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(CATALOG)}")
    return CATALOG[name](seed, **options)
