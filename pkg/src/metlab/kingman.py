"""Stationary subadditive processes, the four Kingman-type estimators, and Lyapunov spectra.

Estimators, for a process ``f_{a->b}`` seen from a base point w:

    forward   f_{0->n} / n
    backward  f_{-n->0} / n
    window    f_{n->2n} / n
    balanced  f_{-n->n} / (2n)

All four converge to the same constant.  ``C_hat`` is the median of the last
quarter of the trace; a ``-inf`` anywhere in that tail makes it ``-inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import BasePoint, CocycleSystem
from .normed import NormSpec
from .opstats import bernstein

MODES = ("forward", "backward", "window", "balanced")
TAU_NUM = 1e-8


@dataclass
class SubadditiveProcess:
    """``evaluator(w, a, b) -> f_{a->b}(w)``, extended real."""

    evaluator: object
    tag: str = "custom"

    def __call__(self, w, a: int, b: int) -> float:
        return float(self.evaluator(w, a, b))


def log_norm_process(c: CocycleSystem, n: NormSpec | None = None) -> SubadditiveProcess:
    n = n or c.norm
    return SubadditiveProcess(lambda w, a, b: c.evaluate_interval(w, a, b).log_norm(n), "log-norm")


def log_volume_process(c: CocycleSystem, k: int) -> SubadditiveProcess:
    """``log ||wedge^k L_{a->b}||``, the sum of the top k log singular values."""
    return SubadditiveProcess(lambda w, a, b: c.log_volume(w, a, b, k), f"log-volume-{k}")


@dataclass
class RhoEvaluation:
    value: float
    floor_hit: bool


# Below this ratio s_k / s_1 a double-precision matrix no longer resolves s_k.
RESOLUTION_FLOOR = 1e-11


def log_rho(c: CocycleSystem, w: BasePoint, a: int, b: int, k: int, n: NormSpec | None = None,
            seed: int = 0) -> RhoEvaluation:
    """``log rho_k(L_{a->b}(w))`` in norm ``n``.

    Weighted Euclidean norms go through exterior powers and are exact at any
    horizon.  Other norms evaluate rho_k on the scaled product; when s_k/s_1
    drops below :data:`RESOLUTION_FLOOR` the product no longer carries rho_k
    and the Euclidean value is returned with ``floor_hit`` set.  The two agree
    up to a bounded factor, so the exponents are unaffected.
    """
    n = n or c.norm
    if n.base_kind == "L2":
        return RhoEvaluation(c.log_singular_value(w, a, b, k), False)
    euclid = c.log_singular_value(w, a, b, k)
    if euclid == -math.inf:
        return RhoEvaluation(-math.inf, False)
    if euclid - c.log_singular_value(w, a, b, 1) < math.log(RESOLUTION_FLOOR):
        return RhoEvaluation(euclid, True)
    S = c.evaluate_interval(w, a, b)
    v = bernstein(S.matrix, k, n, seed=seed).value
    if v <= 0:
        return RhoEvaluation(euclid, True)
    return RhoEvaluation(math.log(v) + S.log_scale, False)


def log_rho_process(c: CocycleSystem, k: int, n: NormSpec | None = None) -> SubadditiveProcess:
    """``log rho_k(L_{a->b})``.  Not subadditive in general for k >= 2."""
    return SubadditiveProcess(lambda w, a, b: log_rho(c, w, a, b, k, n).value, f"log-rho-{k}")


def additive_process(values, tag: str = "additive") -> SubadditiveProcess:
    """``f_{a->b} = sum_{a <= i < b} values(w, i)``."""

    def f(w, a, b):
        return float(sum(values(w, i) for i in range(a, b)))

    return SubadditiveProcess(f, tag)


# ---------------------------------------------------------------------------
# Estimators.

@dataclass
class SubadditiveEstimate:
    mode: str
    C_hat: float
    trace: list
    n_max: int
    seed: int | None = None
    tail: float = 0.25

    def to_json(self) -> dict:
        return {"mode": self.mode, "C_hat": _jnum(self.C_hat), "n_max": self.n_max, "seed": self.seed,
                "trace": [[n, _jnum(v)] for n, v in self.trace]}


def _jnum(x):
    return x if math.isfinite(x) else ("-inf" if x < 0 else ("inf" if x > 0 else "nan"))


def default_grid(n_max: int, points: int = 400) -> np.ndarray:
    return np.unique(np.linspace(1, n_max, min(n_max, points)).round().astype(int))


def mode_interval(mode: str, n: int) -> tuple[int, int, int]:
    """``(a, b, divisor)`` for the statistic of ``mode`` at step n."""
    if mode == "forward":
        return 0, n, n
    if mode == "backward":
        return -n, 0, n
    if mode == "window":
        return n, 2 * n, n
    if mode == "balanced":
        return -n, n, 2 * n
    raise ValueError(f"unknown mode {mode!r}")


def tail_estimate(values, tail: float = 0.25) -> float:
    v = np.asarray(values, dtype=float)
    t = v[len(v) - max(1, int(math.ceil(tail * len(v)))):]
    if np.any(t == -np.inf):
        return -math.inf
    return float(np.median(t))


def estimate(proc, w, mode: str, n_max: int, grid=None, tail: float = 0.25, seed: int | None = None
             ) -> SubadditiveEstimate:
    """Trace of the ``mode`` statistic over ``grid`` (default: up to 400 points in [1, n_max])."""
    if n_max < 8:
        raise ValueError("n_max must be at least 8")
    grid = default_grid(n_max) if grid is None else np.asarray(grid, dtype=int)
    trace = []
    for n in grid:
        a, b, div = mode_interval(mode, int(n))
        trace.append((int(n), proc(w, a, b) / div))
    return SubadditiveEstimate(mode, tail_estimate([v for _, v in trace], tail), trace, n_max, seed, tail)


@dataclass
class SubadditivityReport:
    worst: float
    worst_at: tuple | None
    samples: int

    @property
    def passed(self) -> bool:
        return self.worst <= TAU_NUM

    def __bool__(self):
        return self.passed


def check_subadditivity(proc, samples: int = 200, seed: int = 0, points=None, span: int = 40
                        ) -> SubadditivityReport:
    """Worst ``f_{a->b} - f_{a->c} - f_{c->b}`` over random triples a <= c <= b.

    ``points`` is a callable ``rng -> base point``; by default the integer 0.
    """
    rng = np.random.default_rng(seed)
    worst, where = -math.inf, None
    for _ in range(samples):
        w = points(rng) if points is not None else 0
        a, c_, b = np.sort(rng.integers(-span, span, size=3))
        a, c_, b = int(a), int(c_), int(b)
        lhs = proc(w, a, b)
        rhs = proc(w, a, c_) + proc(w, c_, b)
        if lhs == -math.inf:
            viol = -math.inf
        elif rhs == -math.inf:
            viol = math.inf
        else:
            viol = (lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
        if viol > worst:
            worst, where = viol, (w, a, c_, b)
    return SubadditivityReport(worst, where, samples)


# ---------------------------------------------------------------------------
# Spectrum.

@dataclass
class SpectrumReport:
    mu: np.ndarray
    lam: np.ndarray
    mult: np.ndarray
    nu_hat: float
    gap_threshold: float
    mode: str = "forward"
    traces: dict = field(default_factory=dict)
    monotone_violation: float = 0.0
    floor_hits: int = 0
    caveat: str = "nu_hat is mu at the largest computed k; the k -> infinity limit is truncated at the dimension"

    @property
    def finite_levels(self) -> int:
        return int(np.sum(np.isfinite(self.lam)))

    def to_json(self) -> dict:
        return {
            "mu": [_jnum(float(v)) for v in self.mu],
            "lambda": [_jnum(float(v)) for v in self.lam],
            "multiplicity": [int(m) for m in self.mult],
            "nu_hat": _jnum(self.nu_hat),
            "gap_threshold": self.gap_threshold,
            "mode": self.mode,
            "monotone_violation": self.monotone_violation,
            "floor_hits": self.floor_hits,
            "caveat": self.caveat,
        }


def cluster_exponents(mu, gap_threshold: float = 0.1):
    """Group a non-increasing sequence into levels ``(lambda_i, m_i)``.

    Consecutive values closer than ``gap_threshold`` share a level; the level
    value is the first ``mu`` in it.  All ``-inf`` values form one level.
    """
    lam, mult = [], []
    prev = None
    for v in mu:
        v = float(v)
        same = prev is not None and (
            (v == -math.inf and prev == -math.inf)
            or (math.isfinite(v) and math.isfinite(prev) and prev - v < gap_threshold))
        if same:
            mult[-1] += 1
        else:
            lam.append(v)
            mult.append(1)
        prev = v
    return np.array(lam), np.array(mult, dtype=int)


def lyapunov_spectrum(c: CocycleSystem, w, k_max: int | None = None, n_max: int = 2000,
                      mode: str = "forward", gap_threshold: float = 0.1, n: NormSpec | None = None,
                      grid=None, seed: int = 0, tol: float = 1e-6) -> SpectrumReport:
    """Estimate ``mu_1 >= ... >= mu_kmax`` from the processes ``log rho_k(L_{a->b})``."""
    d = c.dim
    k_max = d if k_max is None else k_max
    if not 1 <= k_max <= d:
        raise ValueError("k_max must lie in [1, d]")
    n = n or c.norm
    if grid is None:
        grid = default_grid(n_max, 400 if n.base_kind == "L2" else 24)
    grid = np.asarray(grid, dtype=int)
    vals = np.empty((k_max, len(grid)))
    floor_hits = 0
    for j, step in enumerate(grid):
        a, b, div = mode_interval(mode, int(step))
        for k in range(1, k_max + 1):
            r = log_rho(c, w, a, b, k, n, seed)
            floor_hits += r.floor_hit
            vals[k - 1, j] = r.value / div
    with np.errstate(invalid="ignore"):
        diffs = np.diff(vals, axis=0)
    diffs = np.where(np.isnan(diffs), 0.0, diffs)
    violation = float(max(diffs.max(initial=0.0), 0.0))
    mu = np.array([tail_estimate(vals[k]) for k in range(k_max)])
    if violation > tol:
        # non-monotone estimates point at optimizer trouble; keep the values but sort them
        mu = -np.sort(-mu)
    lam, mult = cluster_exponents(mu, gap_threshold)
    traces = {k + 1: list(zip(grid.tolist(), vals[k].tolist())) for k in range(k_max)}
    return SpectrumReport(mu, lam, mult, float(mu[-1]), gap_threshold, mode, traces, violation, floor_hits)
