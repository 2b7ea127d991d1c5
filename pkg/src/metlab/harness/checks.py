"""Acceptance checks, one named function per criterion.

Each check returns a :class:`CheckResult`; the numbers that decided it are in
``detail``.  Tolerances are the stated ones and are not parameters.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..cocycle import BasePoint, CocycleSystem, Constant, Rotation, count_inversions, orbit
from ..kingman import MODES, estimate, log_norm_process, lyapunov_spectrum, mode_interval
from ..normed import L1, L2, LINF
from ..opstats import bernstein
from ..oseledets import (
    ProjectionField,
    deflate,
    default_eps,
    equivariance_residual,
    fast_space,
    full_decomposition,
    sandwich_at,
    temperedness_profile,
    vector_growth_rate,
)
from .instances import verify_contraction, verify_snumber
from .scenarios import CATALOG, build_scenario, strong_law_oracle


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}"


def _timed(name):
    def wrap(fn):
        def run(**kw):
            t0 = time.perf_counter()
            passed, detail = fn(**kw)
            return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.check_name = name
        return run
    return wrap


@_timed("bernstein_oracle")
def bernstein_oracle(seed: int = 0, count: int = 100):
    """Optimized and closed-form rho_k against singular values, L2, d <= 5."""
    t0 = time.perf_counter()
    worst_opt = worst_cf = 0.0
    for i in range(count):
        rng = np.random.default_rng([seed, 11, i])
        d = int(rng.integers(1, 6))
        T = rng.normal(size=(d, d))
        s = np.linalg.svd(T, compute_uv=False)
        for k in range(1, d + 1):
            opt = bernstein(T, k, L2, method="optimized", seed=i).value
            cf = bernstein(T, k, L2, method="closed_form").value
            worst_opt = max(worst_opt, abs(opt - s[k - 1]) / s[k - 1])
            worst_cf = max(worst_cf, abs(cf - s[k - 1]) / s[k - 1])
    runtime = time.perf_counter() - t0
    ok = worst_opt <= 5e-2 and worst_cf <= 1e-8 and runtime <= 60
    return ok, {"worst_optimized_rel": worst_opt, "worst_closed_form_rel": worst_cf, "runtime": runtime}


@_timed("snumber_chain")
def snumber_chain(seed: int = 0, count: int = 200, threads: int = 1):
    """rho_k <= s_k <= 4^(k-1) sqrt((k-1)!) rho_k on L1, L2, Linf instances."""
    reports = verify_snumber(count, seed, threads)
    failed = [i for i, r in enumerate(reports) if not r.passed]
    return not failed, {"instances": count, "failed": failed[:20]}


@_timed("contraction")
def contraction(seed: int = 0, count: int = 500, threads: int = 1):
    """Grassmannian contraction bound, and the simplified bound when Theta > 2 rho_{k+1}."""
    # higher-dimensional instances are Euclidean; the polyhedral norms enter at d = 2
    res = verify_contraction(count, seed, threads, norms=(L2, L2, L2, L1, L2, LINF))
    pre = [i for i, r in enumerate(res) if r["pass"] is None]
    bad = [i for i, r in enumerate(res) if r["pass"] is False]
    simp = [r for r in res if r.get("simplified_pass") is not None]
    bad_simp = [i for i, r in enumerate(res) if r.get("simplified_pass") is False]
    worst = max((r["actual"] / r["bound"] for r in res if r["pass"] is not None and r["bound"] > 0), default=0.0)
    ok = not pre and not bad and not bad_simp
    return ok, {"instances": count, "precondition_failures": pre[:20], "failed": bad[:20],
                "simplified_applicable": len(simp), "simplified_failed": bad_simp[:20],
                "worst_actual_over_bound": worst}


def _constant(A):
    return CocycleSystem(Rotation(), Constant(np.asarray(A, dtype=float)), L2)


@_timed("kingman_modes")
def kingman_modes(seed: int = 0, n: int = 2000):
    """Four estimators on diag(2, 1/2) at n = 64 and on the conjugated i.i.d. diagonal scenario."""
    c = _constant(np.diag([2.0, 0.5]))
    w = BasePoint(0, 0)
    proc = log_norm_process(c)
    const = {m: estimate(proc, w, m, 64).C_hat for m in MODES}
    const_err = max(abs(v - math.log(2)) for v in const.values())
    spec = build_scenario("conjugated_iid_diagonal", seed)
    proc = log_norm_process(spec.cocycle)
    ests = {m: estimate(proc, spec.point, m, n, grid=_tail_grid(n)).C_hat for m in MODES}
    vals = list(ests.values())
    pair = max(abs(a - b) for a in vals for b in vals)
    oracle = {}
    for m in MODES:
        a, b, _ = mode_interval(m, n)
        oracle[m] = float(strong_law_oracle(spec, b - a, orbit(spec.point, a))[0])
    oerr = max(abs(ests[m] - oracle[m]) for m in MODES)
    ok = const_err <= 1e-6 and pair <= 0.05 and oerr <= 0.05
    return ok, {"constant": const, "constant_err": const_err, "iid": ests, "pairwise": pair,
                "oracle": oracle, "oracle_err": oerr}


def _tail_grid(n: int, points: int = 40) -> np.ndarray:
    # the estimate reads the last quarter of the trace; sampling only there changes nothing
    return np.unique(np.linspace(0.75 * n, n, points).round().astype(int))


@_timed("spectrum_recovery")
def spectrum_recovery(seed: int = 0, n: int = 5000):
    """lambda_hat_i against E log|d_i| on the d = 4 conjugated i.i.d. scenario; mu_hat non-increasing."""
    spec = build_scenario("conjugated_iid_diagonal", seed)
    gt = np.array(spec.ground_truth["mu"])
    rep = lyapunov_spectrum(spec.cocycle, spec.point, 4, n)
    gaps = -np.diff(gt)
    err = float(np.max(np.abs(np.asarray(rep.lam) - gt))) if len(rep.lam) == 4 else math.inf
    ok = err <= 0.05 and rep.monotone_violation == 0.0 and bool(np.all(np.diff(rep.mu) <= 0))
    return ok, {"lambda_hat": rep.lam.tolist(), "truth": gt.tolist(), "max_err": err,
                "min_true_gap": float(gaps.min()), "monotone_violation": rep.monotone_violation}


@_timed("fast_space_rate")
def fast_space_rate(seed: int = 0):
    """Slope of log gap_n against -(lambda1 - lambda2); equivariance at the predicted horizon."""
    spec = build_scenario("conjugated_iid_diagonal", seed)
    mu = spec.ground_truth["mu"]
    gap = mu[0] - mu[1]
    eps = default_eps(mu[0], mu[1])
    run = fast_space(spec.cocycle, spec.point, 1, eps, n_max=200, stop_tol=1e-12)
    rel = abs(run.slope + gap) / gap
    n_star = math.ceil(math.log(1e3) / (gap - 4 * eps))

    def E(w):
        # the space at horizon n_star itself, not the best iterate of an unconverged run
        return fast_space(spec.cocycle, w, 1, eps, n_max=n_star, stop_tol=0.0).records[-1].E

    eq = equivariance_residual(spec.cocycle, spec.point, E)
    ok = rel <= 0.3 and eq <= 1e-3
    return ok, {"slope": run.slope, "target": -gap, "relative_error": rel, "n_star": n_star,
                "equivariance": eq}


@_timed("projection_correctness")
def projection_correctness(seed: int = 0):
    """Jordan-like constant cocycle against its eigenprojection; idempotency on every catalog scenario."""
    spec = build_scenario("constant_jordanlike", seed)
    dec = full_decomposition(spec.cocycle, spec.point, 1, pilot_n=64)
    P = dec.Pi_slow.matrix
    oracle = np.array(spec.ground_truth["projection"])
    err = float(np.abs(P - oracle).max())
    idem = {}
    for name in CATALOG:
        s = build_scenario(name, seed)
        d = full_decomposition(s.cocycle, s.point, 1, pilot_n=min(int(s.params["n_max"]), 2000))
        idem[name] = max([d.Pi_slow.idempotency_residual()] + [lv.slow.idempotency_residual for lv in d.levels])
    ok = err <= 1e-6 and max(idem.values()) <= 1e-8
    return ok, {"projection": P.tolist(), "oracle": oracle.tolist(), "entry_err": err, "idempotency": idem}


@_timed("temperedness")
def temperedness(seeds=range(10), n: int = 2000):
    """Mean over seeds of |(1/n) log ||Pi(sigma^n w)|||."""
    vals = []
    for s in seeds:
        spec = build_scenario("conjugated_iid_diagonal", s)
        mu = spec.ground_truth["mu"]
        fld = ProjectionField(spec.cocycle, 1, default_eps(mu[0], mu[1]))
        prof, _ = temperedness_profile(fld, spec.point, n, grid=[n])
        vals.append(abs(prof[-1][1]))
    mean = float(np.mean(vals))
    return mean <= 0.02, {"per_seed": vals, "mean": mean}


@_timed("slow_space_growth")
def slow_space_growth(seed: int = 0, count: int = 100, n_max: int = 400):
    """Vectors in range(Pi) grow at most like lambda2; vectors with a fast part grow like lambda1."""
    spec = build_scenario("conjugated_iid_diagonal", seed)
    c, w = spec.cocycle, spec.point
    mu = spec.ground_truth["mu"]
    fld = ProjectionField(c, 1, default_eps(mu[0], mu[1]))
    Pi = fld(w)
    E = fld.fast(w).basis[:, 0]
    rng = np.random.default_rng([seed, 9])
    slow, fast = [], []
    for _ in range(count):
        x = Pi @ rng.normal(size=c.dim)
        # re-projecting along the orbit keeps rounding from seeding a fast component
        slow.append(vector_growth_rate(c, w, x / np.linalg.norm(x), n_max, 1.0, field=fld))
        y = Pi @ rng.normal(size=c.dim) + rng.choice([-1, 1]) * rng.uniform(0.1, 1.0) * E
        fast.append(vector_growth_rate(c, w, y / np.linalg.norm(y), n_max, 1.0))
    slow_max = max(slow)
    fast_err = max(abs(v - mu[0]) for v in fast)
    ok = slow_max <= mu[1] + 0.05 and fast_err <= 0.05
    return ok, {"slow_max": slow_max, "lambda2": mu[1], "fast_err": fast_err, "lambda1": mu[0],
                "n_max": n_max}


@_timed("deflation")
def deflation(seed: int = 0, n: int = 500, scenarios=("conjugated_iid_diagonal", "triangular_coupled")):
    """Spectrum of the once and twice deflated cocycles against the shifted truth; sandwich at matched points."""
    out, ok = {}, True
    for name in scenarios:
        spec = build_scenario(name, seed)
        mu = spec.ground_truth["mu"]
        c, w = spec.cocycle, spec.point
        cur, errs, sand = c, [], []
        for lev in range(2):
            fld = ProjectionField(cur, 1, default_eps(mu[lev], mu[lev + 1]))
            for t in (0, 3, 7):
                r = sandwich_at(cur, fld, orbit(w, t), 20, 1)
                sand.append(bool(r.passed))
            cur = deflate(cur, fld)
            rep = lyapunov_spectrum(cur, w, c.dim - lev - 1, n, grid=_tail_grid(n, 24))
            shifted = np.array(mu[lev + 1:])
            errs.append(float(np.max(np.abs(rep.mu - shifted))))
        ok = ok and max(errs) <= 0.05 and all(sand)
        out[name] = {"errors": errs, "sandwich": sand}
    return ok, out


@_timed("semi_invertible")
def semi_invertible(seed: int = 0, pilot_n: int = 2000):
    """Full decomposition of rank_deficient_bernoulli with no matrix inversions."""
    spec = build_scenario("rank_deficient_bernoulli", seed)
    mu = spec.ground_truth["mu"]
    with count_inversions() as ctr:
        dec = full_decomposition(spec.cocycle, spec.point, pilot_n=pilot_n, growth_n=200)
    finite = [v for v in mu if math.isfinite(v)]
    err = abs(dec.exponents[0] - mu[0]) if dec.exponents else math.inf
    ok = (dec.complete and len(dec.levels) == len(finite) and err <= 0.05
          and ctr.inversions == 0 and dec.dimension_audit())
    return ok, {"exponents": dec.exponents, "truth": mu, "lambda1_err": err, "inversions": ctr.inversions,
                "solves": ctr.solves, "complete": dec.complete, "dimension_audit": dec.dimension_audit()}


CHECKS = {
    1: bernstein_oracle,
    2: snumber_chain,
    3: contraction,
    4: kingman_modes,
    5: spectrum_recovery,
    6: fast_space_rate,
    7: projection_correctness,
    8: temperedness,
    9: slow_space_growth,
    10: deflation,
    11: semi_invertible,
}
