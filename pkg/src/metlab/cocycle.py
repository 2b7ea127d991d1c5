"""Invertible base systems, matrix generators and interval products of a cocycle.

A base point is a pair ``(anchor, t)``: the state reached from ``anchor`` after
``t`` applications of the base map.  Orbits only move ``t``, so going forward
and back is exact, and interval products can be keyed on absolute times.
That makes ``L_{a->b}`` at ``orbit(w, l)`` literally the same computation as
``L_{a+l->b+l}`` at ``w``.

Long products are carried as :class:`ScaledMatrix` values, a matrix with
entries of modulus at most 1 times ``2**log2_scale``.  Rescaling by powers of
two is exact, so the bookkeeping adds no rounding of its own.
"""

from __future__ import annotations

import contextlib
import hashlib
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .normed import L2, NormSpec, _combos, operator_norm, to_base

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Base systems.

@dataclass(frozen=True)
class BasePoint:
    anchor: object
    t: int = 0

    def to_json(self) -> dict:
        a = list(self.anchor) if isinstance(self.anchor, tuple) else self.anchor
        return {"anchor": a, "t": self.t}

    @classmethod
    def from_json(cls, obj) -> "BasePoint":
        a = obj["anchor"]
        return cls(tuple(a) if isinstance(a, list) else a, int(obj.get("t", 0)))


def orbit(w: BasePoint, n: int) -> BasePoint:
    """``sigma^n w`` for any integer n."""
    return BasePoint(w.anchor, w.t + int(n))


ROTATION_Q = 2**89 - 1
CAT_P = 2**61 - 1


def _golden_numerator(q: int) -> int:
    # floor(q (sqrt 5 - 1) / 2), an integer surrogate of the golden rotation
    return (math.isqrt(5 * q * q) - q) // 2


class Rotation:
    """Circle rotation ``x -> x + alpha mod 1`` on the lattice ``Z / q``.

    ``alpha = a / q`` with ``gcd(a, q) = 1``; the default is the golden
    rotation on a Mersenne-prime lattice, period about 6e26.
    """

    kind = "rotation"

    def __init__(self, q: int = ROTATION_Q, a: int | None = None):
        self.q = int(q)
        self.a = int(a) if a is not None else _golden_numerator(self.q)
        if math.gcd(self.a, self.q) != 1:
            raise ValueError("rotation numerator must be coprime to the lattice size")

    def state(self, w: BasePoint) -> int:
        return (int(w.anchor) + w.t * self.a) % self.q

    def coords(self, w: BasePoint) -> np.ndarray:
        return np.array([self.state(w) / self.q])

    def point(self, x: float) -> BasePoint:
        return BasePoint(int(round(x * self.q)) % self.q, 0)

    def sample(self, rng: np.random.Generator) -> BasePoint:
        hi, lo = (int(v) for v in rng.integers(0, 2**62, size=2))
        return BasePoint((hi * 2**62 + lo) % self.q, 0)

    def to_json(self) -> dict:
        return {"kind": self.kind, "q": str(self.q), "a": str(self.a)}


class CatMap:
    """Arnold's cat map ``(x, y) -> (2x + y, x + y)`` on ``(Z / p)^2``."""

    kind = "cat_map"
    _F = ((2, 1), (1, 1))
    _F_INV = ((1, -1), (-1, 2))

    def __init__(self, p: int = CAT_P):
        self.p = int(p)

    def _power(self, n: int):
        M = self._F if n >= 0 else self._F_INV
        n = abs(n)
        R = ((1, 0), (0, 1))
        p = self.p
        while n:
            if n & 1:
                R = _mul2(M, R, p)
            M = _mul2(M, M, p)
            n >>= 1
        return R

    def state(self, w: BasePoint) -> tuple[int, int]:
        (a, b), (c, d) = self._power(w.t)
        x, y = w.anchor
        return ((a * x + b * y) % self.p, (c * x + d * y) % self.p)

    def coords(self, w: BasePoint) -> np.ndarray:
        x, y = self.state(w)
        return np.array([x / self.p, y / self.p])

    def sample(self, rng: np.random.Generator) -> BasePoint:
        x, y = (int(v) % self.p for v in rng.integers(0, 2**62, size=2))
        return BasePoint((x, y), 0)

    def to_json(self) -> dict:
        return {"kind": self.kind, "p": str(self.p)}


def _mul2(A, B, p):
    return (
        ((A[0][0] * B[0][0] + A[0][1] * B[1][0]) % p, (A[0][0] * B[0][1] + A[0][1] * B[1][1]) % p),
        ((A[1][0] * B[0][0] + A[1][1] * B[1][0]) % p, (A[1][0] * B[0][1] + A[1][1] * B[1][1]) % p),
    )


class BernoulliShift:
    """Two-sided Bernoulli shift on ``m`` symbols.

    The anchor of a point is an integer offset into a fixed two-sided
    sequence; the symbol at absolute index i is a keyed hash of (seed, i).
    """

    kind = "bernoulli_shift"

    def __init__(self, probs, seed: int = 0):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or len(probs) < 1 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ValueError("probs must be a probability vector")
        self.probs = probs
        self.m = len(probs)
        self.seed = int(seed)
        self._cum = np.cumsum(probs)
        self._cum[-1] = 1.0
        self._key = self.seed.to_bytes(16, "little", signed=True)

    @classmethod
    def uniform(cls, m: int, seed: int = 0) -> "BernoulliShift":
        return cls(np.full(m, 1.0 / m), seed)

    def uniform_at(self, i: int) -> float:
        h = hashlib.blake2b(int(i).to_bytes(16, "little", signed=True), digest_size=8, key=self._key)
        return (int.from_bytes(h.digest(), "little") >> 11) * 2.0**-53

    def symbol_at(self, i: int) -> int:
        return int(np.searchsorted(self._cum, self.uniform_at(i), side="right"))

    def symbol(self, w: BasePoint, k: int = 0) -> int:
        """Symbol at position k of the sequence seen from w."""
        return self.symbol_at(int(w.anchor) + w.t + k)

    def state(self, w: BasePoint) -> int:
        return int(w.anchor) + w.t

    def coords(self, w: BasePoint) -> np.ndarray:
        return np.array([float(self.symbol(w))])

    def sample(self, rng: np.random.Generator) -> BasePoint:
        return BasePoint(int(rng.integers(-2**40, 2**40)), 0)

    def to_json(self) -> dict:
        return {"kind": self.kind, "probs": self.probs.tolist(), "seed": self.seed}


def base_from_json(obj: dict):
    kind = obj["kind"]
    if kind == "rotation":
        return Rotation(int(obj.get("q", ROTATION_Q)), int(obj["a"]) if "a" in obj else None)
    if kind == "cat_map":
        return CatMap(int(obj.get("p", CAT_P)))
    if kind == "bernoulli_shift":
        if "probs" in obj:
            return BernoulliShift(obj["probs"], obj.get("seed", 0))
        return BernoulliShift.uniform(int(obj["m"]), obj.get("seed", 0))
    raise ValueError(f"unknown base kind {kind!r}")


# ---------------------------------------------------------------------------
# Generators.

class Constant:
    kind = "constant"

    def __init__(self, A):
        self.A = np.array(A, dtype=float)
        self.dim = self.A.shape[0]

    def __call__(self, base, w: BasePoint) -> np.ndarray:
        return self.A

    def to_json(self) -> dict:
        return {"kind": self.kind, "A": self.A.tolist()}


class SymbolTable:
    """One matrix per shift symbol."""

    kind = "symbol_table"

    def __init__(self, mats):
        self.mats = np.array(mats, dtype=float)
        self.dim = self.mats.shape[1]

    def __call__(self, base, w: BasePoint) -> np.ndarray:
        return self.mats[base.symbol(w)]

    def to_json(self) -> dict:
        return {"kind": self.kind, "mats": self.mats.tolist()}


class ConjugatedDiagonal(SymbolTable):
    """``P diag(D[s]) P^-1`` for shift symbol s.

    ``P^-1`` is formed once, at construction.
    """

    kind = "conjugated_diagonal"

    def __init__(self, P, diags):
        self.P = np.array(P, dtype=float)
        self.diags = np.array(diags, dtype=float)
        d = len(self.P)
        P_inv = np.linalg.solve(self.P, np.eye(d))
        super().__init__([self.P @ np.diag(D) @ P_inv for D in self.diags])

    def to_json(self) -> dict:
        return {"kind": self.kind, "P": self.P.tolist(), "diags": self.diags.tolist()}


class RotationCell:
    """Piecewise constant in the first base coordinate: ``mats[i]`` on ``[breaks[i-1], breaks[i])``."""

    kind = "rotation_cell"

    def __init__(self, breaks, mats):
        self.breaks = np.asarray(breaks, dtype=float)
        self.mats = np.array(mats, dtype=float)
        if len(self.mats) != len(self.breaks) + 1:
            raise ValueError("need one more matrix than break points")
        self.dim = self.mats.shape[1]

    def __call__(self, base, w: BasePoint) -> np.ndarray:
        x = base.coords(w)[0]
        return self.mats[int(np.searchsorted(self.breaks, x, side="right"))]

    def to_json(self) -> dict:
        return {"kind": self.kind, "breaks": self.breaks.tolist(), "mats": self.mats.tolist()}


class Scaled:
    kind = "scaled"

    def __init__(self, gen, c: float):
        self.gen, self.c = gen, float(c)
        self.dim = gen.dim

    def __call__(self, base, w):
        return self.c * self.gen(base, w)

    def to_json(self) -> dict:
        return {"kind": self.kind, "c": self.c, "of": self.gen.to_json()}


class FunctionGenerator:
    """Wraps an arbitrary ``(base, point) -> matrix`` rule."""

    kind = "function"

    def __init__(self, fn, dim: int, tag: str = "function"):
        self.fn, self.dim, self.tag = fn, dim, tag

    def __call__(self, base, w):
        return self.fn(base, w)

    def to_json(self) -> dict:
        return {"kind": self.kind, "tag": self.tag}


def generator_from_json(obj: dict):
    kind = obj["kind"]
    if kind == "constant":
        return Constant(obj["A"])
    if kind == "symbol_table":
        return SymbolTable(obj["mats"])
    if kind == "conjugated_diagonal":
        return ConjugatedDiagonal(obj["P"], obj["diags"])
    if kind == "rotation_cell":
        return RotationCell(obj["breaks"], obj["mats"])
    if kind == "scaled":
        return Scaled(generator_from_json(obj["of"]), obj["c"])
    raise ValueError(f"unknown generator kind {kind!r}")


# ---------------------------------------------------------------------------
# Scaled products.

@dataclass(frozen=True)
class ScaledMatrix:
    """``matrix * 2**log2_scale`` with ``max|matrix| = 1`` (or the zero matrix, scale -inf)."""

    matrix: np.ndarray
    log2_scale: float = 0.0

    @classmethod
    def of(cls, A, log2_scale: float = 0.0) -> "ScaledMatrix":
        A = np.asarray(A, dtype=float)
        m = np.abs(A).max() if A.size else 0.0
        if m == 0.0 or not np.isfinite(log2_scale):
            return cls(np.zeros_like(A), -math.inf)
        e = math.frexp(m)[1]
        return cls(np.ldexp(A, -e), log2_scale + e)

    @property
    def log_scale(self) -> float:
        return self.log2_scale * LN2

    @property
    def is_zero(self) -> bool:
        return self.log2_scale == -math.inf

    def dense(self) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(self.matrix)
        return np.ldexp(self.matrix, int(self.log2_scale))

    def __matmul__(self, other: "ScaledMatrix") -> "ScaledMatrix":
        if self.is_zero or other.is_zero:
            return ScaledMatrix(np.zeros((self.matrix.shape[0], other.matrix.shape[1])), -math.inf)
        return ScaledMatrix.of(self.matrix @ other.matrix, self.log2_scale + other.log2_scale)

    def log_norm(self, n: NormSpec = L2) -> float:
        """``log ||M||`` in operator norm ``n``."""
        if self.is_zero:
            return -math.inf
        v = operator_norm(self.matrix, n)
        return math.log(v) + self.log_scale if v > 0 else -math.inf


def compound(A, k: int) -> np.ndarray:
    """k-th compound matrix (matrix of k x k minors, lexicographic index sets)."""
    A = np.asarray(A, dtype=float)
    if k == 0:
        return np.ones((1, 1))
    if k == 1:
        return A
    rows, cols = _combos(A.shape[0], k), _combos(A.shape[1], k)
    sub = A[rows[:, None, :, None], cols[None, :, None, :]]
    return np.linalg.det(sub)


RANK_RTOL = 1e-13


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol`` times the largest.

    Generators enter exterior powers only up to this rank, so a matrix that is
    singular up to rounding (say ``P diag(.., 0) P^-1``) contributes an exact
    zero instead of a rounding-sized minor.
    """
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    if s[0] == 0:
        return 0
    return int((s > rtol * s[0]).sum())


class CocycleSystem:
    """A base system, a generator and an ambient norm.

    ``cache`` is "dyadic" (memoize products over aligned dyadic blocks of
    absolute time) or "none".
    """

    def __init__(self, base, gen, norm: NormSpec = L2, cache: str = "dyadic"):
        if cache not in ("dyadic", "none"):
            raise ValueError("cache must be 'dyadic' or 'none'")
        self.base, self.gen, self.norm, self.cache = base, gen, norm, cache
        self.dim = gen.dim
        self._blocks: dict = {}
        self._lock = threading.Lock()

    def matrix(self, w: BasePoint) -> np.ndarray:
        """The generator ``L_w``."""
        return self.gen(self.base, w)

    def with_generator(self, gen) -> "CocycleSystem":
        return CocycleSystem(self.base, gen, self.norm, self.cache)

    def scaled(self, c: float) -> "CocycleSystem":
        return self.with_generator(Scaled(self.gen, c))

    def clear_cache(self):
        with self._lock:
            self._blocks.clear()

    def _factor(self, anchor, pos: int, k: int) -> ScaledMatrix:
        A = self.matrix(BasePoint(anchor, pos))
        if k:
            A = to_base(A, self.norm)
            if k > numerical_rank(A):
                return ScaledMatrix(np.zeros((len(_combos(self.dim, k)),) * 2), -math.inf)
            A = compound(A, k)
        return ScaledMatrix.of(A)

    def _block(self, anchor, lev: int, j: int, k: int) -> ScaledMatrix:
        key = (anchor, lev, j, k)
        hit = self._blocks.get(key)
        if hit is not None:
            return hit
        if lev == 0:
            out = self._factor(anchor, j, k)
        else:
            left = self._block(anchor, lev - 1, 2 * j, k)
            right = self._block(anchor, lev - 1, 2 * j + 1, k)
            out = right @ left
        self._blocks[key] = out
        return out

    def _product(self, w: BasePoint, a: int, b: int, k: int) -> ScaledMatrix:
        if a > b:
            raise ValueError("need a <= b")
        size = self.dim if k == 0 else len(_combos(self.dim, k))
        out = ScaledMatrix(np.eye(size), 0.0)
        A, B = w.t + a, w.t + b
        if self.cache == "none":
            for pos in range(A, B):
                out = self._factor(w.anchor, pos, k) @ out
            return out
        while A < B:
            lev = 0
            while A % (2 ** (lev + 1)) == 0 and A + 2 ** (lev + 1) <= B:
                lev += 1
            out = self._block(w.anchor, lev, A >> lev, k) @ out
            A += 2**lev
        return out

    def evaluate_interval(self, w: BasePoint, a: int, b: int) -> ScaledMatrix:
        """``L_{a->b}(w) = L_{sigma^{b-1} w} ... L_{sigma^a w}``."""
        return self._product(w, a, b, 0)

    def exterior_interval(self, w: BasePoint, a: int, b: int, k: int) -> ScaledMatrix:
        """k-th compound of ``L_{a->b}(w)`` in the weight-normalized coordinates."""
        if not 1 <= k <= self.dim:
            raise ValueError("k out of range")
        return self._product(w, a, b, k)

    def log_volume(self, w: BasePoint, a: int, b: int, k: int) -> float:
        """``log(s_1 ... s_k)`` of ``L_{a->b}`` (Euclidean singular values after weighting)."""
        if k == 0:
            return 0.0
        S = self.exterior_interval(w, a, b, k)
        if S.is_zero:
            return -math.inf
        s = np.linalg.svd(S.matrix, compute_uv=False)[0]
        return math.log(s) + S.log_scale if s > 0 else -math.inf

    def log_singular_value(self, w: BasePoint, a: int, b: int, k: int) -> float:
        """``log s_k(L_{a->b})`` from consecutive exterior powers."""
        hi = self.log_volume(w, a, b, k)
        if hi == -math.inf:
            return -math.inf
        return hi - self.log_volume(w, a, b, k - 1)

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "generator": self.gen.to_json(), "norm": self.norm.to_json()}


def evaluate_interval(c: CocycleSystem, w: BasePoint, a: int, b: int) -> ScaledMatrix:
    return c.evaluate_interval(w, a, b)


def integrability_estimate(c: CocycleSystem, samples: int, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo mean of ``log+ ||L_w||`` over base-distributed w, with its standard error."""
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    for i in range(samples):
        v = operator_norm(c.matrix(c.base.sample(rng)), c.norm)
        vals[i] = max(math.log(v), 0.0) if v > 0 else 0.0
    se = vals.std(ddof=1) / math.sqrt(samples) if samples > 1 else math.inf
    return float(vals.mean()), float(se)


# ---------------------------------------------------------------------------
# Inversion instrumentation.

@dataclass
class InversionCounter:
    inversions: int = 0
    solves: int = 0
    calls: list = field(default_factory=list)


_INV_TARGETS = [(np.linalg, "inv"), (np.linalg, "pinv"), (scipy.linalg, "inv"), (scipy.linalg, "pinv")]
_SOLVE_TARGETS = [(np.linalg, "solve"), (np.linalg, "lstsq"), (scipy.linalg, "solve"), (scipy.linalg, "lstsq")]


@contextlib.contextmanager
def count_inversions():
    """Count explicit matrix inversions (inv, pinv) and linear solves inside the block."""
    counter = InversionCounter()
    saved = []

    def wrap(mod, name, attr):
        orig = getattr(mod, name)

        def f(*args, **kw):
            setattr(counter, attr, getattr(counter, attr) + 1)
            counter.calls.append(f"{mod.__name__}.{name}")
            return orig(*args, **kw)

        saved.append((mod, name, orig))
        setattr(mod, name, f)

    for mod, name in _INV_TARGETS:
        wrap(mod, name, "inversions")
    for mod, name in _SOLVE_TARGETS:
        wrap(mod, name, "solves")
    try:
        yield counter
    finally:
        for mod, name, orig in reversed(saved):
            setattr(mod, name, orig)
