"""Variational inequalities over product constraint sets.

A VI(F, K) asks for x* in K with <F(x*), y - x*> >= 0 for all y in K.  K is a
product of factors (boxes, capped orthants, simplices) laid out contiguously.
Mappings take arrays of shape (..., n) and must act row by row, so batched
and single evaluations agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .serial import csv_text
from .steps import Constant, Harmonic, StepRule, robbins_monro

DIVERGENCE = 1e12
CONVERGED = "converged"
MAX_ITER = "max-iter"
_CHUNK = 4096


class DivergenceError(ArithmeticError):
    def __init__(self, iteration: int, norm: float):
        super().__init__(f"iterate norm {norm:.3g} exceeded the divergence guard at iteration {iteration}")
        self.iteration = iteration
        self.norm = norm


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, float))
        hi = np.atleast_1d(np.asarray(self.hi, float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo.copy())
        object.__setattr__(self, "hi", hi.copy())

    @property
    def dim(self) -> int:
        return self.lo.size

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, (size, self.dim))


def CappedOrthant(dim: int, cap: float) -> Box:
    """{x >= 0, x <= cap} as a box factor."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    return Box(np.zeros(dim), np.full(dim, float(cap)))


@dataclass(frozen=True)
class Simplex:
    dim: int
    mass: float = 1.0

    def __post_init__(self):
        if self.dim < 1 or self.mass <= 0:
            raise ValueError("simplex needs dim >= 1 and mass > 0")

    def project(self, x: np.ndarray) -> np.ndarray:
        # sort-based Euclidean projection onto {x >= 0, sum x = mass}
        x = np.asarray(x, float)
        u = -np.sort(-x, axis=-1)
        css = np.cumsum(u, axis=-1) - self.mass
        idx = np.arange(1, self.dim + 1)
        cond = u - css / idx > 0
        rho = self.dim - np.argmax(cond[..., ::-1], axis=-1)
        theta = np.take_along_axis(css, rho[..., None] - 1, axis=-1) / rho[..., None]
        return np.maximum(x - theta, 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mass * rng.dirichlet(np.ones(self.dim), size)


Factor = Box | Simplex


def project(factor: Factor, point) -> np.ndarray:
    x = np.asarray(point, float)
    if x.shape[-1] != factor.dim:
        raise ValueError(f"point has dimension {x.shape[-1]}, factor has {factor.dim}")
    return factor.project(x)


@dataclass(frozen=True)
class VIProblem:
    F: Callable[[np.ndarray], np.ndarray]
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("K needs at least one factor")
        offs = np.cumsum([0] + [f.dim for f in self.factors])
        object.__setattr__(self, "_offsets", offs)
        boxes = all(isinstance(f, Box) for f in self.factors)
        object.__setattr__(self, "_boxes", boxes)
        if boxes:
            lo = np.concatenate([f.lo for f in self.factors])
            hi = np.concatenate([f.hi for f in self.factors])
            m = len(self.factors)
            # per-factor masked bounds: projecting onto K_w leaves other coordinates free
            LO = np.full((m, self.n), -np.inf)
            HI = np.full((m, self.n), np.inf)
            for w in range(m):
                s = self.slice(w)
                LO[w, s], HI[w, s] = lo[s], hi[s]
            object.__setattr__(self, "_lo", lo)
            object.__setattr__(self, "_hi", hi)
            object.__setattr__(self, "_LO", LO)
            object.__setattr__(self, "_HI", HI)

    @property
    def n(self) -> int:
        return int(self._offsets[-1])

    @property
    def m(self) -> int:
        return len(self.factors)

    def slice(self, w: int) -> slice:
        return slice(int(self._offsets[w]), int(self._offsets[w + 1]))

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self._boxes:
            return np.minimum(np.maximum(x, self._lo), self._hi)
        out = np.empty_like(x)
        for w, f in enumerate(self.factors):
            out[..., self.slice(w)] = f.project(x[..., self.slice(w)])
        return out

    def project_factor(self, x: np.ndarray, w) -> np.ndarray:
        """Project onto K_w = {x : x_w in factor w}; other coordinates unchanged.
        ``w`` may be an array of factor indices, one per row of ``x``."""
        w = np.asarray(w)
        if self._boxes:
            return np.minimum(np.maximum(x, self._LO[w]), self._HI[w])
        out = np.array(x, float)
        rows = np.atleast_1d(w)
        flat = out.reshape(-1, self.n)
        for r, wr in enumerate(np.broadcast_to(rows, flat.shape[:1])):
            s = self.slice(int(wr))
            flat[r, s] = self.factors[int(wr)].project(flat[r, s])
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.concatenate([f.sample(rng, size) for f in self.factors], axis=1)

    def evaluate(self, x) -> np.ndarray:
        x2 = np.atleast_2d(np.asarray(x, float))
        out = np.asarray(self.F(x2), float)
        return out.reshape(np.shape(x))


def gap_residual(vi: VIProblem, x) -> float:
    """Natural residual ‖x − P_K(x − F(x))‖₂."""
    x2 = np.atleast_2d(np.asarray(x, float))
    r = x2 - vi.project(x2 - vi.F(x2))
    return float(np.linalg.norm(r[0])) if np.ndim(x) <= 1 else float(np.max(np.linalg.norm(r, axis=-1)))


def _gaps(vi: VIProblem, X: np.ndarray) -> np.ndarray:
    return np.linalg.norm(X - vi.project(X - vi.F(X)), axis=-1)


@dataclass
class SolveResult:
    x: np.ndarray
    status: str
    iterations: int
    gap: float
    history: list = field(default_factory=list)   # (k, gap) rows

    def to_csv(self) -> str:
        return csv_text(["k", "gap"], self.history)


def solve_projection(vi: VIProblem, alpha: float, tol: float = 1e-10, max_iter: int = 100_000,
                     x0=None, record_every: int = 0) -> SolveResult:
    """x ← P_K(x − αF(x)) until the natural residual is at most ``tol``."""
    if alpha <= 0:
        raise ValueError("step must be positive")
    x = vi.project(np.zeros((1, vi.n)) if x0 is None else np.asarray(x0, float).reshape(1, vi.n))
    hist = []
    for k in range(max_iter + 1):
        fx = vi.F(x)
        nxt = vi.project(x - alpha * fx)
        gap = float(np.linalg.norm(x - vi.project(x - fx)))
        if record_every and k % record_every == 0:
            hist.append((k, gap))
        if gap <= tol:
            return SolveResult(x[0].copy(), CONVERGED, k, gap, hist)
        if k == max_iter:
            break
        norm = float(np.max(np.abs(nxt)))
        if not math.isfinite(norm) or norm > DIVERGENCE:
            raise DivergenceError(k, norm)
        x = nxt
    return SolveResult(x[0].copy(), MAX_ITER, max_iter, gap, hist)


def projection_iterates(vi: VIProblem, alpha: float, steps: int, x0) -> np.ndarray:
    """The raw sequence x_0..x_steps of the projection method."""
    x = np.asarray(x0, float).reshape(1, vi.n)
    out = [x[0].copy()]
    for _ in range(steps):
        x = vi.project(x - alpha * vi.F(x))
        out.append(x[0].copy())
    return np.array(out)


@dataclass(frozen=True)
class StepSchedule:
    alpha: StepRule = field(default_factory=Harmonic)
    beta: StepRule = field(default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        b = self.beta
        b0 = b.c if isinstance(b, Constant) else b.c / b.k0
        if not 0 < b0 < 2:
            raise ValueError("beta_k must lie in (0, 2)")

    def gamma(self, k):
        b = self.beta(k)
        return b * (2 - b)

    @property
    def satisfies_assumptions(self) -> bool:
        """Σα = ∞, Σα² < ∞ and Σα²/γ < ∞, decided from the rule families."""
        if not robbins_monro(self.alpha):
            return False
        # γ_k bounded below iff β constant; harmonic β makes α²/γ ~ 1/k
        return isinstance(self.beta, Constant)


@dataclass(frozen=True)
class StochasticVIProblem:
    """Sampled mapping F_w(x, v) over the factors of ``base``.

    ``sample_F(X, V)`` receives a batch of points (B, n) and noise (B, d);
    ``noise(rng, size)`` draws (size, d) zero-mean noise.  Unbiasedness
    E[F_w(x, v)] = F(x) is the caller's contract.
    """

    base: VIProblem
    sample_F: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: Callable[[np.random.Generator, int], np.ndarray]
    factor_probs: np.ndarray | None = None

    def __post_init__(self):
        m = self.base.m
        p = np.full(m, 1.0 / m) if self.factor_probs is None else np.asarray(self.factor_probs, float)
        if p.shape != (m,) or np.any(p <= 0) or not np.isclose(p.sum(), 1.0):
            raise ValueError("factor probabilities must be positive and sum to 1")
        object.__setattr__(self, "factor_probs", p)

    @property
    def rho(self) -> float:
        """Largest ρ with every factor sampled with probability at least ρ/m."""
        return float(self.factor_probs.min() * self.base.m)

    @classmethod
    def additive_uniform(cls, base: VIProblem, half_width: float) -> "StochasticVIProblem":
        n = base.n
        return cls(base, lambda X, V: base.F(X) + V,
                   lambda rng, size: rng.uniform(-half_width, half_width, (size, n)))

    @classmethod
    def noiseless(cls, base: VIProblem) -> "StochasticVIProblem":
        return cls(base, lambda X, V: base.F(X), lambda rng, size: np.zeros((size, 0)))


@dataclass
class StochasticResult:
    x: np.ndarray              # raw final iterate(s); (n,) for one seed, (S, n) for a batch
    projected: np.ndarray      # P_K of the final iterate(s)
    raw_gap: np.ndarray
    projected_gap: np.ndarray
    rows: list = field(default_factory=list)   # (k, alpha, beta, raw_gap, projected_gap), seed 0

    def to_csv(self) -> str:
        return csv_text(["k", "alpha", "beta", "raw_gap", "projected_gap"], self.rows)


def solve_two_step_stochastic(svi: StochasticVIProblem, sched: StepSchedule, iters: int,
                              seed: int | Sequence[int] = 0, x0=None, record_every: int | None = None
                              ) -> StochasticResult:
    """z_k = x_k − α_k F_w(x_k, v_k);  x_{k+1} = z_k − β_k (z_k − P_{w_k} z_k).

    Iterates may leave K between steps.  Several seeds run as one batch;
    each seed owns an independent generator drawing noise and factor indices
    in fixed-size chunks.  The trace follows the first seed.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    vi = svi.base
    seeds = [seed] if np.ndim(seed) == 0 else list(seed)
    single = np.ndim(seed) == 0
    S = len(seeds)
    rngs = [np.random.default_rng(s) for s in seeds]
    x = vi.project(np.zeros((S, vi.n)) if x0 is None
                   else np.broadcast_to(np.asarray(x0, float), (S, vi.n)).copy())
    every = max(1, iters // 1000) if record_every is None else record_every
    cdf = np.cumsum(svi.factor_probs)
    cdf[-1] = np.inf
    rows = []
    k = 0
    while k < iters:
        c = min(_CHUNK, iters - k)
        V = np.stack([svi.noise(r, c) for r in rngs], axis=1)          # (c, S, d)
        W = np.stack([np.searchsorted(cdf, r.random(c), side="right") for r in rngs], axis=1)
        ks = np.arange(k, k + c)
        A = _rule_values(sched.alpha, ks)
        B = _rule_values(sched.beta, ks)
        for i in range(c):
            a, b = A[i], B[i]
            z = x - a * svi.sample_F(x, V[i])
            pz = vi.project_factor(z, W[i])
            x = (1.0 - b) * z + b * pz
            kk = k + i
            if (kk + 1) % every == 0 or kk + 1 == iters:
                norm = float(np.max(np.abs(x)))
                if not math.isfinite(norm) or norm > DIVERGENCE:
                    raise DivergenceError(kk, norm)
                px = vi.project(x[:1])
                rows.append((kk + 1, float(a), float(b),
                             float(_gaps(vi, x[:1])[0]), float(_gaps(vi, px)[0])))
        k += c
    px = vi.project(x)
    raw, pg = _gaps(vi, x), _gaps(vi, px)
    if single:
        return StochasticResult(x[0], px[0], raw[0], pg[0], rows)
    return StochasticResult(x, px, raw, pg, rows)


def _rule_values(rule: StepRule, ks: np.ndarray) -> np.ndarray:
    if isinstance(rule, Harmonic):
        return rule.c / (ks + rule.k0)
    return np.full(ks.shape, float(rule.c))


@dataclass(frozen=True)
class MonotoneReport:
    monotone: bool
    mu: float
    L: float
    pairs: int


def certify_monotone(vi: VIProblem, samples: int = 1000, seed: int = 0, atol: float = 1e-9
                     ) -> MonotoneReport:
    """Empirical μ = min ⟨F(x)−F(y), x−y⟩/‖x−y‖² and L = max ‖F(x)−F(y)‖/‖x−y‖
    over sampled pairs in K.  A necessary-condition check, not a proof."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    X, Y = vi.sample(rng, samples), vi.sample(rng, samples)
    d = X - Y
    dd = np.einsum("ij,ij->i", d, d)
    keep = dd > 1e-24
    if not np.any(keep):
        raise ValueError("all sampled pairs are degenerate")
    dF = vi.F(X[keep]) - vi.F(Y[keep])
    mu = float(np.min(np.einsum("ij,ij->i", dF, d[keep]) / dd[keep]))
    L = float(np.max(np.linalg.norm(dF, axis=1) / np.sqrt(dd[keep])))
    return MonotoneReport(mu >= -atol, mu, L, int(keep.sum()))


def distance_reduction_eta(vi: VIProblem, samples: int = 1000, seed: int = 0, spread: float = 3.0
                           ) -> float:
    """Smallest observed ratio m·E_w[dist²(x, K_w)] / dist²(x, K) under uniform
    factor sampling, for points drawn around K.  Equals 1 on box products."""
    rng = np.random.default_rng(seed)
    X = vi.sample(rng, samples)
    X = X + rng.normal(scale=spread, size=X.shape)
    full = np.sum((X - vi.project(X)) ** 2, axis=1)
    per = np.zeros(samples)
    for w in range(vi.m):
        per += np.sum((X - vi.project_factor(X, np.full(samples, w))) ** 2, axis=1)
    keep = full > 1e-18
    return float(np.min(per[keep] / full[keep]))
