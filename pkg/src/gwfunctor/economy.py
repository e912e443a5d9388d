"""Three-tier network economy: producers i ship flows Q_ijk through
transporters j to consumer slots k.  Transporters choose qualities q_ijk and
prices π_ijk; consumers act only through the demand prices.

Functional forms (all coefficients configurable, arrays broadcast to (m,n,o)):

* demand price  ρ̂_ijk = a_ijk − b_ijk Q_ijk − h Σ_{(i',j')≠(i,j)} Q_i'j'k + g_ijk q_ijk
* production    f̂_i = c_i/2 (Σ_jk Q_ijk)² + d_i Σ_jk Q_ijk
* delivery      c_ijk = e_ijk/2 q_ijk² + s_ijk q_ijk Q_ijk + l_ijk q_ijk
* opportunity   oc_ijk = w_ijk/2 π_ijk²
* payments      κ π_ijk Q_ijk (κ = 1 is the plain transfer)

U¹_i = Σ_jk ρ̂_ijk Q_ijk − f̂_i − κ Σ_jk π_ijk Q_ijk
U²_j = Σ_ik κ π_ijk Q_ijk − Σ_ik (c_ijk + oc_ijk)

Producers treat q as given.  States stack (Q, q, π), each flattened
i-major then j then k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .vi import Box, StochasticVIProblem, VIProblem, gap_residual, solve_projection

ARRAY_COEFS = ("a", "b", "g", "e", "s", "l", "w")
PRODUCER_COEFS = ("c", "d")
SCALAR_COEFS = ("h", "kappa")


class EconomyError(ValueError):
    pass


@dataclass(frozen=True)
class MarketState:
    Q: np.ndarray
    q: np.ndarray
    pi: np.ndarray

    @classmethod
    def from_vector(cls, econ: "NetworkEconomy", x) -> "MarketState":
        x = np.asarray(x, float)
        if x.shape != (econ.dim,):
            raise EconomyError(f"state vector must have length {econ.dim}")
        Q, q, pi = (x[k * econ.size:(k + 1) * econ.size].reshape(econ.shape) for k in range(3))
        return cls(Q, q, pi)

    @classmethod
    def zeros(cls, econ: "NetworkEconomy") -> "MarketState":
        return cls.from_vector(econ, np.zeros(econ.dim))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.Q.ravel(), self.q.ravel(), self.pi.ravel()])

    def to_json(self) -> dict:
        return {"Q": self.Q.tolist(), "q": self.q.tolist(), "pi": self.pi.tolist()}


@dataclass(frozen=True)
class NetworkEconomy:
    m: int
    n: int
    o: int
    a: np.ndarray = 2.0
    b: np.ndarray = 1.0
    h: float = 0.2
    g: np.ndarray = 0.1
    c: np.ndarray = 0.5
    d: np.ndarray = 0.1
    e: np.ndarray = 1.0
    s: np.ndarray = 0.1
    l: np.ndarray = -0.5
    w: np.ndarray = 1.0
    kappa: float = 1.0
    cap_Q: float = 5.0
    cap_q: float = 5.0
    cap_pi: float = 5.0

    def __post_init__(self):
        if min(self.m, self.n, self.o) < 1:
            raise EconomyError("tier sizes must be positive")
        for name in ARRAY_COEFS:
            try:
                arr = np.broadcast_to(np.asarray(getattr(self, name), float), self.shape).copy()
            except ValueError:
                raise EconomyError(f"coefficient {name} does not broadcast to {self.shape}") from None
            object.__setattr__(self, name, arr)
        for name in PRODUCER_COEFS:
            try:
                arr = np.broadcast_to(np.asarray(getattr(self, name), float), (self.m,)).copy()
            except ValueError:
                raise EconomyError(f"coefficient {name} must have one entry per producer") from None
            object.__setattr__(self, name, arr)
        for name in SCALAR_COEFS + ("cap_Q", "cap_q", "cap_pi"):
            object.__setattr__(self, name, float(getattr(self, name)))
        coefs = [getattr(self, k) for k in ARRAY_COEFS + PRODUCER_COEFS + SCALAR_COEFS]
        if not all(np.all(np.isfinite(v)) for v in coefs):
            raise EconomyError("coefficients must be finite")
        if min(self.cap_Q, self.cap_q, self.cap_pi) <= 0:
            raise EconomyError("caps must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.m, self.n, self.o)

    @property
    def size(self) -> int:
        return self.m * self.n * self.o

    @property
    def dim(self) -> int:
        return 3 * self.size

    def caps(self) -> np.ndarray:
        N = self.size
        return np.concatenate([np.full(N, self.cap_Q), np.full(N, self.cap_q), np.full(N, self.cap_pi)])

    def is_feasible(self, state: MarketState, atol: float = 0.0) -> bool:
        x = state.vector()
        return bool(np.all(x >= -atol) and np.all(x <= self.caps() + atol))

    @classmethod
    def zero(cls, m: int, n: int, o: int, **caps) -> "NetworkEconomy":
        zeros = {k: 0.0 for k in ARRAY_COEFS + PRODUCER_COEFS + SCALAR_COEFS}
        return cls(m, n, o, **zeros, **caps)

    @classmethod
    def from_config(cls, cfg: Mapping) -> "NetworkEconomy":
        """Build from a TOML/JSON table: tier sizes, coefficients (scalars or
        nested lists) and optional caps."""
        cfg = dict(cfg.get("economy", cfg))
        known = set(ARRAY_COEFS + PRODUCER_COEFS + SCALAR_COEFS + ("cap_Q", "cap_q", "cap_pi"))
        unknown = set(cfg) - known - {"m", "n", "o"}
        if unknown:
            raise EconomyError(f"unknown economy keys {sorted(unknown)}")
        try:
            m, n, o = int(cfg.pop("m")), int(cfg.pop("n")), int(cfg.pop("o"))
        except KeyError as exc:
            raise EconomyError(f"missing tier size {exc}") from None
        return cls(m, n, o, **cfg)

    def to_config(self) -> dict:
        out = {"m": self.m, "n": self.n, "o": self.o}
        for k in ARRAY_COEFS + PRODUCER_COEFS:
            out[k] = getattr(self, k).tolist()
        for k in SCALAR_COEFS + ("cap_Q", "cap_q", "cap_pi"):
            out[k] = getattr(self, k)
        return out


def default_economy(m: int = 1, n: int = 1, o: int = 1, seed: int | None = None) -> NetworkEconomy:
    """The default coefficient regime; a seed jitters the demand intercepts
    and delivery curvatures while keeping the instance strongly monotone."""
    if seed is None:
        return NetworkEconomy(m, n, o)
    rng = np.random.default_rng(seed)
    shape = (m, n, o)
    return NetworkEconomy(m, n, o, a=2.0 + rng.uniform(-0.5, 0.5, shape),
                          e=1.0 + rng.uniform(-0.2, 0.2, shape),
                          c=0.5 + rng.uniform(-0.1, 0.1, m))


def _split(econ: NetworkEconomy, X: np.ndarray):
    B = X.shape[0]
    N = econ.size
    Q = X[:, :N].reshape(B, *econ.shape)
    q = X[:, N:2 * N].reshape(B, *econ.shape)
    P = X[:, 2 * N:].reshape(B, *econ.shape)
    return Q, q, P


def _demand(econ: NetworkEconomy, Q, q):
    T = Q.sum(axis=(1, 2))[:, None, None, :]          # total flow into each slot k
    return econ.a - econ.b * Q - econ.h * (T - Q) + econ.g * q


def _rows(state) -> tuple[np.ndarray, bool]:
    if isinstance(state, MarketState):
        return state.vector()[None, :], True
    x = np.asarray(state, float)
    return np.atleast_2d(x), x.ndim == 1


def producer_utilities(econ: NetworkEconomy, state) -> np.ndarray:
    X, single = _rows(state)
    Q, q, P = _split(econ, X)
    S = Q.sum(axis=(2, 3))
    u = ((_demand(econ, Q, q) - econ.kappa * P) * Q).sum(axis=(2, 3)) \
        - (econ.c / 2 * S ** 2 + econ.d * S)
    return u[0] if single else u


def transporter_utilities(econ: NetworkEconomy, state) -> np.ndarray:
    X, single = _rows(state)
    Q, q, P = _split(econ, X)
    per = econ.kappa * P * Q - (econ.e / 2 * q ** 2 + econ.s * q * Q + econ.l * q) - econ.w / 2 * P ** 2
    u = per.sum(axis=(1, 3))
    return u[0] if single else u


def producer_utility(econ: NetworkEconomy, i: int, state) -> float:
    if not 0 <= i < econ.m:
        raise EconomyError(f"producer index {i} out of range")
    return float(producer_utilities(econ, state)[i])


def transporter_utility(econ: NetworkEconomy, j: int, state) -> float:
    if not 0 <= j < econ.n:
        raise EconomyError(f"transporter index {j} out of range")
    return float(transporter_utilities(econ, state)[j])


def economy_map(econ: NetworkEconomy, X: np.ndarray) -> np.ndarray:
    """F(x) = (−∂U¹/∂Q, −∂U²/∂q, −∂U²/∂π) in closed form, row by row."""
    X = np.asarray(X, float)
    Q, q, P = _split(econ, X)
    S = Q.sum(axis=(2, 3))[:, :, None, None]
    R = Q.sum(axis=2)[:, :, None, :]                   # producer i's flow into slot k
    dQ = (_demand(econ, Q, q) - econ.b * Q - econ.h * (R - Q)
          - econ.c[:, None, None] * S - econ.d[:, None, None] - econ.kappa * P)
    Fq = econ.e * q + econ.s * Q + econ.l
    FP = econ.w * P - econ.kappa * Q
    B = X.shape[0]
    return np.concatenate([-dQ.reshape(B, -1), Fq.reshape(B, -1), FP.reshape(B, -1)], axis=1)


def to_vi(econ: NetworkEconomy, affine: bool = False) -> VIProblem:
    """VI over the caps box.  With ``affine=True`` F is evaluated as
    x Jᵀ + F(0) from the precomputed Jacobian, which is faster in long
    stochastic runs; the closed form is the reference."""
    N = econ.size
    factors = [Box(np.zeros(N), np.full(N, econ.cap_Q)), Box(np.zeros(N), np.full(N, econ.cap_q)),
               Box(np.zeros(N), np.full(N, econ.cap_pi))]
    if affine:
        JT = jacobian(econ).T.copy()
        f0 = economy_map(econ, np.zeros((1, econ.dim)))[0]
        return VIProblem(lambda X: X @ JT + f0, factors)
    return VIProblem(lambda X: economy_map(econ, X), factors)


def to_stochastic_vi(econ: NetworkEconomy, half_width: float, affine: bool = True) -> StochasticVIProblem:
    """F plus additive zero-mean uniform noise, one factor per variable family."""
    return StochasticVIProblem.additive_uniform(to_vi(econ, affine), half_width)


def jacobian(econ: NetworkEconomy) -> np.ndarray:
    """F is affine, so its Jacobian is read off from unit perturbations."""
    I = np.eye(econ.dim)
    base = economy_map(econ, np.zeros((1, econ.dim)))
    return (economy_map(econ, I) - base).T


def monotonicity_constants(econ: NetworkEconomy) -> tuple[float, float]:
    """(μ, L): smallest eigenvalue of the symmetric part and spectral norm."""
    J = jacobian(econ)
    mu = float(np.linalg.eigvalsh((J + J.T) / 2).min())
    return mu, float(np.linalg.norm(J, 2))


@dataclass
class EquilibriumReport:
    state: MarketState
    gap: float
    producer_utilities: np.ndarray
    transporter_utilities: np.ndarray
    best_response_slack: float | None = None
    iterations: int = 0
    status: str = ""

    def to_json(self) -> dict:
        return {"state": self.state.to_json(), "gap": self.gap,
                "producer_utilities": self.producer_utilities.tolist(),
                "transporter_utilities": self.transporter_utilities.tolist(),
                "best_response_slack": self.best_response_slack,
                "iterations": self.iterations, "status": self.status}


def equilibrium(econ: NetworkEconomy, tol: float = 1e-10, max_iter: int = 1_000_000,
                check_eps: float | None = None) -> EquilibriumReport:
    """Solve the economy VI by the projection method with step μ/L²."""
    mu, L = monotonicity_constants(econ)
    vi = to_vi(econ)
    if L == 0:
        res = solve_projection(vi, 1.0, tol=tol, max_iter=max_iter)
    else:
        if mu <= 0:
            raise EconomyError(f"economy is not strongly monotone (μ = {mu:.3g}); projection step undefined")
        res = solve_projection(vi, mu / L ** 2, tol=tol, max_iter=max_iter)
    st = MarketState.from_vector(econ, res.x)
    rep = EquilibriumReport(st, gap_residual(vi, res.x), producer_utilities(econ, st),
                            transporter_utilities(econ, st), iterations=res.iterations,
                            status=res.status)
    if check_eps is not None:
        rep.best_response_slack = best_response_check(econ, st, check_eps).max_improvement
    return rep


@dataclass
class BestResponseReport:
    producer_improvement: np.ndarray
    transporter_improvement: np.ndarray
    eps: float
    best_states: list = field(default_factory=list)

    @property
    def max_improvement(self) -> float:
        return float(max(self.producer_improvement.max(initial=0.0),
                         self.transporter_improvement.max(initial=0.0)))

    @property
    def is_equilibrium(self) -> bool:
        return self.max_improvement <= self.eps


def _own_indices(econ: NetworkEconomy):
    N = econ.size
    idx = np.arange(N).reshape(econ.shape)
    prod = [idx[i].ravel() for i in range(econ.m)]
    trans = [np.concatenate([idx[:, j].ravel() + N, idx[:, j].ravel() + 2 * N]) for j in range(econ.n)]
    return prod, trans


def _maximize(util, grad, x, own, lo, hi, iters=20_000):
    """Projected gradient ascent with backtracking, then coordinate pattern
    search on shrinking grids."""
    x = x.copy()
    val = util(x)
    step = 1.0
    for _ in range(iters):
        gdir = grad(x)[own]
        while True:
            y = x.copy()
            y[own] = np.clip(x[own] + step * gdir, lo, hi)
            move = y[own] - x[own]
            vy = util(y)
            if vy >= val + 1e-4 * (move @ gdir) or step < 1e-14:
                break
            step /= 2
        if np.max(np.abs(move)) < 1e-13 or vy < val:
            break
        x, val = y, vy
        step = min(step * 2, 1.0)
    h = float(np.max(hi - lo)) / 10
    while h > 1e-11:
        improved = False
        for c, (a, b) in zip(own, zip(lo, hi)):
            for sgn in (1, -1):
                y = x.copy()
                y[c] = min(max(x[c] + sgn * h, a), b)
                vy = util(y)
                if vy > val:
                    x, val, improved = y, vy, True
        if not improved:
            h /= 2
    return x, val


def best_response_check(econ: NetworkEconomy, state, eps: float = 1e-4) -> BestResponseReport:
    """For each agent, maximize its own utility over its own coordinates with
    the rest fixed, and report how much it could gain."""
    x0 = state.vector() if isinstance(state, MarketState) else np.asarray(state, float)
    if not econ.is_feasible(MarketState.from_vector(econ, x0), atol=1e-12):
        raise EconomyError("state is not feasible")
    caps = econ.caps()
    prod, trans = _own_indices(econ)
    gains_p, gains_t, best = np.zeros(econ.m), np.zeros(econ.n), []
    for i, own in enumerate(prod):
        u = lambda x, i=i: producer_utility(econ, i, x)
        g = lambda x: -economy_map(econ, x[None])[0]
        xb, vb = _maximize(u, g, x0, own, np.zeros(len(own)), caps[own])
        gains_p[i] = max(0.0, vb - u(x0))
        best.append(xb)
    for j, own in enumerate(trans):
        u = lambda x, j=j: transporter_utility(econ, j, x)
        g = lambda x: -economy_map(econ, x[None])[0]
        xb, vb = _maximize(u, g, x0, own, np.zeros(len(own)), caps[own])
        gains_t[j] = max(0.0, vb - u(x0))
        best.append(xb)
    return BestResponseReport(gains_p, gains_t, eps, best)
