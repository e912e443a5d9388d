"""Finite MDPs as coalgebras: Bellman operator, value iteration and
asynchronous Q-learning.

Q-tables are indexed by flattened pairs ``p = s * |A| + a``; these pairs are
the components handed to the asyncfix engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np

from .asyncfix import (HORIZON_EXHAUSTED, DecomposedMap, IterationTrace, StaleSchedule,
                       run_async)
from .coalgebra.functor import FiniteDist
from .serial import csv_text
from .steps import Harmonic, StepRule, robbins_monro

EXPLORATIONS = ("uniform", "trajectory")
_CHUNK = 1 << 14


class MdpError(ValueError):
    pass


def _weight(p) -> Fraction:
    # decimal literals stay exact: 0.1 + 0.2 + 0.7 sums to 1
    if isinstance(p, float):
        return Fraction(repr(p))
    return Fraction(p)


@dataclass(frozen=True)
class FiniteMdp:
    states: tuple
    actions: tuple
    transition: Mapping[tuple, FiniteDist]
    reward: Mapping[tuple, float]
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.states or not self.actions:
            raise MdpError("states and actions must be nonempty")
        if len(set(self.states)) != len(self.states) or len(set(self.actions)) != len(self.actions):
            raise MdpError("duplicate state or action names")
        if not 0 <= self.gamma < 1:
            raise MdpError(f"discount must lie in [0, 1), got {self.gamma}")
        states = set(self.states)
        trans = {}
        for s in self.states:
            for a in self.actions:
                if (s, a) not in self.transition:
                    raise MdpError(f"transition undefined at {(s, a)!r}")
                if (s, a) not in self.reward:
                    raise MdpError(f"reward undefined at {(s, a)!r}")
                d = self.transition[(s, a)]
                if not isinstance(d, FiniteDist):
                    d = FiniteDist({t: _weight(p) for t, p in (d.items() if isinstance(d, Mapping) else d)})
                if not set(d) <= states:
                    raise MdpError(f"transition at {(s, a)!r} leaves the state set")
                if not math.isfinite(float(self.reward[(s, a)])):
                    raise MdpError(f"reward at {(s, a)!r} is not finite")
                trans[(s, a)] = d
        object.__setattr__(self, "transition", trans)
        S, A = len(self.states), len(self.actions)
        P = np.zeros((S, A, S))
        R = np.zeros((S, A))
        idx = {s: i for i, s in enumerate(self.states)}
        for i, s in enumerate(self.states):
            for j, a in enumerate(self.actions):
                for t, w in trans[(s, a)].items():
                    P[i, j, idx[t]] = float(w)
                R[i, j] = float(self.reward[(s, a)])
        object.__setattr__(self, "_P", P)
        object.__setattr__(self, "_R", R)

    @property
    def P(self) -> np.ndarray:
        """Transition tensor, shape (S, A, S)."""
        return self._P

    @property
    def R(self) -> np.ndarray:
        return self._R

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.states), len(self.actions)

    def pairs(self) -> list[tuple]:
        return [(s, a) for s in self.states for a in self.actions]

    def is_deterministic(self) -> bool:
        return all(len(d) == 1 for d in self.transition.values())

    @classmethod
    def from_json(cls, data: Mapping) -> "FiniteMdp":
        states = tuple(data["states"])
        actions = tuple(data["actions"])
        lookup_s = {str(s): s for s in states}
        lookup_a = {str(a): a for a in actions}

        def key(k: str):
            s, sep, a = str(k).rpartition(",")
            if not sep or s.strip() not in lookup_s or a.strip() not in lookup_a:
                raise MdpError(f"bad state-action key {k!r}")
            return lookup_s[s.strip()], lookup_a[a.strip()]

        trans = {}
        for k, succ in data["transitions"].items():
            trans[key(k)] = FiniteDist({lookup_s[str(t)]: _weight(p) for t, p in succ})
        rewards = {key(k): float(r) for k, r in data["rewards"].items()}
        return cls(states, actions, trans, rewards, float(data["gamma"]))

    def to_json(self) -> dict:
        return {
            "states": list(self.states), "actions": list(self.actions), "gamma": self.gamma,
            "transitions": {f"{s},{a}": [[t, str(w)] for t, w in self.transition[(s, a)].items()]
                            for s, a in self.pairs()},
            "rewards": {f"{s},{a}": float(self.reward[(s, a)]) for s, a in self.pairs()},
        }


@dataclass
class QFunction:
    states: tuple
    actions: tuple
    table: np.ndarray   # shape (S, A)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float if self.table.dtype != object else object)
        if self.table.shape != (len(self.states), len(self.actions)):
            raise MdpError("Q-table shape does not match states x actions")
        if self.table.dtype != object and not np.all(np.isfinite(self.table)):
            raise MdpError("Q-table has non-finite entries")

    @classmethod
    def zeros(cls, mdp: FiniteMdp) -> "QFunction":
        return cls(mdp.states, mdp.actions, np.zeros(mdp.shape))

    def __getitem__(self, pair):
        s, a = pair
        return self.table[self.states.index(s), self.actions.index(a)]

    def greedy(self) -> dict:
        """State -> argmax action (first maximizer)."""
        return {s: self.actions[int(np.argmax(row))] for s, row in zip(self.states, self.table)}

    def distance(self, other: "QFunction") -> float:
        return float(np.max(np.abs(np.asarray(self.table, float) - np.asarray(other.table, float))))

    def to_csv(self) -> str:
        rows = ([s, a, float(self.table[i, j])] for i, s in enumerate(self.states)
                for j, a in enumerate(self.actions))
        return csv_text(["state", "action", "q"], rows)


def _table(mdp: FiniteMdp, q) -> np.ndarray:
    t = q.table if isinstance(q, QFunction) else np.asarray(q)
    if t.shape != mdp.shape:
        raise MdpError(f"Q-table shape {t.shape} does not match MDP {mdp.shape}")
    return t


def bellman_operator(mdp: FiniteMdp, q, exact: bool = False) -> QFunction:
    """(Tq)(s,a) = r(s,a) + γ Σ P(s'|s,a) max_a' q(s',a').

    With ``exact=True`` the computation runs on Fractions (rewards and γ are
    converted from their decimal representation).
    """
    t = _table(mdp, q)
    if not exact:
        return QFunction(mdp.states, mdp.actions, mdp.R + mdp.gamma * mdp.P @ t.max(axis=1))
    g = _weight(mdp.gamma)
    best = {s: max(Fraction(v) for v in row) for s, row in zip(mdp.states, t)}
    out = np.empty(mdp.shape, dtype=object)
    for i, s in enumerate(mdp.states):
        for j, a in enumerate(mdp.actions):
            out[i, j] = _weight(mdp.reward[(s, a)]) + g * sum(
                (w * best[u] for u, w in mdp.transition[(s, a)].items()), Fraction(0))
    return QFunction(mdp.states, mdp.actions, out)


def bellman_residual(mdp: FiniteMdp, q) -> float:
    t = _table(mdp, q)
    return float(np.max(np.abs(mdp.R + mdp.gamma * mdp.P @ t.max(axis=1) - t)))


def bellman_map(mdp: FiniteMdp) -> DecomposedMap:
    """T as a map on flat Q-vectors with one scalar component per (s,a)."""
    S, A = mdp.shape
    P, R, g = mdp.P, mdp.R, mdp.gamma

    def comp(p):
        s, a = divmod(p, A)
        return lambda x: np.array([R[s, a] + g * (P[s, a] @ x.reshape(S, A).max(axis=1))])

    def full(x):
        return (R + g * P @ x.reshape(S, A).max(axis=1)).ravel()

    return DecomposedMap((1,) * (S * A), [comp(p) for p in range(S * A)], full=full)


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, max_iter: int = 1_000_000,
                    q0=None) -> QFunction:
    """Synchronous iteration of T until ‖Tq − q‖∞ ≤ tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros(mdp.shape) if q0 is None else np.array(_table(mdp, q0), dtype=float)
    for _ in range(max_iter):
        nq = mdp.R + mdp.gamma * mdp.P @ q.max(axis=1)
        if np.max(np.abs(nq - q)) <= tol:
            return QFunction(mdp.states, mdp.actions, q)
        q = nq
    raise RuntimeError("value iteration did not reach tolerance")  # unreachable for γ < 1


def async_value_iteration(mdp: FiniteMdp, sched: StaleSchedule, q0=None, tol: float = 1e-10
                          ) -> tuple[QFunction, IterationTrace]:
    """Run T through the asynchronous engine; components are (s,a) pairs."""
    x0 = np.zeros(mdp.P.shape[0] * mdp.P.shape[1]) if q0 is None else _table(mdp, q0).ravel()
    x, trace = run_async(bellman_map(mdp), sched, x0, tol=tol)
    A = len(mdp.actions)
    trace.components = [(mdp.states[c // A], mdp.actions[c % A]) for c in trace.components]
    return QFunction(mdp.states, mdp.actions, x.reshape(mdp.shape)), trace


@dataclass(frozen=True)
class LearnConfig:
    steps: int = 100_000
    seed: int = 0
    step_rule: StepRule = field(default_factory=Harmonic)
    exploration: str = "uniform"
    start: Hashable | None = None     # initial state for trajectory exploration
    trace_every: int = 1000           # record one trace row per this many updates

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.exploration not in EXPLORATIONS:
            raise ValueError(f"exploration must be one of {EXPLORATIONS}")
        if self.trace_every < 1:
            raise ValueError("trace_every must be positive")

    @property
    def robbins_monro(self) -> bool:
        return robbins_monro(self.step_rule)


def _visit_counts(pairs: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Per-step visit index k (0-based) of each pair; updates ``counts``."""
    order = np.argsort(pairs, kind="stable")
    sp = pairs[order]
    starts = np.flatnonzero(np.r_[True, sp[1:] != sp[:-1]])
    run_len = np.diff(np.r_[starts, len(sp)])
    within = np.arange(len(sp)) - np.repeat(starts, run_len)
    k = np.empty(len(pairs), dtype=np.int64)
    k[order] = within + counts[sp]
    np.add.at(counts, pairs, 1)
    return k


def _reachable(mdp: FiniteMdp, start: int) -> np.ndarray:
    seen = np.zeros(len(mdp.states), bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        s = frontier.pop()
        for t in np.flatnonzero(mdp.P[s].sum(axis=0) > 0):
            if not seen[t]:
                seen[t] = True
                frontier.append(t)
    return seen


def async_q_learning(mdp: FiniteMdp, cfg: LearnConfig = LearnConfig(), q0=None
                     ) -> tuple[QFunction, IterationTrace]:
    """Sample-based asynchronous Q-learning.

    Each update picks a pair (s,a) from the exploration schedule, samples
    s' ~ P(.|s,a), and sets q(s,a) <- (1-α)q(s,a) + α[r + γ max q(s',.)],
    with α from the step rule evaluated at the pair's own visit count.
    Samples are drawn in chunks from a seeded generator, so the result is a
    pure function of (mdp, cfg, q0).
    """
    S, A = mdp.shape
    rng = np.random.default_rng(cfg.seed)
    Q = [list(map(float, row)) for row in (np.zeros(mdp.shape) if q0 is None else _table(mdp, q0))]
    counts = np.zeros(S * A, dtype=np.int64)
    cum = np.cumsum(mdp.P.reshape(S * A, S), axis=1)
    cum[:, -1] = np.inf   # guard against rounding in the last bucket
    R = mdp.R.ravel().tolist()
    g = float(mdp.gamma)
    trace = IterationTrace()
    trace.initial_residual = bellman_residual(mdp, np.array(Q))
    cur = mdp.states.index(cfg.start) if cfg.start is not None else 0
    if cfg.exploration == "trajectory":
        reach = _reachable(mdp, cur)
        trace.unvisited = [(s, a) for i, s in enumerate(mdp.states) if not reach[i] for a in mdp.actions]

    done = 0
    while done < cfg.steps:
        m = min(_CHUNK, cfg.steps - done)
        if cfg.exploration == "uniform":
            pairs = rng.integers(0, S * A, size=m)
            u = rng.random(m)
            nxt = (u[:, None] >= cum[pairs]).sum(axis=1)
        else:
            acts = rng.integers(0, A, size=m)
            u = rng.random(m)
            pairs = np.empty(m, dtype=np.int64)
            nxt = np.empty(m, dtype=np.int64)
            for i in range(m):
                p = cur * A + int(acts[i])
                pairs[i] = p
                cur = int(np.searchsorted(cum[p], u[i], side="right"))
                nxt[i] = cur
        k = _visit_counts(pairs, counts)
        alphas = _alphas(cfg.step_rule, k)
        ss, aa = np.divmod(pairs, A)
        rows = [Q[s] for s in ss.tolist()]
        for i, (row, a, p, s2, al) in enumerate(zip(rows, aa.tolist(), pairs.tolist(),
                                                    nxt.tolist(), alphas.tolist())):
            row[a] = (1.0 - al) * row[a] + al * (R[p] + g * max(Q[s2]))
            t = done + i
            if (t + 1) % cfg.trace_every == 0:
                trace.record(t, (mdp.states[p // A], mdp.actions[a]), row[a],
                             bellman_residual(mdp, np.array(Q)))
        done += m
    table = np.array(Q).reshape(mdp.shape)
    if not np.all(np.isfinite(table)):
        raise ArithmeticError("Q-learning produced non-finite values")
    never = [(mdp.states[p // A], mdp.actions[p % A]) for p in np.flatnonzero(counts == 0)]
    trace.unvisited = sorted(set(trace.unvisited) | set(never), key=lambda sa: mdp.pairs().index(sa))
    trace.final_residual = bellman_residual(mdp, table)
    trace.status = HORIZON_EXHAUSTED
    return QFunction(mdp.states, mdp.actions, table), trace


def _alphas(rule: StepRule, k: np.ndarray) -> np.ndarray:
    if isinstance(rule, Harmonic):
        return rule.c / (k + rule.k0)
    return np.full(k.shape, float(rule.c))


def q_learning_replay(mdp: FiniteMdp, order: Sequence[tuple], q0=None) -> QFunction:
    """Apply exact Bellman component updates in ``order`` through the
    asynchronous engine with fresh reads (one pair per step)."""
    A = len(mdp.actions)
    idx = [mdp.states.index(s) * A + mdp.actions.index(a) for s, a in order]
    sched = StaleSchedule.from_sequence(idx, len(mdp.states) * A)
    q, _ = async_value_iteration(mdp, sched, q0, tol=0.0)
    return q


def q_learning_batch(mdp: FiniteMdp, table, samples: Sequence[tuple], counts=None,
                     rule: StepRule = Harmonic()) -> tuple[np.ndarray, np.ndarray]:
    """Apply Q-learning updates for externally observed samples (s, a, r, s').

    Same update as ``async_q_learning`` but rewards come from the caller
    rather than the MDP, and visit counts persist across batches.  Returns
    fresh (table, counts) arrays; the inputs are not modified.
    """
    S, A = mdp.shape
    Q = np.array(_table(mdp, table), dtype=float)
    cnt = np.zeros(S * A, dtype=np.int64) if counts is None else np.array(counts, dtype=np.int64)
    sidx = {s: i for i, s in enumerate(mdp.states)}
    aidx = {a: j for j, a in enumerate(mdp.actions)}
    g = float(mdp.gamma)
    for s, a, r, s2 in samples:
        i, j = sidx[s], aidx[a]
        p = i * A + j
        al = float(rule(int(cnt[p])))
        cnt[p] += 1
        Q[i, j] = (1.0 - al) * Q[i, j] + al * (float(r) + g * Q[sidx[s2]].max())
    if not np.all(np.isfinite(Q)):
        raise ArithmeticError("Q-learning produced non-finite values")
    return Q, cnt
