"""Totally asynchronous fixed-point iteration with bounded-staleness schedules.

Asynchrony is simulated on logical time: a :class:`StaleSchedule` lists, for
each step t, which components update and from which (possibly stale) steps
they read every other component.  Component i updating at step t computes

    x_i(t+1) = f_i(x_1(tau_i1(t)), ..., x_n(tau_in(t)))

and every other component keeps its value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .serial import csv_text

CONVERGED = "converged"
HORIZON_EXHAUSTED = "horizon-exhausted"


class ScheduleError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    def __init__(self, component: int, step: int):
        self.component = component
        self.step = step
        super().__init__(f"component {component} became non-finite at step {step}")


@dataclass
class DecomposedMap:
    """F = (f_1, ..., f_n) on X = X_1 x ... x X_n.

    Each f_i receives the full (flattened) vector and returns component i,
    of length ``dims[i]``.  ``full`` optionally evaluates all of F at once
    and is used only for residuals.
    """

    dims: tuple
    components: Sequence[Callable[[np.ndarray], np.ndarray]]
    full: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if any(d <= 0 for d in self.dims):
            raise ValueError("component dimensions must be positive")
        if len(self.components) != len(self.dims):
            raise ValueError("one evaluator per component is required")
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.full is not None:
            return np.asarray(self.full(x), dtype=float)
        return np.concatenate([np.atleast_1d(f(x)) for f in self.components]).astype(float)

    @classmethod
    def linear(cls, A, b) -> "DecomposedMap":
        """Scalar components of x -> A x + b."""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        comps = [lambda x, r=A[i], c=b[i]: np.array([r @ x + c]) for i in range(len(b))]
        return cls((1,) * len(b), comps, full=lambda x: A @ x + b)


@dataclass
class StaleSchedule:
    """Logical asynchronous schedule.

    ``updates`` is a bool array (horizon, n): component i updates at step t.
    ``reads`` is an int array (horizon, n, n) with reads[t, i, j] = tau_ij(t),
    meaningful where updates[t, i] is set.
    """

    updates: np.ndarray
    reads: np.ndarray
    max_gap: int = 1          # B1: each component updates at least once per max_gap steps
    max_staleness: int = 0    # B2: t - tau_ij(t) <= max_staleness
    kind: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        self.updates = np.asarray(self.updates, dtype=bool)
        self.reads = np.asarray(self.reads, dtype=np.int64)
        h, n = self.updates.shape
        if self.reads.shape != (h, n, n):
            raise ScheduleError(f"reads must have shape {(h, n, n)}, got {self.reads.shape}")

    @property
    def n(self) -> int:
        return self.updates.shape[1]

    @property
    def horizon(self) -> int:
        return self.updates.shape[0]

    def update_sets(self, t: int) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.updates[t]))

    def validate(self) -> None:
        t = np.arange(self.horizon)[:, None, None]
        active = np.broadcast_to(self.updates[:, :, None], self.reads.shape)
        tau = self.reads[active]
        lag = np.broadcast_to(t, self.reads.shape)[active] - tau
        if tau.size and (tau.min() < 0 or lag.min() < 0 or lag.max() > self.max_staleness):
            raise ScheduleError("staleness bound violated")
        if not self.updates.any(axis=1).all():
            raise ScheduleError("some step updates no component")
        for i in range(self.n):
            times = np.concatenate([[-1], np.flatnonzero(self.updates[:, i])])
            gaps = np.diff(times)
            if gaps.size == 0 or gaps.max() > self.max_gap:
                raise ScheduleError(f"component {i} idle for more than {self.max_gap} steps")
            if self.horizon - 1 - times[-1] >= self.max_gap:
                raise ScheduleError(f"component {i} idle at the end of the horizon")

    def to_json(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "max_gap": self.max_gap,
                "max_staleness": self.max_staleness,
                "updates": self.updates.astype(int).tolist(), "reads": self.reads.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "StaleSchedule":
        return cls(np.asarray(data["updates"], dtype=bool), np.asarray(data["reads"]),
                   data.get("max_gap", 1), data.get("max_staleness", 0),
                   data.get("kind", "custom"), data.get("seed"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_sequence(cls, order: Sequence[int], n: int) -> "StaleSchedule":
        """One component per step in the given order, fresh reads."""
        h = len(order)
        updates = np.zeros((h, n), dtype=bool)
        updates[np.arange(h), np.asarray(order, dtype=int)] = True
        reads = np.broadcast_to(np.arange(h)[:, None, None], (h, n, n)).copy()
        return cls(updates, reads, max_gap=h, max_staleness=0, kind="sequence")


def make_schedule(kind: str, n: int, horizon: int, max_gap: int = 1, max_staleness: int = 1,
                  seed: int = 0) -> StaleSchedule:
    """Build a schedule satisfying the bounded-gap and bounded-staleness invariants.

    kinds:
      ``synchronous``       every component every step, fresh reads (Jacobi)
      ``roundrobin``        one component per step in cyclic order, fresh reads
      ``random``            random nonempty update sets, uniform staleness in [0, B2]
      ``adversarial-stale`` cyclic updates, every read exactly B2 steps old once t >= B2
    """
    if max_gap < 1 or max_staleness < 1:
        raise ScheduleError("B1 and B2 must be at least 1")
    if horizon < 1 or max_gap > horizon:
        raise ScheduleError(f"infeasible bounds: B1={max_gap} exceeds horizon={horizon}")
    t = np.arange(horizon)
    fresh = np.broadcast_to(t[:, None, None], (horizon, n, n))
    if kind == "synchronous":
        updates = np.ones((horizon, n), dtype=bool)
        return StaleSchedule(updates, fresh.copy(), 1, 0, kind, seed)
    if kind in ("roundrobin", "adversarial-stale"):
        if n > max_gap:
            raise ScheduleError(f"cyclic schedule needs B1 >= n ({max_gap} < {n})")
        updates = np.zeros((horizon, n), dtype=bool)
        updates[t, t % n] = True
        if kind == "roundrobin":
            return StaleSchedule(updates, fresh.copy(), n, 0, kind, seed)
        reads = np.maximum(fresh - max_staleness, 0)
        return StaleSchedule(updates, reads, n, max_staleness, kind, seed)
    if kind == "random":
        rng = np.random.default_rng(seed)
        updates = rng.random((horizon, n)) < 0.5
        empty = ~updates.any(axis=1)
        updates[np.flatnonzero(empty), rng.integers(n, size=int(empty.sum()))] = True
        for i in range(n):
            last = -1
            for u in np.append(np.flatnonzero(updates[:, i]), horizon + max_gap - 1):
                while u - last > max_gap and last + max_gap < horizon:
                    last += max_gap
                    updates[last, i] = True
                last = u
        lag = rng.integers(0, max_staleness + 1, size=(horizon, n, n))
        reads = np.maximum(fresh - lag, 0)
        return StaleSchedule(updates, reads, max_gap, max_staleness, kind, seed)
    raise ScheduleError(f"unknown schedule kind {kind!r}")


@dataclass
class IterationTrace:
    steps: list = field(default_factory=list)        # t
    components: list = field(default_factory=list)   # component updated
    values: list = field(default_factory=list)       # value written
    residuals: list = field(default_factory=list)    # max-norm ||F(x) - x|| after the step
    status: str = HORIZON_EXHAUSTED
    final_residual: float = math.nan
    initial_residual: float = math.nan
    unvisited: list = field(default_factory=list)

    def record(self, t, component, value, residual):
        self.steps.append(int(t))
        self.components.append(component)
        self.values.append(value)
        self.residuals.append(residual)

    def __len__(self):
        return len(self.steps)

    def to_csv(self) -> str:
        width = max((len(np.atleast_1d(v)) for v in self.values), default=1)
        header = ["t", "component", "residual"] + [f"value{i}" for i in range(width)]
        rows = ([t, c if not isinstance(c, tuple) else ":".join(map(str, c)), r,
                 *np.atleast_1d(v).tolist()]
                for t, c, v, r in zip(self.steps, self.components, self.values, self.residuals))
        return csv_text(header, rows)


def _residual(F: DecomposedMap, x: np.ndarray) -> float:
    return float(np.max(np.abs(F(x) - x))) if x.size else 0.0


def run_async(F: DecomposedMap, sched: StaleSchedule, x0, tol: float = 1e-10
              ) -> tuple[np.ndarray, IterationTrace]:
    """Run the asynchronous iteration until ||F(x) - x||_inf <= tol or the
    schedule horizon is exhausted (a normal outcome, not an error)."""
    if sched.n != F.n:
        raise ScheduleError(f"schedule has {sched.n} components, map has {F.n}")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    x = np.array(x0, dtype=float).reshape(F.size)
    trace = IterationTrace()
    res = _residual(F, x)
    trace.initial_residual = trace.final_residual = res
    if res <= tol:
        trace.status = CONVERGED
        return x, trace
    # history[t] = x(t); stale reads index into it
    history = np.empty((sched.horizon + 1, F.size))
    history[0] = x
    col_block = np.repeat(np.arange(F.n), F.dims)
    cols = np.arange(F.size)
    for t in range(sched.horizon):
        new = history[t].copy()
        ups = sched.update_sets(t)
        for i in ups:
            view = history[sched.reads[t, i][col_block], cols]
            value = np.atleast_1d(np.asarray(F.components[i](view), dtype=float))
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(i, t)
            new[F.block(i)] = value
        history[t + 1] = new
        res = _residual(F, new)
        for i in ups:
            v = new[F.block(i)]
            trace.record(t, i, float(v[0]) if v.size == 1 else v.copy(), res)
        trace.final_residual = res
        if res <= tol:
            trace.status = CONVERGED
            return new, trace
    return history[sched.horizon].copy(), trace


def synchronous_iterates(F: DecomposedMap, x0, steps: int) -> np.ndarray:
    """Plain Jacobi iterates x(t+1) = F(x(t)), component by component."""
    x = np.array(x0, dtype=float).reshape(F.size)
    out = [x.copy()]
    for _ in range(steps):
        x = np.concatenate([np.atleast_1d(np.asarray(f(x), dtype=float)) for f in F.components])
        out.append(x.copy())
    return np.array(out)


def check_contraction(F: DecomposedMap, samples: int = 200, seed: int = 0, scale: float = 10.0
                      ) -> float:
    """Estimate the max-norm Lipschitz constant of F from random pairs.

    The result is a lower bound on the true constant.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-scale, scale, size=(samples, F.size))
    vals = np.array([F(p) for p in pts])
    best = -math.inf
    for k in range(samples):
        d = np.max(np.abs(pts[k + 1:] - pts[k]), axis=1) if k + 1 < samples else np.array([])
        if d.size == 0:
            continue
        keep = d > 0
        if not keep.any():
            continue
        num = np.max(np.abs(vals[k + 1:][keep] - vals[k]), axis=1)
        best = max(best, float(np.max(num / d[keep])))
    if best == -math.inf:
        raise ValueError("all sample pairs were degenerate")
    return best
