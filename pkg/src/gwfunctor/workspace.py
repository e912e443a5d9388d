"""Discrete-event global workspace.

Process agents run finite MDP behaviours and emit valued chunks at their own
random local times.  Every E emits the workspace holds an auction: the
latest bids become demand-price intercepts of a network economy, the
equilibrium flows rank the bidders, the top ``capacity`` are posted to the
short-term buffer and broadcast, and each agent consolidates its recent
transitions by Q-learning with its realized producer utility as reward.

There is no shared clock.  Each agent, and the buffer itself (id ``stm``),
keeps a private local time that only it advances; log records carry the
stamps of the participants and nothing else.  The simulation is a pure
function of the config: all randomness comes from per-agent generators
spawned from the config seed, and the state is a reducer over log records,
so a log replays to the same state bit for bit.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .economy import EconomyError, NetworkEconomy, equilibrium, producer_utilities
from .fields import FieldError, Partition, make_partition
from .serial import canonical_json, config_hash, load_config
from .steps import Harmonic
from .url import FiniteMdp, MdpError, q_learning_batch
from .vi import CONVERGED, DivergenceError

log = logging.getLogger(__name__)

LOG_VERSION = 1
STM = "stm"
KINDS = ("emit", "auction", "post", "broadcast", "learn")
ECONOMY_TEMPLATE_KEYS = ("b", "h", "g", "c", "d", "e", "s", "l", "w", "kappa",
                         "cap_Q", "cap_q", "cap_pi")


class WorkspaceError(ValueError):
    pass


class ReplayError(WorkspaceError):
    pass


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ChunkSpec:
    tag: str
    valuation: float


@dataclass(frozen=True)
class AgentSpec:
    """Static description of a process agent."""

    id: str
    mdp: FiniteMdp
    chunks: Mapping[Any, ChunkSpec]
    rate: float = 1.0
    field: Partition | None = None     # information field on the MDP states
    start: Any = None
    epsilon: float = 0.1
    noise: float = 0.0                 # valuations jitter by a factor in [1-noise, 1+noise]

    def __post_init__(self):
        if not self.id or self.id == STM:
            raise WorkspaceError(f"invalid agent id {self.id!r}")
        if not (self.rate > 0 and np.isfinite(self.rate)):
            raise WorkspaceError(f"agent {self.id}: rate must be positive and finite")
        if not 0 <= self.epsilon <= 1:
            raise WorkspaceError(f"agent {self.id}: epsilon must lie in [0, 1]")
        if not 0 <= self.noise < 1:
            raise WorkspaceError(f"agent {self.id}: noise must lie in [0, 1)")
        missing = [s for s in self.mdp.states if s not in self.chunks]
        if missing:
            raise WorkspaceError(f"agent {self.id}: no chunk for states {missing}")
        for s, ch in self.chunks.items():
            if not (np.isfinite(ch.valuation) and ch.valuation >= 0):
                raise WorkspaceError(f"agent {self.id}: valuation at {s!r} must be finite and >= 0")
        try:
            fld = make_partition(self.field if self.field is not None else [[s] for s in self.mdp.states],
                                 self.mdp.states)
        except FieldError as exc:
            raise WorkspaceError(f"agent {self.id}: {exc}") from None
        object.__setattr__(self, "field", fld)
        start = self.mdp.states[0] if self.start is None else self.start
        if start not in self.mdp.states:
            raise WorkspaceError(f"agent {self.id}: unknown start state {start!r}")
        object.__setattr__(self, "start", start)

    @classmethod
    def from_config(cls, cfg: Mapping) -> "AgentSpec":
        """Either a full ``mdp`` table with ``chunks = {state = {tag, valuation}}``
        or the shorthand ``valuation = v``: one idle state, one chunk."""
        cfg = dict(cfg)
        aid = str(cfg.pop("id", ""))
        try:
            if "mdp" in cfg:
                mdp = FiniteMdp.from_json(cfg.pop("mdp"))
                lookup = {str(s): s for s in mdp.states}
                chunks = {lookup[str(k)]: ChunkSpec(str(v["tag"]), float(v["valuation"]))
                          for k, v in cfg.pop("chunks").items()}
                field_ = cfg.pop("field", None)
                if field_ is not None:
                    field_ = [[lookup[str(s)] for s in b] for b in field_]
                start = cfg.pop("start", None)
                start = lookup.get(str(start), start) if start is not None else None
            else:
                v = float(cfg.pop("valuation"))
                mdp = FiniteMdp(("idle",), ("stay",), {("idle", "stay"): {"idle": 1}},
                                {("idle", "stay"): 0.0}, float(cfg.pop("gamma", 0.5)))
                chunks = {"idle": ChunkSpec(str(cfg.pop("tag", aid)), v)}
                field_, start = None, None
        except (KeyError, TypeError, MdpError) as exc:
            raise WorkspaceError(f"agent {aid or '?'}: bad behaviour config ({exc})") from None
        known = {"rate", "epsilon", "noise"}
        if set(cfg) - known:
            raise WorkspaceError(f"agent {aid}: unknown keys {sorted(set(cfg) - known)}")
        return cls(aid, mdp, chunks, float(cfg.get("rate", 1.0)), field_, start,
                   float(cfg.get("epsilon", 0.1)), float(cfg.get("noise", 0.0)))


@dataclass(frozen=True)
class WorkspaceConfig:
    agents: tuple
    capacity: int = 1
    epoch_emits: int = 4
    budget: int = 200
    seed: int = 0
    economy: Mapping = field(default_factory=dict)
    bid_base: float = 1.0
    bid_scale: float = 1.0
    solver_tol: float = 1e-9
    solver_max_iter: int = 100_000
    step_rule: Harmonic = Harmonic()
    raw: Mapping = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise WorkspaceError("at least one agent is required")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise WorkspaceError("duplicate agent ids")
        if self.capacity < 1 or self.epoch_emits < 1 or self.budget < 0:
            raise WorkspaceError("capacity and epoch_emits must be positive, budget non-negative")
        if self.bid_scale < 0:
            raise WorkspaceError("bid_scale must be non-negative")
        if self.solver_tol <= 0 or self.solver_max_iter < 1:
            raise WorkspaceError("solver tolerance and iteration cap must be positive")
        bad = set(self.economy) - set(ECONOMY_TEMPLATE_KEYS) - {"n"}
        if bad:
            raise WorkspaceError(f"unknown economy template keys {sorted(bad)}")
        try:
            self.build_economy([0.0])
        except (EconomyError, TypeError, ValueError) as exc:
            raise WorkspaceError(f"bad economy template: {exc}") from None

    @property
    def transporters(self) -> int:
        return int(self.economy.get("n", 1))

    def build_economy(self, valuations: Sequence[float]) -> NetworkEconomy:
        m = len(valuations)
        coefs = {k: v for k, v in self.economy.items() if k != "n"}
        a = (self.bid_base + self.bid_scale * np.asarray(valuations, float)).reshape(m, 1, 1)
        return NetworkEconomy(m, self.transporters, self.capacity, a=a, **coefs)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def with_seed(self, seed: int) -> "WorkspaceConfig":
        return WorkspaceConfig.from_mapping({**self.raw, "seed": int(seed)})

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "WorkspaceConfig":
        raw = copy.deepcopy(dict(cfg.get("workspace", cfg)))
        c = dict(raw)
        econ = dict(c.pop("economy", {}))
        bid_base = float(econ.pop("bid_base", 1.0))
        bid_scale = float(econ.pop("bid_scale", 1.0))
        agents = tuple(AgentSpec.from_config(a) for a in c.pop("agents", []))
        learn = dict(c.pop("learning", {}))
        rule = Harmonic(float(learn.pop("c", 1.0)), float(learn.pop("k0", 1.0)))
        if learn:
            raise WorkspaceError(f"unknown learning keys {sorted(learn)}")
        kw = {}
        for k, conv in (("capacity", int), ("epoch_emits", int), ("budget", int), ("seed", int),
                        ("solver_tol", float), ("solver_max_iter", int)):
            if k in c:
                kw[k] = conv(c.pop(k))
        if c:
            raise WorkspaceError(f"unknown workspace keys {sorted(c)}")
        return cls(agents, economy=econ, bid_base=bid_base, bid_scale=bid_scale,
                   step_rule=rule, raw=raw, **kw)

    @classmethod
    def load(cls, path: str | Path) -> "WorkspaceConfig":
        return cls.from_mapping(load_config(path))


# --- runtime state -----------------------------------------------------------


@dataclass
class ProcessAgent:
    """Mutable runtime state of one agent; only the reducer writes it."""

    spec: AgentSpec
    state: Any
    clock: float = 0.0
    q: np.ndarray = None
    counts: np.ndarray = None
    pending: list = field(default_factory=list)    # (s, a, s') since the last learn
    bid: tuple | None = None                       # (tag, valuation)
    utility: float = 0.0
    occupancy: int = 0
    emits: int = 0
    received: tuple = ()

    def __post_init__(self):
        S, A = self.spec.mdp.shape
        if self.q is None:
            self.q = np.zeros((S, A))
        if self.counts is None:
            self.counts = np.zeros(S * A, dtype=np.int64)

    def greedy_action(self, s=None):
        """Greedy action on the information-block average of the Q-table, so
        the policy is measurable with respect to the agent's field."""
        mdp = self.spec.mdp
        s = self.state if s is None else s
        block = next(b for b in self.spec.field if s in b)
        rows = [mdp.states.index(t) for t in mdp.states if t in block]
        return mdp.actions[int(np.argmax(self.q[rows].mean(axis=0)))]

    def to_json(self) -> dict:
        return {"state": self.state, "clock": self.clock, "q": self.q, "counts": self.counts,
                "pending": [list(t) for t in self.pending],
                "bid": list(self.bid) if self.bid else None, "utility": self.utility,
                "occupancy": self.occupancy, "emits": self.emits, "received": list(self.received)}


@dataclass(frozen=True)
class Slot:
    producer: str
    tag: str
    flow: float


@dataclass
class StmBuffer:
    capacity: int
    slots: tuple = ()

    def post(self, slots: Sequence[Slot]) -> None:
        slots = tuple(slots)
        if len(slots) > self.capacity:
            raise WorkspaceError(f"{len(slots)} posts exceed capacity {self.capacity}")
        if any(not (s.flow >= 0) for s in slots):
            raise WorkspaceError("posted flows must be non-negative")
        self.slots = slots


@dataclass
class WorkspaceState:
    config: WorkspaceConfig
    agents: dict = None
    buffer: StmBuffer = None
    stm_clock: int = 0
    since_epoch: int = 0
    epochs: int = 0
    solved: int = 0
    skipped: int = 0
    last_auction: dict | None = None

    def __post_init__(self):
        if self.agents is None:
            self.agents = {a.id: ProcessAgent(a, a.start) for a in self.config.agents}
        if self.buffer is None:
            self.buffer = StmBuffer(self.config.capacity)

    def occupancy_fractions(self) -> dict:
        return {k: (a.occupancy / self.solved if self.solved else 0.0) for k, a in self.agents.items()}

    def to_json(self) -> dict:
        return {"agents": {k: a.to_json() for k, a in self.agents.items()},
                "slots": [[s.producer, s.tag, s.flow] for s in self.buffer.slots],
                "stm_clock": self.stm_clock, "since_epoch": self.since_epoch, "epochs": self.epochs,
                "solved": self.solved, "skipped": self.skipped}

    def summary(self) -> dict:
        return {"config_hash": self.config.hash, "epochs": self.epochs, "solved": self.solved,
                "skipped": self.skipped, "occupancy": self.occupancy_fractions(),
                "utility": {k: a.utility for k, a in self.agents.items()},
                "q": {k: {"states": list(a.spec.mdp.states), "actions": list(a.spec.mdp.actions),
                          "table": a.q} for k, a in self.agents.items()}}

    # --- reducer ---

    def _tick(self, stamps: Mapping) -> None:
        for k, t in stamps.items():
            if k == STM:
                if not t > self.stm_clock:
                    raise ReplayError(f"workspace clock did not advance ({t} after {self.stm_clock})")
                self.stm_clock = t
                continue
            if k not in self.agents:
                raise ReplayError(f"unknown agent {k!r} in stamps")
            a = self.agents[k]
            if not t > a.clock:
                raise ReplayError(f"local time of {k} did not advance ({t} after {a.clock})")
            a.clock = t

    def apply(self, rec: Mapping, verify: bool = False) -> None:
        kind, p = rec["kind"], rec["payload"]
        if kind not in KINDS:
            raise ReplayError(f"unknown event kind {kind!r}")
        self._tick(rec["stamps"])
        if kind == "emit":
            a = self.agents[p["agent"]]
            if p["state"] != a.state:
                raise ReplayError(f"emit from {a.spec.id} in state {p['state']!r}, expected {a.state!r}")
            a.bid = (p["tag"], p["valuation"])
            a.pending.append((p["state"], p["action"], p["next"]))
            a.state = p["next"]
            a.emits += 1
            self.since_epoch += 1
        elif kind == "auction":
            if verify:
                again = solve_auction(self.config, self._bids(), self._occupancy())
                if canonical_json(again) != canonical_json(p):
                    raise ReplayError(f"auction {self.epochs + 1} does not reproduce from its bids")
            self.epochs += 1
            self.since_epoch = 0
            self.last_auction = dict(p)
            if p["status"] == "solved":
                self.solved += 1
            else:
                self.skipped += 1
        elif kind == "post":
            slots = [Slot(*s) for s in p["slots"]]
            self.buffer.post(slots)
            for s in slots:
                self.agents[s.producer].occupancy += 1
        elif kind == "broadcast":
            for k in rec["stamps"]:
                if k != STM:
                    self.agents[k].received = tuple(p["tags"])
        elif kind == "learn":
            a = self.agents[p["agent"]]
            if len(a.pending) != p["samples"]:
                raise ReplayError(f"learn for {a.spec.id} covers {p['samples']} samples, "
                                  f"{len(a.pending)} pending")
            r = p["reward"]
            a.q, a.counts = q_learning_batch(a.spec.mdp, a.q, [(s, u, r, t) for s, u, t in a.pending],
                                             a.counts, self.config.step_rule)
            a.pending = []
            a.utility += r

    def _bids(self) -> list:
        return [(k, a.bid[1]) for k, a in self.agents.items() if a.bid is not None]

    def _occupancy(self) -> dict:
        return {k: a.occupancy for k, a in self.agents.items()}


def solve_auction(cfg: WorkspaceConfig, bids: Sequence[tuple], occupancy: Mapping) -> dict:
    """Solve the bid economy and choose the posted producers.

    Bidders are ranked by total equilibrium flow; exact ties go to the
    bidder posted less often so far, then to config order.
    """
    ids = [b[0] for b in bids]
    vals = [float(b[1]) for b in bids]
    out = {"bidders": ids, "valuations": vals}
    if not bids:
        return {**out, "status": "skipped", "reason": "no bids"}
    try:
        rep = equilibrium(cfg.build_economy(vals), tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    except (DivergenceError, EconomyError) as exc:
        return {**out, "status": "skipped", "reason": str(exc)}
    if rep.status != CONVERGED:
        return {**out, "status": "skipped", "reason": f"solver stopped with gap {rep.gap:.3g}"}
    flows = rep.state.Q.sum(axis=(1, 2))
    order = sorted(range(len(ids)), key=lambda i: (-float(flows[i]), occupancy.get(ids[i], 0), i))
    posted = [i for i in order[:cfg.capacity] if flows[i] > 0]
    return {**out, "status": "solved", "flows": flows.tolist(),
            "utilities": producer_utilities(cfg.build_economy(vals), rep.state).tolist(),
            "gap": rep.gap, "iterations": rep.iterations, "posted": [ids[i] for i in posted]}


# --- event log -----------------------------------------------------------------


@dataclass
class EventLog:
    config_hash: str
    records: list = field(default_factory=list)

    def header(self) -> dict:
        return {"kind": "header", "version": LOG_VERSION, "config_hash": self.config_hash}

    def to_jsonl(self) -> str:
        return "".join(canonical_json(r) + "\n" for r in [self.header()] + self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        lines = text.splitlines()
        if not lines:
            raise ReplayError("empty log")
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError:
            raise ReplayError("log header is not valid JSON") from None
        if head.get("kind") != "header" or head.get("version") != LOG_VERSION:
            raise ReplayError("missing or incompatible log header")
        recs = []
        for n, line in enumerate(lines[1:], start=2):
            try:
                recs.append(json.loads(line))
            except json.JSONDecodeError:
                if n == len(lines) and not text.endswith("\n"):
                    log.warning("dropping truncated final log line")
                    break
                raise ReplayError(f"log line {n} is not valid JSON") from None
        return cls(head["config_hash"], recs)

    @classmethod
    def read(cls, path: str | Path) -> "EventLog":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


# --- simulation ------------------------------------------------------------------


class Simulation:
    """Seeded discrete-event loop.  ``events()`` yields each record after it
    has been applied to ``state``."""

    def __init__(self, cfg: WorkspaceConfig):
        self.cfg = cfg
        self.state = WorkspaceState(cfg)
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(cfg.agents) + 1)
        self._sched = np.random.default_rng(seqs[0])
        self._rngs = {a.id: np.random.default_rng(s) for a, s in zip(cfg.agents, seqs[1:])}
        rates = np.array([a.rate for a in cfg.agents])
        self._cum = np.cumsum(rates / rates.sum())
        self._cum[-1] = np.inf

    def _advance(self, aid: str) -> float:
        a = self.state.agents[aid]
        t = a.clock + self._rngs[aid].exponential(1.0 / a.spec.rate)
        return float(max(t, np.nextafter(a.clock, np.inf)))

    def _emit(self) -> dict:
        spec = self.cfg.agents[int(np.searchsorted(self._cum, self._sched.random(), side="right"))]
        a = self.state.agents[spec.id]
        rng = self._rngs[spec.id]
        t = self._advance(spec.id)
        chunk = spec.chunks[a.state]
        jitter, explore, pick, u = rng.random(4)
        v = chunk.valuation * (1.0 + spec.noise * (2.0 * jitter - 1.0))
        mdp = spec.mdp
        act = mdp.actions[int(pick * len(mdp.actions))] if explore < spec.epsilon else a.greedy_action()
        dist = mdp.transition[(a.state, act)]
        cum = np.cumsum([float(w) for _, w in dist.items()])
        succ = [s for s, _ in dist.items()][min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)]
        return {"kind": "emit", "stamps": {spec.id: t},
                "payload": {"agent": spec.id, "state": a.state, "action": act, "next": succ,
                            "tag": chunk.tag, "valuation": float(v)}}

    def _epoch(self) -> Iterator[dict]:
        st = self.state
        res = solve_auction(self.cfg, st._bids(), st._occupancy())
        yield {"kind": "auction", "stamps": {STM: st.stm_clock + 1}, "payload": res}
        if res["status"] != "solved":
            log.info("epoch %d skipped: %s", st.epochs, res["reason"])
            return
        flows = dict(zip(res["bidders"], res["flows"]))
        slots = [[k, st.agents[k].bid[0], flows[k]] for k in res["posted"]]
        yield {"kind": "post", "stamps": {STM: st.stm_clock + 1}, "payload": {"slots": slots}}
        stamps = {STM: st.stm_clock + 1, **{k: self._advance(k) for k in st.agents}}
        yield {"kind": "broadcast", "stamps": stamps, "payload": {"tags": [s[1] for s in slots]}}
        utils = dict(zip(res["bidders"], res["utilities"]))
        for k, a in st.agents.items():
            if a.pending:
                yield {"kind": "learn", "stamps": {k: self._advance(k)},
                       "payload": {"agent": k, "reward": float(utils.get(k, 0.0)),
                                   "samples": len(a.pending)}}

    def events(self) -> Iterator[dict]:
        for _ in range(self.cfg.budget):
            rec = self._emit()
            self.state.apply(rec)
            yield rec
            if self.state.since_epoch == self.cfg.epoch_emits:
                # records are generated lazily so each sees the state left by the previous one
                for rec in self._epoch():
                    self.state.apply(rec)
                    yield rec


def run_simulation(cfg: WorkspaceConfig) -> tuple[EventLog, WorkspaceState]:
    sim = Simulation(cfg)
    elog = EventLog(cfg.hash, list(sim.events()))
    return elog, sim.state


def replay(elog: EventLog | str, cfg: WorkspaceConfig, verify: bool = True) -> WorkspaceState:
    """Rebuild the state from a log (or its JSON-lines text).  With ``verify``
    every auction is re-solved from its bids and must match bit for bit."""
    if isinstance(elog, str):
        elog = EventLog.from_jsonl(elog)
    if elog.config_hash != cfg.hash:
        raise ReplayError("log was produced by a different config")
    st = WorkspaceState(cfg)
    for rec in elog.records:
        st.apply(rec, verify=verify)
    return st
