"""Finite intrinsic model: information fields as partitions and policy
measurability.

A point of the product space H = Ω × Π_α U_α is the tuple
``(ω, u_1, ..., u_n)`` with decisions in agent order.  σ-algebras on finite
sets are represented by their atoms, i.e. partitions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Mapping, Sequence

Partition = list  # list of frozensets


class FieldError(ValueError):
    pass


def make_partition(blocks: Iterable[Iterable[Hashable]], universe: Iterable[Hashable]) -> Partition:
    """Validate that ``blocks`` cover ``universe`` disjointly, without empty blocks."""
    universe = set(universe)
    out, seen = [], set()
    for b in blocks:
        b = frozenset(b)
        if not b:
            raise FieldError("empty block")
        if b & seen:
            raise FieldError(f"blocks overlap on {sorted(map(repr, b & seen))}")
        if not b <= universe:
            raise FieldError(f"block has points outside the space: {sorted(map(repr, b - universe))}")
        seen |= b
        out.append(b)
    if seen != universe:
        raise FieldError(f"blocks miss {len(universe - seen)} point(s)")
    return out


def partition_by(points: Iterable[Hashable], key: Callable[[Hashable], Hashable]) -> Partition:
    groups: dict = {}
    for p in points:
        groups.setdefault(key(p), []).append(p)
    return [frozenset(g) for g in groups.values()]


def block_index(partition: Partition) -> dict:
    return {p: i for i, b in enumerate(partition) for p in b}


def refines(fine: Partition, coarse: Partition) -> bool:
    """Every block of ``fine`` sits inside a block of ``coarse``."""
    idx = block_index(coarse)
    return all(len({idx[p] for p in b}) == 1 for b in fine)


def is_subfield(coarse: Partition, fine: Partition) -> bool:
    """σ(coarse) ⊆ σ(fine), i.e. ``fine`` refines ``coarse``."""
    return set().union(*coarse) == set().union(*fine) and refines(fine, coarse)


def _canon(p):
    return tuple(p) if isinstance(p, list) else p


@dataclass(frozen=True)
class DecisionObject:
    agents: tuple
    omega: tuple
    prob: Mapping[Hashable, Fraction]
    decisions: Mapping[Hashable, tuple]        # agent -> U_α
    fields: Mapping[Hashable, Partition]       # agent -> partition of U_α
    info: Mapping[Hashable, Partition]         # agent -> partition of H

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "omega", tuple(self.omega))
        if len(set(self.agents)) != len(self.agents):
            raise FieldError("duplicate agents")
        if not self.omega:
            raise FieldError("nature space is empty")
        prob = {w: Fraction(self.prob.get(w, 0)) for w in self.omega}
        if any(v < 0 for v in prob.values()) or sum(prob.values()) != 1:
            raise FieldError("nature weights must be nonnegative with mass 1")
        object.__setattr__(self, "prob", prob)
        decisions = {}
        for a in self.agents:
            u = tuple(self.decisions[a])
            if not u or len(set(u)) != len(u):
                raise FieldError(f"decision set of {a!r} must be nonempty and duplicate-free")
            decisions[a] = u
        object.__setattr__(self, "decisions", decisions)
        space = self.space()
        object.__setattr__(self, "fields", {
            a: make_partition(self.fields.get(a, [[u] for u in decisions[a]]), decisions[a])
            for a in self.agents})
        object.__setattr__(self, "info", {
            a: make_partition(({_canon(p) for p in b} for b in self.info.get(a, [space])), space)
            for a in self.agents})

    def space(self, agents: Sequence[Hashable] | None = None) -> list[tuple]:
        """H_B = Ω × Π_{α∈B} U_α, with B in agent order (all agents by default)."""
        B = self.agents if agents is None else [a for a in self.agents if a in set(agents)]
        return [(w, *us) for w in self.omega
                for us in itertools.product(*(self.decisions[a] for a in B))]

    def coord(self, agent) -> int:
        return 1 + self.agents.index(agent)

    def with_info(self, agent, partition: Iterable[Iterable]) -> "DecisionObject":
        info = dict(self.info)
        info[agent] = partition
        return DecisionObject(self.agents, self.omega, self.prob, self.decisions, self.fields, info)

    @classmethod
    def from_json(cls, data: Mapping) -> "DecisionObject":
        """Partitions are lists of blocks; a point is a list ``[ω, u_1, ...]``
        or an integer index into :meth:`space` order."""
        agents = tuple(data["agents"])
        omega = tuple(data["omega"])
        if "prob" in data:
            prob = {w: Fraction(str(p)) for w, p in zip(omega, data["prob"])}
        else:
            prob = {w: Fraction(1, len(omega)) for w in omega}
        decisions = {a: tuple(data["decisions"][a]) for a in agents}
        stub = cls(agents, omega, prob, decisions, {}, {})
        space = stub.space()

        def point(p):
            return space[p] if isinstance(p, int) else tuple(p)

        fields = {a: data.get("fields", {}).get(a, [[u] for u in decisions[a]]) for a in agents}
        info = {a: [[point(p) for p in b] for b in blocks]
                for a, blocks in data.get("info", {}).items()}
        return cls(agents, omega, prob, decisions, fields, info)


@dataclass(frozen=True)
class Policy:
    agent: Hashable
    rule: Mapping[tuple, Hashable] | Callable[[tuple], Hashable]

    def __call__(self, point: tuple):
        return self.rule[point] if isinstance(self.rule, Mapping) else self.rule(point)


@dataclass(frozen=True)
class Measurability:
    ok: bool
    witness: tuple | None = None   # two points of one information block with different field cells

    def __bool__(self):
        return self.ok


def check_measurable(obj: DecisionObject, pol: Policy) -> Measurability:
    """Is the policy constant, up to the agent's own field, on every block
    of its information field?"""
    if pol.agent not in obj.agents:
        raise FieldError(f"unknown agent {pol.agent!r}")
    cell = block_index(obj.fields[pol.agent])
    for block in obj.info[pol.agent]:
        first, first_cell = None, None
        for p in sorted(block, key=repr):
            try:
                c = cell[pol(p)]
            except KeyError:
                raise FieldError(f"policy value at {p!r} is not a decision of {pol.agent!r}") from None
            if first is None:
                first, first_cell = p, c
            elif c != first_cell:
                return Measurability(False, (first, p))
    return Measurability(True)


def induced_subfield(obj: DecisionObject, B: Iterable[Hashable], C: Iterable[Hashable]) -> Partition:
    """Partition of H_B by equality of the decisions of agents in C.

    The nature coordinate is not part of the projection, so C = ∅ gives the
    single-block partition.
    """
    B, C = set(B), set(C)
    if not C <= B:
        raise FieldError("C must be a subset of B")
    if not B <= set(obj.agents):
        raise FieldError(f"unknown agents {sorted(map(repr, B - set(obj.agents)))}")
    order = [a for a in obj.agents if a in B]
    keep = [1 + i for i, a in enumerate(order) if a in C]
    return partition_by(obj.space(order), lambda p: tuple(p[i] for i in keep))
