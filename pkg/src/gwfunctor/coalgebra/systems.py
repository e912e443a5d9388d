"""Finite coalgebras, labelled transition systems, homomorphisms and
bisimulation quotients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping

from .functor import apply_functor_map, contains
from .signature import Const, FunctorSignature, Identity, Power, Product, equivalent


class CoalgebraError(ValueError):
    pass


def _sort_key(x):
    return (type(x).__name__, str(x))


@dataclass(frozen=True)
class Coalgebra:
    """Carrier X with structure map X -> F(X)."""

    carrier: tuple
    signature: FunctorSignature
    structure: Mapping[Hashable, Any]

    def __post_init__(self):
        carrier = tuple(self.carrier)
        object.__setattr__(self, "carrier", carrier)
        if len(set(carrier)) != len(carrier):
            raise CoalgebraError("carrier has duplicate states")
        states = set(carrier)
        for s in carrier:
            if s not in self.structure:
                raise CoalgebraError(f"structure undefined at state {s!r}")
            if not contains(self.signature, states, self.structure[s]):
                raise CoalgebraError(
                    f"structure at {s!r} is not an element of F(carrier): {self.structure[s]!r}")
        extra = set(self.structure) - states
        if extra:
            raise CoalgebraError(f"structure defined outside carrier: {sorted(extra, key=_sort_key)}")

    def __call__(self, state):
        return self.structure[state]


@dataclass(frozen=True)
class Lts:
    states: tuple
    labels: tuple
    transitions: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "labels", tuple(self.labels))
        trans = frozenset(tuple(t) for t in self.transitions)
        object.__setattr__(self, "transitions", trans)
        if len(set(self.states)) != len(self.states):
            raise CoalgebraError("duplicate states")
        if not self.labels or len(set(self.labels)) != len(self.labels):
            raise CoalgebraError("labels must be nonempty and duplicate-free")
        states, labels = set(self.states), set(self.labels)
        for s, a, t in trans:
            if s not in states or t not in states:
                raise CoalgebraError(f"transition {(s, a, t)!r} references an undeclared state")
            if a not in labels:
                raise CoalgebraError(f"transition {(s, a, t)!r} uses an undeclared label")

    @property
    def signature(self) -> FunctorSignature:
        return Power(Product(Const("A", self.labels), Identity()))

    def successors(self, s) -> frozenset:
        return frozenset((a, t) for (u, a, t) in self.transitions if u == s)

    def to_coalgebra(self) -> Coalgebra:
        return Coalgebra(self.states, self.signature,
                         {s: self.successors(s) for s in self.states})

    @classmethod
    def from_json(cls, data: Mapping) -> "Lts":
        return cls(tuple(data["states"]), tuple(data["labels"]),
                   frozenset(tuple(t) for t in data.get("transitions", [])))

    def to_json(self) -> dict:
        return {"states": list(self.states), "labels": list(self.labels),
                "transitions": [list(t) for t in sorted(self.transitions, key=lambda t: tuple(map(_sort_key, t)))]}


@dataclass(frozen=True)
class HomomorphismResult:
    ok: bool
    witness: Hashable | None = None
    via_source: Any = None   # F(f)(alpha_src(witness))
    via_target: Any = None   # alpha_dst(f(witness))

    def __bool__(self):
        return self.ok


def check_homomorphism(src: Coalgebra | Lts, dst: Coalgebra | Lts,
                       f: Mapping[Hashable, Hashable]) -> HomomorphismResult:
    """Decide whether F(f) ∘ α_src = α_dst ∘ f, state by state."""
    if isinstance(src, Lts):
        src = src.to_coalgebra()
    if isinstance(dst, Lts):
        dst = dst.to_coalgebra()
    if not equivalent(src.signature, dst.signature):
        raise CoalgebraError("source and target coalgebras have different signatures")
    dst_states = set(dst.carrier)
    for s in src.carrier:
        if s not in f:
            raise CoalgebraError(f"map undefined at source state {s!r}")
        if f[s] not in dst_states:
            raise CoalgebraError(f"map sends {s!r} outside the target carrier")
    Ff = apply_functor_map(src.signature, f)
    for s in src.carrier:
        left = Ff(src.structure[s])
        right = dst.structure[f[s]]
        if left != right:
            return HomomorphismResult(False, s, left, right)
    return HomomorphismResult(True)


def bisimilarity_partition(lts: Lts) -> list[tuple]:
    """Coarsest partition of states into bisimilarity classes.

    Naive signature refinement: start with one block, split every block by the
    set of (label, successor-block) pairs until stable.  Blocks are returned
    sorted, each block sorted, so the output is deterministic.
    """
    states = sorted(lts.states, key=_sort_key)
    succ = {s: [(a, t) for (u, a, t) in lts.transitions if u == s] for s in states}
    block = {s: 0 for s in states}
    n_blocks = 1 if states else 0
    while True:
        sigs: dict = {}
        new_block = {}
        for s in states:
            key = (block[s], frozenset((a, block[t]) for a, t in succ[s]))
            if key not in sigs:
                sigs[key] = len(sigs)
            new_block[s] = sigs[key]
        block = new_block
        if len(sigs) == n_blocks:
            break
        n_blocks = len(sigs)
    groups: dict = {}
    for s in states:
        groups.setdefault(block[s], []).append(s)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: _sort_key(g[0]))


def quotient(lts: Lts) -> tuple[Lts, dict]:
    """Bisimulation quotient of ``lts`` and the canonical projection map.

    Each block is named by its first (smallest) state.
    """
    blocks = bisimilarity_partition(lts)
    proj = {s: b[0] for b in blocks for s in b}
    trans = frozenset((proj[s], a, proj[t]) for s, a, t in lts.transitions)
    return Lts(tuple(b[0] for b in blocks), lts.labels, trans), proj


def is_bisimulation(lts: Lts, relation: Iterable[tuple]) -> bool:
    """Check the two transfer conditions for a relation on one LTS."""
    rel = set(relation)
    succ = {s: lts.successors(s) for s in lts.states}
    for s, t in rel:
        for a, s2 in succ[s]:
            if not any(b == a and (s2, t2) in rel for b, t2 in succ[t]):
                return False
        for a, t2 in succ[t]:
            if not any(b == a and (s2, t2) in rel for b, s2 in succ[s]):
                return False
    return True
