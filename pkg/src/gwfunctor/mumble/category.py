"""Finite categories given by explicit composition tables."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping


class CategoryError(ValueError):
    def __init__(self, msg: str, witness: tuple | None = None):
        super().__init__(msg if witness is None else f"{msg}: {witness!r}")
        self.witness = witness


@dataclass(frozen=True)
class FiniteCategory:
    """Objects, named arrows ``name -> (source, target)``, an identity per
    object and a composition table ``(g, f) -> g∘f`` (f first)."""

    objects: tuple
    arrows: Mapping[Hashable, tuple]
    identities: Mapping[Hashable, Hashable]
    compose_table: Mapping[tuple, Hashable]

    def src(self, f):
        return self.arrows[f][0]

    def tgt(self, f):
        return self.arrows[f][1]

    def compose(self, g, f):
        """g∘f, defined when tgt(f) = src(g)."""
        return self.compose_table[(g, f)]

    def hom(self, d, c) -> list:
        return self._hom[(d, c)]

    def arrows_into(self, c) -> list:
        """All arrows f: D → C, paired with their source D."""
        return self._into[c]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        arrows = dict(self.arrows)
        object.__setattr__(self, "arrows", arrows)
        hom = {(d, c): [] for d in self.objects for c in self.objects}
        for f, (s, t) in arrows.items():
            hom[(s, t)].append(f)
        object.__setattr__(self, "_hom", hom)
        object.__setattr__(self, "_into", {c: [(f, d) for d in self.objects for f in hom[(d, c)]]
                                           for c in self.objects})

    @property
    def size(self) -> int:
        return len(self.arrows)

    def is_poset(self) -> bool:
        return all(len(v) <= 1 for v in self._hom.values())

    def to_json(self) -> dict:
        return {"objects": list(self.objects),
                "arrows": {str(f): [s, t] for f, (s, t) in self.arrows.items()},
                "identities": {str(c): i for c, i in self.identities.items()},
                "compose": [[g, f, h] for (g, f), h in self.compose_table.items()]}


def validate_category(objects: Iterable[Hashable], arrows: Mapping[Hashable, Iterable],
                      identities: Mapping[Hashable, Hashable],
                      compose: Mapping[tuple, Hashable]) -> FiniteCategory:
    """Check every category law by enumeration; errors carry the failing witness."""
    objects = tuple(objects)
    if len(set(objects)) != len(objects):
        raise CategoryError("duplicate objects")
    arrows = {f: tuple(st) for f, st in arrows.items()}
    obj = set(objects)
    for f, (s, t) in arrows.items():
        if s not in obj or t not in obj:
            raise CategoryError("arrow endpoint is not an object", (f, s, t))
    for c in objects:
        i = identities.get(c)
        if i not in arrows or arrows[i] != (c, c):
            raise CategoryError("missing or ill-typed identity", (c, i))
    comp = dict(compose)
    for c in objects:
        comp.setdefault((identities[c], identities[c]), identities[c])
    for f, (s, t) in arrows.items():
        comp.setdefault((identities[t], f), f)
        comp.setdefault((f, identities[s]), f)
    for (g, f), h in comp.items():
        if g not in arrows or f not in arrows or h not in arrows:
            raise CategoryError("composition mentions an unknown arrow", (g, f, h))
        if arrows[f][1] != arrows[g][0]:
            raise CategoryError("composition of non-composable pair", (g, f))
        if arrows[h] != (arrows[f][0], arrows[g][1]):
            raise CategoryError("composite has the wrong type", (g, f, h))
    for f, (s, t) in arrows.items():
        for g, (s2, t2) in arrows.items():
            if t == s2 and (g, f) not in comp:
                raise CategoryError("composition table is not total", (g, f))
    for f, (s, t) in arrows.items():
        if comp[(identities[t], f)] != f or comp[(f, identities[s])] != f:
            raise CategoryError("identity is not neutral", (f,))
    for f, g, h in itertools.product(arrows, repeat=3):
        # h: A → B, g: B → C, f: C → D
        if arrows[h][1] == arrows[g][0] and arrows[g][1] == arrows[f][0]:
            if comp[(f, comp[(g, h)])] != comp[(comp[(f, g)], h)]:
                raise CategoryError("associativity fails", (f, g, h))
    return FiniteCategory(objects, arrows, dict(identities), comp)


def category_from_json(data: Mapping) -> FiniteCategory:
    """``{objects, arrows: {name: [src, tgt]}, identities: {obj: name}, compose: [[g, f, g∘f], ...]}``.
    Identities default to arrows named ``id_<obj>``, created if absent."""
    objects = list(data["objects"])
    arrows = {f: tuple(st) for f, st in data.get("arrows", {}).items()}
    ids = dict(data.get("identities", {}))
    for c in objects:
        ids.setdefault(c, f"id_{c}")
        arrows.setdefault(ids[c], (c, c))
    comp = {(g, f): h for g, f, h in data.get("compose", [])}
    return validate_category(objects, arrows, ids, comp)


def _from_generators(objects, gens: Mapping[str, tuple], extra: Mapping[tuple, str] = None):
    ids = {c: f"id_{c}" for c in objects}
    arrows = {ids[c]: (c, c) for c in objects}
    arrows.update(gens)
    return validate_category(objects, arrows, ids, extra or {})


def terminal_category() -> FiniteCategory:
    return _from_generators(("*",), {})


def discrete_category(n: int) -> FiniteCategory:
    return _from_generators(tuple(range(n)), {})


def arrow_category() -> FiniteCategory:
    """0 --u--> 1."""
    return _from_generators((0, 1), {"u": (0, 1)})


def parallel_pair() -> FiniteCategory:
    """0 ⇉ 1 with arrows s, t."""
    return _from_generators((0, 1), {"s": (0, 1), "t": (0, 1)})


def chain3() -> FiniteCategory:
    """0 → 1 → 2 with the composite."""
    return _from_generators((0, 1, 2), {"a": (0, 1), "b": (1, 2), "ba": (0, 2)},
                            {("b", "a"): "ba"})


def cospan() -> FiniteCategory:
    """0 → 2 ← 1."""
    return _from_generators((0, 1, 2), {"p": (0, 2), "q": (1, 2)})


def span() -> FiniteCategory:
    """1 ← 0 → 2."""
    return _from_generators((0, 1, 2), {"p": (0, 1), "q": (0, 2)})


def idempotent_monoid() -> FiniteCategory:
    """One object with a non-identity idempotent e∘e = e."""
    return _from_generators(("*",), {"e": ("*", "*")}, {("e", "e"): "e"})


def z2_group() -> FiniteCategory:
    """One object with an involution t∘t = id."""
    return _from_generators(("*",), {"t": ("*", "*")}, {("t", "t"): "id_*"})


SMALL_CATEGORIES = {
    "terminal": terminal_category, "discrete2": lambda: discrete_category(2),
    "arrow": arrow_category, "parallel": parallel_pair, "chain3": chain3, "cospan": cospan,
    "span": span, "idempotent": idempotent_monoid, "z2": z2_group,
}
