"""Presheaves on finite categories, subpresheaves with their Heyting
operations, and the sieve presheaf Ω."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np

from .category import FiniteCategory


class PresheafError(ValueError):
    def __init__(self, msg: str, witness: tuple | None = None):
        super().__init__(msg if witness is None else f"{msg}: {witness!r}")
        self.witness = witness


class Presheaf:
    """X(C) for each object and X(f): X(C) → X(D) for each f: D → C.

    Restriction tables for identities may be omitted.  ``act(x, f)`` is x·f.
    """

    def __init__(self, cat: FiniteCategory, sets: Mapping[Hashable, Iterable[Hashable]],
                 restrict: Mapping[Hashable, Mapping[Hashable, Hashable]], check: bool = True):
        self.cat = cat
        self.sets = {c: tuple(sets[c]) for c in cat.objects}
        self.restrict = {}
        for f, (d, c) in cat.arrows.items():
            if f in restrict:
                self.restrict[f] = dict(restrict[f])
            elif f == cat.identities[c]:
                self.restrict[f] = {x: x for x in self.sets[c]}
            else:
                raise PresheafError("restriction missing for arrow", (f,))
        self._members = {c: frozenset(v) for c, v in self.sets.items()}
        if check:
            self.validate()

    def validate(self) -> None:
        cat = self.cat
        for c, xs in self.sets.items():
            if len(set(xs)) != len(xs):
                raise PresheafError("duplicate elements", (c,))
        for f, (d, c) in cat.arrows.items():
            table = self.restrict[f]
            if set(table) != self._members[c]:
                raise PresheafError("restriction is not total on X(C)", (f,))
            bad = [x for x in self.sets[c] if table[x] not in self._members[d]]
            if bad:
                raise PresheafError("restriction leaves X(D)", (f, bad[0]))
        for c in cat.objects:
            i = cat.identities[c]
            for x in self.sets[c]:
                if self.restrict[i][x] != x:
                    raise PresheafError("X(id) is not the identity", (c, x))
        for (g, f), h in cat.compose_table.items():
            # f: D → C, g: C → E, h = g∘f; X(h) = X(f)∘X(g)
            for x in self.sets[cat.tgt(g)]:
                if self.restrict[h][x] != self.restrict[f][self.restrict[g][x]]:
                    raise PresheafError("contravariance fails", (g, f, x))

    def act(self, x, f):
        return self.restrict[f][x]

    def __contains__(self, pair) -> bool:
        c, x = pair
        return x in self._members[c]

    def elements(self):
        """All (stage, element) pairs."""
        return [(c, x) for c in self.cat.objects for x in self.sets[c]]

    def __eq__(self, other):
        return (isinstance(other, Presheaf) and self.cat is other.cat and self.sets == other.sets
                and self.restrict == other.restrict)

    def __hash__(self):
        return id(self)

    @classmethod
    def from_json(cls, cat: FiniteCategory, data: Mapping) -> "Presheaf":
        """``{sets: {obj: [...]}, restrict: {arrow: {elem: elem}}}``; object
        keys are matched by their string form."""
        by_name = {str(c): c for c in cat.objects}
        arrow_name = {str(f): f for f in cat.arrows}
        sets = {by_name[k]: v for k, v in data["sets"].items()}
        for c in cat.objects:
            sets.setdefault(c, [])
        restrict = {}
        for f, table in data.get("restrict", {}).items():
            d, c = cat.arrows[arrow_name[f]]
            lookup = {str(x): x for x in sets[c]}
            target = {str(x): x for x in sets[d]}
            restrict[arrow_name[f]] = {lookup[str(k)]: target[str(v)] for k, v in table.items()}
        return cls(cat, sets, restrict)

    def to_json(self) -> dict:
        return {"sets": {str(c): list(v) for c, v in self.sets.items()},
                "restrict": {str(f): {str(k): v for k, v in t.items()}
                             for f, t in self.restrict.items()}}


def terminal_presheaf(cat: FiniteCategory) -> Presheaf:
    return Presheaf(cat, {c: [()] for c in cat.objects}, {f: {(): ()} for f in cat.arrows})


def representable(cat: FiniteCategory, c) -> Presheaf:
    """y(C): y(C)(D) = hom(D, C), restriction by precomposition."""
    sets = {d: cat.hom(d, c) for d in cat.objects}
    restrict = {f: {g: cat.compose(g, f) for g in sets[cat.tgt(f)]} for f in cat.arrows}
    return Presheaf(cat, sets, restrict)


def product(X: Presheaf, Y: Presheaf) -> Presheaf:
    if X.cat is not Y.cat:
        raise PresheafError("presheaves live on different categories")
    cat = X.cat
    sets = {c: list(itertools.product(X.sets[c], Y.sets[c])) for c in cat.objects}
    restrict = {f: {(x, y): (X.restrict[f][x], Y.restrict[f][y]) for x, y in sets[cat.tgt(f)]}
                for f in cat.arrows}
    return Presheaf(cat, sets, restrict, check=False)


def product_of(factors: list[Presheaf], cat: FiniteCategory) -> Presheaf:
    """Product with tuple elements (x_1, ..., x_n); the empty product is 1."""
    sets = {c: list(itertools.product(*(F.sets[c] for F in factors))) for c in cat.objects}
    restrict = {f: {t: tuple(F.restrict[f][v] for F, v in zip(factors, t))
                    for t in sets[cat.tgt(f)]} for f in cat.arrows}
    return Presheaf(cat, sets, restrict, check=False)


# --- subpresheaves -----------------------------------------------------------


class SubPresheaf:
    """S ↪ X given by S(C) ⊆ X(C), closed under restriction."""

    __slots__ = ("ambient", "sets", "_key")

    def __init__(self, ambient: Presheaf, sets: Mapping[Hashable, Iterable[Hashable]],
                 check: bool = True):
        self.ambient = ambient
        self.sets = {c: frozenset(sets.get(c, ())) for c in ambient.cat.objects}
        self._key = tuple(self.sets[c] for c in ambient.cat.objects)
        if check:
            self.validate()

    def validate(self) -> None:
        X = self.ambient
        for c, s in self.sets.items():
            if not s <= X._members[c]:
                raise PresheafError("S(C) is not a subset of X(C)", (c,))
        for f, (d, c) in X.cat.arrows.items():
            for x in self.sets[c]:
                if X.restrict[f][x] not in self.sets[d]:
                    raise PresheafError("not closed under restriction", (f, x))

    def __contains__(self, pair) -> bool:
        c, x = pair
        return x in self.sets[c]

    def __eq__(self, other):
        return (isinstance(other, SubPresheaf) and other.ambient is self.ambient
                and other._key == self._key)

    def __hash__(self):
        return hash(self._key)

    def __le__(self, other: "SubPresheaf") -> bool:
        _same(self, other)
        return all(a <= b for a, b in zip(self._key, other._key))

    def __repr__(self):
        inner = ", ".join(f"{c!r}: {sorted(map(repr, s))}" for c, s in self.sets.items())
        return f"SubPresheaf({{{inner}}})"

    def __and__(self, other):
        return meet(self, other)

    def __or__(self, other):
        return join(self, other)

    def __invert__(self):
        return negate(self)

    def __rshift__(self, other):
        return implies(self, other)


def _same(S: SubPresheaf, T: SubPresheaf):
    if S.ambient is not T.ambient:
        raise PresheafError("subpresheaves of different ambient presheaves")


def top(X: Presheaf) -> SubPresheaf:
    return SubPresheaf(X, X.sets, check=False)


def bottom(X: Presheaf) -> SubPresheaf:
    return SubPresheaf(X, {}, check=False)


def meet(S: SubPresheaf, T: SubPresheaf) -> SubPresheaf:
    _same(S, T)
    return SubPresheaf(S.ambient, {c: S.sets[c] & T.sets[c] for c in S.sets})


def join(S: SubPresheaf, T: SubPresheaf) -> SubPresheaf:
    _same(S, T)
    return SubPresheaf(S.ambient, {c: S.sets[c] | T.sets[c] for c in S.sets})


def implies(S: SubPresheaf, T: SubPresheaf) -> SubPresheaf:
    """(S⇒T)(C) = {x | ∀ f: D→C, x·f ∈ S(D) ⇒ x·f ∈ T(D)}."""
    _same(S, T)
    X = S.ambient
    out = {}
    for c in X.cat.objects:
        into = X.cat.arrows_into(c)
        out[c] = [x for x in X.sets[c]
                  if all(X.restrict[f][x] not in S.sets[d] or X.restrict[f][x] in T.sets[d]
                         for f, d in into)]
    return SubPresheaf(X, out)


def negate(S: SubPresheaf) -> SubPresheaf:
    return implies(S, bottom(S.ambient))


def sub_heyting(op: str, S: SubPresheaf, T: SubPresheaf | None = None) -> SubPresheaf:
    ops = {"meet": meet, "join": join, "implies": implies}
    if op == "not":
        return negate(S)
    if op not in ops:
        raise ValueError(f"unknown Heyting operation {op!r}")
    if T is None:
        raise ValueError(f"{op} needs two arguments")
    return ops[op](S, T)


def generated(X: Presheaf, seeds: Iterable[tuple]) -> SubPresheaf:
    """Smallest subpresheaf containing the given (stage, element) pairs."""
    sets = {c: set() for c in X.cat.objects}
    for c, x in seeds:
        for f, d in X.cat.arrows_into(c):
            sets[d].add(X.restrict[f][x])
    return SubPresheaf(X, sets, check=False)


def all_subpresheaves(X: Presheaf, limit: int = 1 << 16) -> list[SubPresheaf]:
    """Every subpresheaf, as unions of principal ones (enumerated by closure)."""
    principal = {}
    for c, x in X.elements():
        principal[(c, x)] = generated(X, [(c, x)])
    found = {bottom(X)}
    frontier = [bottom(X)]
    while frontier:
        nxt = []
        for S in frontier:
            for (c, x), P in principal.items():
                if x in S.sets[c]:
                    continue
                U = SubPresheaf(X, {k: S.sets[k] | P.sets[k] for k in S.sets}, check=False)
                if U not in found:
                    found.add(U)
                    nxt.append(U)
                    if len(found) > limit:
                        raise PresheafError(f"more than {limit} subpresheaves")
        frontier = nxt
    return sorted(found, key=lambda S: (sum(map(len, S._key)), repr(S)))


# --- the subobject classifier ------------------------------------------------


def is_sieve(cat: FiniteCategory, c, arrows: Iterable[Hashable]) -> bool:
    S = set(arrows)
    if any(cat.tgt(f) != c for f in S):
        return False
    return all(cat.compose(f, g) in S for f in S for g, _ in cat.arrows_into(cat.src(f)))


def sieves(cat: FiniteCategory, c) -> list[frozenset]:
    """All sieves on C, by enumerating arrow subsets into C."""
    into = [f for f, _ in cat.arrows_into(c)]
    out = []
    for r in range(len(into) + 1):
        for combo in itertools.combinations(into, r):
            if is_sieve(cat, c, combo):
                out.append(frozenset(combo))
    return out


def maximal_sieve(cat: FiniteCategory, c) -> frozenset:
    return frozenset(f for f, _ in cat.arrows_into(c))


def omega(cat: FiniteCategory) -> Presheaf:
    """Ω(C) = sieves on C; along f: D→C a sieve S pulls back to {g | f∘g ∈ S}."""
    sets = {c: sieves(cat, c) for c in cat.objects}
    restrict = {}
    for f, (d, c) in cat.arrows.items():
        into_d = [g for g, _ in cat.arrows_into(d)]
        restrict[f] = {S: frozenset(g for g in into_d if cat.compose(f, g) in S) for S in sets[c]}
    return Presheaf(cat, sets, restrict)


def characteristic(S: SubPresheaf) -> dict:
    """χ_S: X → Ω, χ(x at C) = {f: D→C | x·f ∈ S(D)}, as {C: {x: sieve}}."""
    X = S.ambient
    return {c: {x: frozenset(f for f, d in X.cat.arrows_into(c) if X.restrict[f][x] in S.sets[d])
                for x in X.sets[c]} for c in X.cat.objects}


def random_presheaf(cat: FiniteCategory, rng: np.random.Generator, max_stalk: int = 3,
                    tries: int = 2000) -> Presheaf:
    """Random presheaf by rejection sampling of restriction tables.

    Stalk sizes are drawn first; maps for identities are fixed and the rest
    drawn uniformly until the functor laws hold.  Falls back to constant
    stalks (all restrictions identities on one shared set) if no sample
    passes.
    """
    for _ in range(tries):
        sizes = {c: int(rng.integers(1, max_stalk + 1)) for c in cat.objects}
        sets = {c: [f"{c}{k}" for k in range(sizes[c])] for c in cat.objects}
        restrict = {}
        for f, (d, c) in cat.arrows.items():
            if f == cat.identities[c]:
                continue
            restrict[f] = {x: sets[d][int(rng.integers(sizes[d]))] for x in sets[c]}
        try:
            return Presheaf(cat, sets, restrict)
        except Exception:
            continue
    k = int(rng.integers(1, max_stalk + 1))
    elems = [f"e{i}" for i in range(k)]
    return Presheaf(cat, {c: elems for c in cat.objects},
                    {f: {x: x for x in elems} for f in cat.arrows})


def random_subpresheaf(X: Presheaf, rng: np.random.Generator) -> SubPresheaf:
    seeds = [(c, x) for c, x in X.elements() if rng.random() < 0.35]
    return generated(X, seeds)


def random_natural(X: Presheaf, Y: Presheaf, rng: np.random.Generator, tries: int = 500
                   ) -> dict | None:
    """Random natural transformation X → Y as {C: {x: y}}, or None."""
    cat = X.cat
    if any(X.sets[c] and not Y.sets[c] for c in cat.objects):
        return None
    for _ in range(tries):
        comp = {c: {x: Y.sets[c][int(rng.integers(len(Y.sets[c])))] for x in X.sets[c]}
                for c in cat.objects}
        if is_natural(X, Y, comp):
            return comp
    return None


def is_natural(X: Presheaf, Y: Presheaf, comp: Mapping) -> bool:
    cat = X.cat
    return all(Y.restrict[f][comp[c][x]] == comp[d][X.restrict[f][x]]
               for f, (d, c) in cat.arrows.items() for x in X.sets[c])
