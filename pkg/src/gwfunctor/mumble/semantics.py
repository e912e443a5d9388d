"""Two independent semantics for formulas over a presheaf signature.

``interpret`` computes the subpresheaf {x | φ(x)} compositionally with the
Heyting operations.  ``forces`` evaluates stage-wise forcing C ⊩ φ(α) clause
by clause.  For presheaves (trivial topology) ∨ and ∃ are decided at C alone,
while ⇒, ¬ and ∀ range over all arrows into C.

Environments are tuples, one value per context variable in context order.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping

from .presheaf import Presheaf, SubPresheaf, product_of
from .syntax import (And, App, Bot, Const, Eq, Exists, Forall, Formula, FormulaTypeError,
                     Implies, Not, Or, Pair, Pred, Proj, Signature, TBase, Top, Var, free_vars)


class UnboundVariable(FormulaTypeError):
    pass


def _context(context) -> tuple[tuple, tuple]:
    items = list(context.items()) if isinstance(context, Mapping) else list(context)
    names = tuple(v for v, _ in items)
    types = tuple(TBase(t) if isinstance(t, str) else t for _, t in items)
    if len(set(names)) != len(names):
        raise ValueError("duplicate context variables")
    return names, types


def _ambient(sig: Signature, types: tuple) -> Presheaf:
    key = ("ctx",) + types
    if key not in sig._cache:
        sig._cache[key] = product_of([sig.presheaf(t) for t in types], sig.cat)
    return sig._cache[key]


def eval_term(t, sig: Signature, stage, env: tuple, names: tuple):
    if isinstance(t, Var):
        try:
            return env[len(names) - 1 - names[::-1].index(t.name)]
        except ValueError:
            raise UnboundVariable(f"unbound variable {t.name}", t.name) from None
    if isinstance(t, Const):
        return sig.constants[t.name][1][stage]
    if isinstance(t, App):
        return sig.functions[t.fn].components[stage][eval_term(t.arg, sig, stage, env, names)]
    if isinstance(t, Pair):
        return (eval_term(t.left, sig, stage, env, names), eval_term(t.right, sig, stage, env, names))
    if isinstance(t, Proj):
        return eval_term(t.arg, sig, stage, env, names)[t.index - 1]
    raise TypeError(f"not a term: {t!r}")


def _check_closed(phi, names):
    extra = free_vars(phi) - set(names)
    if extra:
        v = sorted(extra)[0]
        raise UnboundVariable(f"unbound variable {v}", v)


# --- compositional interpretation -------------------------------------------


def _interp(phi, sig: Signature, names: tuple, types: tuple) -> dict:
    """{stage: frozenset of environments satisfying φ}."""
    cat = sig.cat
    amb = _ambient(sig, types)
    if isinstance(phi, Top):
        return {c: frozenset(amb.sets[c]) for c in cat.objects}
    if isinstance(phi, Bot):
        return {c: frozenset() for c in cat.objects}
    if isinstance(phi, Eq):
        return {c: frozenset(e for e in amb.sets[c]
                             if eval_term(phi.left, sig, c, e, names) == eval_term(phi.right, sig, c, e, names))
                for c in cat.objects}
    if isinstance(phi, Pred):
        S = sig.predicates[phi.name][1]
        return {c: frozenset(e for e in amb.sets[c] if eval_term(phi.arg, sig, c, e, names) in S.sets[c])
                for c in cat.objects}
    if isinstance(phi, And | Or):
        A = _interp(phi.left, sig, names, types)
        B = _interp(phi.right, sig, names, types)
        if isinstance(phi, And):
            return {c: A[c] & B[c] for c in cat.objects}
        return {c: A[c] | B[c] for c in cat.objects}
    if isinstance(phi, Implies | Not):
        A = _interp(phi.left if isinstance(phi, Implies) else phi.body, sig, names, types)
        B = (_interp(phi.right, sig, names, types) if isinstance(phi, Implies)
             else {c: frozenset() for c in cat.objects})
        return {c: frozenset(e for e in amb.sets[c]
                             if all(amb.restrict[f][e] not in A[d] or amb.restrict[f][e] in B[d]
                                    for f, d in cat.arrows_into(c)))
                for c in cat.objects}
    if isinstance(phi, Exists):
        A = _interp(phi.body, sig, names + (phi.var,), types + (phi.ty,))
        return {c: frozenset(e[:-1] for e in A[c]) for c in cat.objects}
    if isinstance(phi, Forall):
        A = _interp(phi.body, sig, names + (phi.var,), types + (phi.ty,))
        Y = sig.presheaf(phi.ty)
        return {c: frozenset(e for e in amb.sets[c]
                             if all(amb.restrict[f][e] + (b,) in A[d]
                                    for f, d in cat.arrows_into(c) for b in Y.sets[d]))
                for c in cat.objects}
    raise TypeError(f"not a formula: {phi!r}")


def interpret(phi: Formula, sig: Signature, context) -> SubPresheaf:
    """The subpresheaf of the context presheaf cut out by φ.

    With a single context variable of type X the result is a subpresheaf of
    X itself; otherwise of the product of the context types (tuples).
    """
    names, types = _context(context)
    _check_closed(phi, names)
    sets = _interp(phi, sig, names, types)
    if len(names) == 1:
        X = sig.presheaf(types[0])
        return SubPresheaf(X, {c: {e[0] for e in s} for c, s in sets.items()})
    return SubPresheaf(_ambient(sig, types), sets)


# --- Kripke-Joyal forcing ----------------------------------------------------


@dataclass(frozen=True)
class Forcing:
    holds: bool
    certificate: tuple | None = None
    # ("witness", b)          existential made true by b ∈ Y(C)
    # ("refute", f, env·f)    ⇒ / ¬ fails after restricting along f: D → C
    # ("refute", f, env·f, b) ∀ fails at stage D for element b ∈ Y(D)
    # ("left",) / ("right",)  which disjunct holds

    def __bool__(self):
        return self.holds


class _Forcer:
    def __init__(self, sig: Signature):
        self.sig = sig
        self.cat = sig.cat

    def restrict(self, env: tuple, types: tuple, f) -> tuple:
        return tuple(self.sig.presheaf(t).restrict[f][v] for t, v in zip(types, env))

    def force(self, phi, c, env, names, types) -> Forcing:
        sig, cat = self.sig, self.cat
        if isinstance(phi, Top):
            return Forcing(True)
        if isinstance(phi, Bot):
            return Forcing(False)
        if isinstance(phi, Eq):
            return Forcing(eval_term(phi.left, sig, c, env, names) == eval_term(phi.right, sig, c, env, names))
        if isinstance(phi, Pred):
            return Forcing(eval_term(phi.arg, sig, c, env, names) in sig.predicates[phi.name][1].sets[c])
        if isinstance(phi, And):
            return Forcing(bool(self.force(phi.left, c, env, names, types))
                           and bool(self.force(phi.right, c, env, names, types)))
        if isinstance(phi, Or):
            if self.force(phi.left, c, env, names, types):
                return Forcing(True, ("left",))
            if self.force(phi.right, c, env, names, types):
                return Forcing(True, ("right",))
            return Forcing(False)
        if isinstance(phi, Implies | Not):
            for f, d in cat.arrows_into(c):
                e = self.restrict(env, types, f)
                premise = phi.left if isinstance(phi, Implies) else phi.body
                if self.force(premise, d, e, names, types):
                    if isinstance(phi, Not) or not self.force(phi.right, d, e, names, types):
                        return Forcing(False, ("refute", f, e))
            return Forcing(True)
        if isinstance(phi, Exists):
            for b in sig.presheaf(phi.ty).sets[c]:
                if self.force(phi.body, c, env + (b,), names + (phi.var,), types + (phi.ty,)):
                    return Forcing(True, ("witness", b))
            return Forcing(False)
        if isinstance(phi, Forall):
            Y = sig.presheaf(phi.ty)
            for f, d in cat.arrows_into(c):
                e = self.restrict(env, types, f)
                for b in Y.sets[d]:
                    if not self.force(phi.body, d, e + (b,), names + (phi.var,), types + (phi.ty,)):
                        return Forcing(False, ("refute", f, e, b))
            return Forcing(True)
        raise TypeError(f"not a formula: {phi!r}")


def forces(stage, element, phi: Formula, sig: Signature, context) -> Forcing:
    """Decide stage ⊩ φ(element).

    ``element`` is a value of the single context variable's type at
    ``stage``, or a tuple (one value per variable) for larger contexts.
    """
    names, types = _context(context)
    _check_closed(phi, names)
    if stage not in sig.cat.objects:
        raise ValueError(f"unknown stage {stage!r}")
    env = (element,) if len(names) == 1 else tuple(element)
    if len(env) != len(names):
        raise ValueError("element does not match the context")
    for t, v in zip(types, env):
        if (stage, v) not in sig.presheaf(t):
            raise ValueError(f"{v!r} is not an element of {t} at stage {stage!r}")
    return _Forcer(sig).force(phi, stage, env, names, types)


def covering_families(cat, c) -> list[tuple]:
    """Families of arrows into C that are jointly epimorphic in presheaves,
    i.e. generate the maximal sieve: some member has a section."""
    into = [f for f, _ in cat.arrows_into(c)]
    out = []
    for r in range(1, len(into) + 1):
        for fam in combinations(into, r):
            sieve = {cat.compose(f, g) for f in fam for g, _ in cat.arrows_into(cat.src(f))}
            if cat.identities[c] in sieve:
                out.append(fam)
    return out
