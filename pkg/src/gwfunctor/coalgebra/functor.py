"""Action of signature functors on finite sets and on maps.

Element encodings for F(X):

* Identity: the state itself
* Const: a label
* Exp(B, A): tuple of (label, element-of-B(X)) pairs, in label order
* Power: frozenset
* Dist: :class:`FiniteDist` with exact rational weights
* Product: pair ``(left, right)``
* Coproduct: ``("L", v)`` or ``("R", v)``
* Compose(G, H): an element of G(H(X))
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Any, Callable, Hashable, Iterable, Mapping

from .signature import (Compose, Const, Coproduct, Dist, Exp, FunctorSignature,
                        Identity, Power, Product)

DEFAULT_CAP = 10**6


class EnumerationCapExceeded(RuntimeError):
    pass


class NotTotalError(KeyError):
    pass


class FiniteDist:
    """Finitely supported probability distribution with rational weights.

    Zero weights are dropped; the total mass must be exactly one.
    """

    __slots__ = ("_weights", "_hash")

    def __init__(self, support: Mapping[Hashable, Any] | Iterable[tuple[Hashable, Any]]):
        items = support.items() if isinstance(support, Mapping) else support
        weights: dict = {}
        for elem, w in items:
            if elem in weights:
                raise ValueError(f"duplicate support element {elem!r}")
            w = Fraction(w)
            if w < 0:
                raise ValueError(f"negative weight {w} for {elem!r}")
            weights[elem] = w
        total = sum(weights.values(), Fraction(0))
        if total != 1:
            raise ValueError(f"distribution mass is {total}, not 1")
        self._weights = {e: w for e, w in weights.items() if w != 0}
        self._hash = hash(frozenset(self._weights.items()))

    @classmethod
    def point(cls, elem: Hashable) -> "FiniteDist":
        return cls({elem: 1})

    @classmethod
    def uniform(cls, elems: Iterable[Hashable]) -> "FiniteDist":
        elems = list(elems)
        return cls({e: Fraction(1, len(elems)) for e in elems})

    @property
    def support(self) -> list[tuple[Hashable, Fraction]]:
        return list(self._weights.items())

    def mass(self) -> Fraction:
        return sum(self._weights.values(), Fraction(0))

    def __getitem__(self, elem) -> Fraction:
        return self._weights.get(elem, Fraction(0))

    def items(self):
        return self._weights.items()

    def __iter__(self):
        return iter(self._weights)

    def __len__(self):
        return len(self._weights)

    def __eq__(self, other):
        return isinstance(other, FiniteDist) and self._weights == other._weights

    def __hash__(self):
        return self._hash

    def __repr__(self):
        inner = ", ".join(f"{e!r}: {w}" for e, w in self._weights.items())
        return f"FiniteDist({{{inner}}})"

    def pushforward(self, f: Callable[[Hashable], Hashable]) -> "FiniteDist":
        out: dict = {}
        for e, w in self._weights.items():
            y = f(e)
            out[y] = out.get(y, Fraction(0)) + w
        return FiniteDist(out)


def _mass_one(candidate) -> tuple[bool, list]:
    items = candidate.items() if isinstance(candidate, (Mapping, FiniteDist)) else candidate
    items = list(items)
    try:
        weights = [Fraction(w) for _, w in items]
    except (TypeError, ValueError):
        return False, []
    keys = [e for e, _ in items]
    ok = (len(set(keys)) == len(keys) and all(w >= 0 for w in weights)
          and sum(weights, Fraction(0)) == 1)
    return ok, [e for e, w in zip(keys, weights) if w != 0]


class Carrier:
    """Description of F(X): enumerated when finite-and-small, intensional
    (membership predicate only) when the signature contains D."""

    def __init__(self, sig: FunctorSignature, base: tuple, elements: tuple | None):
        self.signature = sig
        self.base = base
        self.elements = elements

    @property
    def is_enumerated(self) -> bool:
        return self.elements is not None

    def __len__(self):
        if self.elements is None:
            raise TypeError("intensional carrier has no finite enumeration")
        return len(self.elements)

    def __iter__(self):
        if self.elements is None:
            raise TypeError("intensional carrier cannot be iterated")
        return iter(self.elements)

    def __contains__(self, x) -> bool:
        return contains(self.signature, self.base, x)

    def is_normalized(self, x) -> bool:
        """Mass-one check for a distribution-valued element of D(X)."""
        return _mass_one(x)[0]


def contains(sig: FunctorSignature, carrier, x) -> bool:
    """Membership x ∈ sig(carrier), without enumerating."""
    base = carrier if isinstance(carrier, (set, frozenset)) else set(carrier)
    try:
        return _member(sig, base.__contains__, x)
    except TypeError:
        return False


def _member(sig, member: Callable[[Any], bool], x) -> bool:
    if isinstance(sig, Identity):
        return member(x)
    if isinstance(sig, Const):
        return x in sig.labels
    if isinstance(sig, Power):
        return isinstance(x, frozenset) and all(_member(sig.inner, member, e) for e in x)
    if isinstance(sig, Dist):
        if not isinstance(x, (FiniteDist, Mapping)):
            return False
        ok, support = _mass_one(x)
        return ok and all(_member(sig.inner, member, e) for e in support)
    if isinstance(sig, Exp):
        labels = sig.exponent.labels
        return (isinstance(x, tuple) and len(x) == len(labels)
                and all(isinstance(p, tuple) and len(p) == 2 and p[0] == l
                        and _member(sig.base, member, p[1]) for p, l in zip(x, labels)))
    if isinstance(sig, Product):
        return (isinstance(x, tuple) and len(x) == 2 and _member(sig.left, member, x[0])
                and _member(sig.right, member, x[1]))
    if isinstance(sig, Coproduct):
        if not (isinstance(x, tuple) and len(x) == 2 and x[0] in ("L", "R")):
            return False
        return _member(sig.left if x[0] == "L" else sig.right, member, x[1])
    if isinstance(sig, Compose):
        return _member(sig.outer, lambda e: _member(sig.inner, member, e), x)
    raise TypeError(f"unknown signature node {sig!r}")


def _size(sig, n: int) -> float:
    """Cardinality of sig(X) for |X| = n; inf when D is involved."""
    if isinstance(sig, Identity):
        return n
    if isinstance(sig, Const):
        return len(sig.labels)
    if isinstance(sig, Power):
        inner = _size(sig.inner, n)
        return math.inf if inner > 1000 else 2.0 ** inner
    if isinstance(sig, Dist):
        inner = _size(sig.inner, n)
        return inner if inner <= 1 else math.inf
    if isinstance(sig, Exp):
        return _size(sig.base, n) ** len(sig.exponent.labels)
    if isinstance(sig, Product):
        return _size(sig.left, n) * _size(sig.right, n)
    if isinstance(sig, Coproduct):
        return _size(sig.left, n) + _size(sig.right, n)
    if isinstance(sig, Compose):
        return _size(sig.outer, _size(sig.inner, n))
    raise TypeError(f"unknown signature node {sig!r}")


def _has_dist(sig) -> bool:
    if isinstance(sig, Dist):
        return True
    if isinstance(sig, (Identity, Const)):
        return False
    if isinstance(sig, Power):
        return _has_dist(sig.inner)
    if isinstance(sig, Exp):
        return _has_dist(sig.base)
    if isinstance(sig, Compose):
        return _has_dist(sig.outer) or _has_dist(sig.inner)
    return _has_dist(sig.left) or _has_dist(sig.right)


def _enumerate(sig, elems: list) -> list:
    if isinstance(sig, Identity):
        return list(elems)
    if isinstance(sig, Const):
        return list(sig.labels)
    if isinstance(sig, Power):
        inner = _enumerate(sig.inner, elems)
        return [frozenset(c) for r in range(len(inner) + 1)
                for c in itertools.combinations(inner, r)]
    if isinstance(sig, Exp):
        base = _enumerate(sig.base, elems)
        labels = sig.exponent.labels
        return [tuple(zip(labels, combo)) for combo in itertools.product(base, repeat=len(labels))]
    if isinstance(sig, Product):
        return list(itertools.product(_enumerate(sig.left, elems), _enumerate(sig.right, elems)))
    if isinstance(sig, Coproduct):
        return ([("L", v) for v in _enumerate(sig.left, elems)]
                + [("R", v) for v in _enumerate(sig.right, elems)])
    if isinstance(sig, Compose):
        return _enumerate(sig.outer, _enumerate(sig.inner, elems))
    raise TypeError(f"cannot enumerate {sig!r}")


def apply_functor_set(sig: FunctorSignature, carrier: Iterable[Hashable],
                      cap: int = DEFAULT_CAP) -> Carrier:
    """F(X) for a finite nonempty carrier X.

    Polynomial and powerset signatures are enumerated (raising
    :class:`EnumerationCapExceeded` beyond ``cap`` elements); signatures
    containing D yield an intensional carrier that only answers membership.
    """
    base = tuple(carrier)
    if not base:
        raise ValueError("carrier must be nonempty")
    if len(set(base)) != len(base):
        raise ValueError("carrier has duplicate elements")
    if _has_dist(sig):
        return Carrier(sig, base, None)
    if _size(sig, len(base)) > cap:
        raise EnumerationCapExceeded(
            f"F(X) would have more than {cap} elements for |X| = {len(base)}")
    return Carrier(sig, base, tuple(_enumerate(sig, list(base))))


def apply_functor_map(sig: FunctorSignature, f: Mapping[Hashable, Hashable] | Callable,
                      domain: Iterable[Hashable] | None = None) -> Callable[[Any], Any]:
    """Return F(f), the action of the functor on the state map ``f``.

    ``f`` may be a mapping or a callable.  When ``domain`` is given the map is
    checked for totality up front; otherwise a missing state raises
    :class:`NotTotalError` on application.
    """
    if isinstance(f, Mapping):
        table = f
        if domain is not None:
            missing = [s for s in domain if s not in table]
            if missing:
                raise NotTotalError(f"map undefined on {missing}")

        def g(s):
            try:
                return table[s]
            except KeyError:
                raise NotTotalError(f"map undefined on {s!r}") from None
    else:
        g = f
    return lambda x: _fmap(sig, g, x)


def _fmap(sig, g, x):
    if isinstance(sig, Identity):
        return g(x)
    if isinstance(sig, Const):
        return x
    if isinstance(sig, Power):
        return frozenset(_fmap(sig.inner, g, e) for e in x)
    if isinstance(sig, Dist):
        if not isinstance(x, FiniteDist):
            x = FiniteDist(x)
        return x.pushforward(lambda e: _fmap(sig.inner, g, e))
    if isinstance(sig, Exp):
        return tuple((l, _fmap(sig.base, g, v)) for l, v in x)
    if isinstance(sig, Product):
        return (_fmap(sig.left, g, x[0]), _fmap(sig.right, g, x[1]))
    if isinstance(sig, Coproduct):
        side, v = x
        return (side, _fmap(sig.left if side == "L" else sig.right, g, v))
    if isinstance(sig, Compose):
        return _fmap(sig.outer, lambda e: _fmap(sig.inner, g, e), x)
    raise TypeError(f"unknown signature node {sig!r}")
