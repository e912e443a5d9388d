"""Functor signatures: AST, concrete syntax parser and pretty-printer.

Grammar (lowest to highest precedence)::

    sum     := product ('+' product)*
    product := compose (('x' | '×') compose)*
    compose := power (('o' | '∘') power)*
    power   := atom ('^' alphabet)*
    atom    := '_' | 'P' ['(' sum ')'] | 'D' ['(' sum ')'] | alphabet | '(' sum ')'
    alphabet:= NAME ['{' label (',' label)* '}'] | '1'

``P(F)`` and ``D(F)`` build Power(F) and Dist(F); bare ``P`` and ``D`` mean the
functor applied to the identity.  ``F o G`` is explicit composition.  All
binary operators associate to the left.  Alphabet names start with an
uppercase letter other than ``P``/``D``; a name not found in ``alphabets``
denotes the one-element set containing that name.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union


class SignatureError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


def _check_labels(labels: Sequence) -> None:
    if len(labels) == 0:
        raise SignatureError("empty label set")
    if len(set(labels)) != len(labels):
        raise SignatureError(f"duplicate labels in {list(labels)}")


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Const:
    name: str
    labels: tuple

    def __post_init__(self):
        _check_labels(self.labels)


@dataclass(frozen=True)
class Exp:
    base: "FunctorSignature"
    exponent: Const


@dataclass(frozen=True)
class Power:
    inner: "FunctorSignature" = Identity()


@dataclass(frozen=True)
class Dist:
    inner: "FunctorSignature" = Identity()


@dataclass(frozen=True)
class Compose:
    outer: "FunctorSignature"
    inner: "FunctorSignature"


@dataclass(frozen=True)
class Product:
    left: "FunctorSignature"
    right: "FunctorSignature"


@dataclass(frozen=True)
class Coproduct:
    left: "FunctorSignature"
    right: "FunctorSignature"


FunctorSignature = Union[Identity, Const, Exp, Power, Dist, Compose, Product, Coproduct]

ONE = Const("1", ("*",))


def depth(sig: FunctorSignature) -> int:
    if isinstance(sig, (Identity, Const)):
        return 1
    if isinstance(sig, (Power, Dist)):
        return 1 + depth(sig.inner)
    if isinstance(sig, Exp):
        return 1 + depth(sig.base)
    if isinstance(sig, Compose):
        return 1 + max(depth(sig.outer), depth(sig.inner))
    return 1 + max(depth(sig.left), depth(sig.right))


def substitute(sig: FunctorSignature, inner: FunctorSignature) -> FunctorSignature:
    """sig with every Identity leaf replaced by ``inner`` (i.e. sig ∘ inner)."""
    if isinstance(sig, Identity):
        return inner
    if isinstance(sig, Const):
        return sig
    if isinstance(sig, Power):
        return Power(substitute(sig.inner, inner))
    if isinstance(sig, Dist):
        return Dist(substitute(sig.inner, inner))
    if isinstance(sig, Exp):
        return Exp(substitute(sig.base, inner), sig.exponent)
    if isinstance(sig, Compose):
        return Compose(sig.outer, substitute(sig.inner, inner))
    return type(sig)(substitute(sig.left, inner), substitute(sig.right, inner))


def normalize(sig: FunctorSignature) -> FunctorSignature:
    """Eliminate Compose nodes; two signatures denote the same functor iff
    their normal forms are equal (up to the syntactic identities used here)."""
    if isinstance(sig, (Identity, Const)):
        return sig
    if isinstance(sig, Power):
        return Power(normalize(sig.inner))
    if isinstance(sig, Dist):
        return Dist(normalize(sig.inner))
    if isinstance(sig, Exp):
        return Exp(normalize(sig.base), sig.exponent)
    if isinstance(sig, Compose):
        return normalize(substitute(normalize(sig.outer), normalize(sig.inner)))
    return type(sig)(normalize(sig.left), normalize(sig.right))


def equivalent(a: FunctorSignature, b: FunctorSignature) -> bool:
    return normalize(a) == normalize(b)


# ---------------------------------------------------------------- printing

def _alphabet_str(c: Const) -> str:
    if c == ONE:
        return "1"
    return f"{c.name}{{{','.join(str(l) for l in c.labels)}}}"


def pretty(sig: FunctorSignature) -> str:
    return _pp(sig, 0)


# precedence: 0 sum, 1 product, 2 compose, 3 power, 4 atom
def _pp(sig: FunctorSignature, ctx: int) -> str:
    if isinstance(sig, Identity):
        return "_"
    if isinstance(sig, Const):
        return _alphabet_str(sig)
    if isinstance(sig, Power):
        return "P" if isinstance(sig.inner, Identity) else f"P({_pp(sig.inner, 0)})"
    if isinstance(sig, Dist):
        return "D" if isinstance(sig.inner, Identity) else f"D({_pp(sig.inner, 0)})"
    if isinstance(sig, Exp):
        text, prec = f"{_pp(sig.base, 3)}^{_alphabet_str(sig.exponent)}", 3
    elif isinstance(sig, Compose):
        text, prec = f"{_pp(sig.outer, 2)} o {_pp(sig.inner, 3)}", 2
    elif isinstance(sig, Product):
        text, prec = f"{_pp(sig.left, 1)} x {_pp(sig.right, 2)}", 1
    else:
        text, prec = f"{_pp(sig.left, 0)} + {_pp(sig.right, 1)}", 0
    return f"({text})" if prec < ctx else text


# ----------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<op>[_+^(){},×∘])|(?P<name>[A-Za-z][A-Za-z0-9_']*)|(?P<num>[0-9]+))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise SignatureError(f"unexpected character {text[pos:].lstrip()[0]!r}",
                                 pos + len(text[pos:]) - len(text[pos:].lstrip()))
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "op" and value == "×":
            value = "x"
        elif kind == "op" and value == "∘":
            value = "o"
        elif kind == "name" and value in ("x", "o"):
            kind = "op"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, alphabets: Mapping[str, Sequence] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.alphabets = dict(alphabets or {})

    def peek(self):
        return self.tokens[self.i]

    def take(self, value: str | None = None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            what = tok[1] or "end of input"
            raise SignatureError(f"expected {value!r}, found {what!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> FunctorSignature:
        sig = self.sum()
        kind, value, pos = self.peek()
        if kind != "end":
            raise SignatureError(f"unexpected {value!r}", pos)
        return sig

    def sum(self):
        left = self.product()
        while self.peek()[1] == "+" and self.peek()[0] == "op":
            self.take()
            left = Coproduct(left, self.product())
        return left

    def product(self):
        left = self.compose()
        while self.peek()[0] == "op" and self.peek()[1] == "x":
            self.take()
            left = Product(left, self.compose())
        return left

    def compose(self):
        left = self.power()
        while self.peek()[0] == "op" and self.peek()[1] == "o":
            self.take()
            left = Compose(left, self.power())
        return left

    def power(self):
        base = self.atom()
        while self.peek()[1] == "^":
            self.take()
            base = Exp(base, self.alphabet())
        return base

    def atom(self):
        kind, value, pos = self.peek()
        if value == "_":
            self.take()
            return Identity()
        if kind == "name" and value in ("P", "D"):
            self.take()
            inner: FunctorSignature = Identity()
            if self.peek()[1] == "(":
                self.take("(")
                inner = self.sum()
                self.take(")")
            return Power(inner) if value == "P" else Dist(inner)
        if value == "(":
            self.take()
            inner = self.sum()
            self.take(")")
            return inner
        if kind in ("name", "num"):
            return self.alphabet()
        raise SignatureError(f"unexpected {value or 'end of input'!r}", pos)

    def alphabet(self) -> Const:
        kind, value, pos = self.take()
        if kind == "num":
            if value != "1":
                raise SignatureError(f"only the constant 1 is allowed, got {value}", pos)
            return ONE
        if kind != "name" or not value[0].isupper() or value in ("P", "D"):
            raise SignatureError(f"expected alphabet name, found {value!r}", pos)
        if self.peek()[1] == "{":
            self.take("{")
            labels = []
            if self.peek()[1] == "}":
                raise SignatureError("empty label set", self.peek()[2])
            while True:
                lk, lv, lp = self.take()
                if lk not in ("name", "num") and lv not in ("x", "o"):
                    raise SignatureError(f"bad label {lv!r}", lp)
                labels.append(lv)
                if self.peek()[1] == ",":
                    self.take()
                    continue
                self.take("}")
                break
            if len(set(labels)) != len(labels):
                raise SignatureError(f"duplicate labels in {labels}", pos)
            return Const(value, tuple(labels))
        if value in self.alphabets:
            return Const(value, tuple(self.alphabets[value]))
        return Const(value, (value,))


def parse_functor_signature(text: str, alphabets: Mapping[str, Sequence] | None = None
                            ) -> FunctorSignature:
    """Parse the concrete functor syntax into an AST.

    >>> pretty(parse_functor_signature("P(A{a,b} x _)"))
    'P(A{a,b} x _)'
    """
    return _Parser(text, alphabets).parse()
