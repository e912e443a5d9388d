"""Typed formulas of the internal language and their concrete syntax.

Grammar (loosest first)::

    formula  := disj ('->' formula)?
    disj     := conj ('|' conj)*
    conj     := unary ('&' unary)*
    unary    := '~' unary | ('forall' | 'exists') v ':' type '.' formula | atom
    atom     := 'true' | 'false' | '(' formula ')' | P '(' term ')'
              | term '=' term | term 'in' P | term 'in' '{' v ':' type '|' formula '}'
    term     := base ('.1' | '.2')*
    base     := v | c | f '(' term ')' | '<' term ',' term '>'
    type     := tatom ('*' tatom)*        (left associative)

Unicode spellings ∧ ∨ → ⇒ ¬ ∀ ∃ ∈ ⊤ ⊥ × are accepted too.  Membership in a
comprehension is desugared at parse time: ``t in {z:X | φ}`` becomes φ[z := t].
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Hashable, Mapping

from .category import FiniteCategory
from .presheaf import Presheaf, SubPresheaf, product


class FormulaSyntaxError(ValueError):
    def __init__(self, msg: str, position: int):
        super().__init__(f"{msg} at position {position}")
        self.position = position


class FormulaTypeError(TypeError):
    def __init__(self, msg: str, subterm: str | None = None):
        super().__init__(msg if subterm is None else f"{msg} in `{subterm}`")
        self.subterm = subterm


# --- types -------------------------------------------------------------------


@dataclass(frozen=True)
class TBase:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TProd:
    left: "Type"
    right: "Type"

    def __str__(self):
        r = f"({self.right})" if isinstance(self.right, TProd) else str(self.right)
        return f"{self.left}*{r}"


Type = TBase | TProd


# --- terms and formulas ------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str
    ty: Type | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Const:
    name: str
    ty: Type | None = field(default=None, compare=False)


@dataclass(frozen=True)
class App:
    fn: str
    arg: "Term"
    ty: Type | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Pair:
    left: "Term"
    right: "Term"
    ty: Type | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Proj:
    arg: "Term"
    index: int
    ty: Type | None = field(default=None, compare=False)


Term = Var | Const | App | Pair | Proj


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bot:
    pass


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Pred:
    name: str
    arg: Term


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    ty: Type
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    ty: Type
    body: "Formula"


Formula = Top | Bot | Eq | Pred | And | Or | Implies | Not | Forall | Exists


def pretty(node) -> str:
    if isinstance(node, Var | Const):
        return node.name
    if isinstance(node, App):
        return f"{node.fn}({pretty(node.arg)})"
    if isinstance(node, Pair):
        return f"<{pretty(node.left)}, {pretty(node.right)}>"
    if isinstance(node, Proj):
        return f"{pretty(node.arg)}.{node.index}"
    if isinstance(node, Top):
        return "true"
    if isinstance(node, Bot):
        return "false"
    if isinstance(node, Eq):
        return f"{pretty(node.left)} = {pretty(node.right)}"
    if isinstance(node, Pred):
        return f"{node.name}({pretty(node.arg)})"
    if isinstance(node, Not):
        return f"~{_wrap(node.body)}"
    if isinstance(node, And | Or | Implies):
        op = {And: "&", Or: "|", Implies: "->"}[type(node)]
        return f"{_wrap(node.left)} {op} {_wrap(node.right)}"
    if isinstance(node, Forall | Exists):
        q = "forall" if isinstance(node, Forall) else "exists"
        return f"{q} {node.var}:{node.ty}. {pretty(node.body)}"
    raise TypeError(f"not a term or formula: {node!r}")


def _wrap(phi) -> str:
    s = pretty(phi)
    return s if isinstance(phi, Top | Bot | Eq | Pred | Not) else f"({s})"


def depth(phi) -> int:
    if isinstance(phi, Top | Bot | Eq | Pred):
        return 0
    if isinstance(phi, Not | Forall | Exists):
        return 1 + depth(phi.body)
    return 1 + max(depth(phi.left), depth(phi.right))


def free_vars(node) -> frozenset:
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Const | Top | Bot):
        return frozenset()
    if isinstance(node, App | Proj | Pred):
        return free_vars(node.arg)
    if isinstance(node, Not):
        return free_vars(node.body)
    if isinstance(node, Forall | Exists):
        return free_vars(node.body) - {node.var}
    return free_vars(node.left) | free_vars(node.right)


def _fresh(base: str, avoid: set) -> str:
    for k in itertools.count(1):
        cand = f"{base}_{k}"
        if cand not in avoid:
            return cand


def substitute(node, name: str, term: Term):
    """node[name := term], renaming bound variables that would capture."""
    if isinstance(node, Var):
        return term if node.name == name else node
    if isinstance(node, Const | Top | Bot):
        return node
    if isinstance(node, App):
        return App(node.fn, substitute(node.arg, name, term), node.ty)
    if isinstance(node, Proj):
        return Proj(substitute(node.arg, name, term), node.index, node.ty)
    if isinstance(node, Pair):
        return Pair(substitute(node.left, name, term), substitute(node.right, name, term), node.ty)
    if isinstance(node, Pred):
        return Pred(node.name, substitute(node.arg, name, term))
    if isinstance(node, Eq):
        return Eq(substitute(node.left, name, term), substitute(node.right, name, term))
    if isinstance(node, Not):
        return Not(substitute(node.body, name, term))
    if isinstance(node, And | Or | Implies):
        return type(node)(substitute(node.left, name, term), substitute(node.right, name, term))
    if isinstance(node, Forall | Exists):
        if node.var == name:
            return node
        body, var = node.body, node.var
        fv = free_vars(term)
        if var in fv:
            new = _fresh(var, fv | free_vars(body) | {name})
            body = substitute(body, var, Var(new, node.ty))
            var = new
        return type(node)(var, node.ty, substitute(body, name, term))
    raise TypeError(f"cannot substitute into {node!r}")


# --- signatures --------------------------------------------------------------


@dataclass
class FunctionSymbol:
    dom: Type
    cod: Type
    components: Mapping[Hashable, Mapping]   # stage -> {x: f_C(x)}


@dataclass
class Signature:
    """Named presheaf types, natural transformations, subpresheaf predicates
    and global-element constants over one finite category."""

    cat: FiniteCategory
    types: dict = field(default_factory=dict)        # name -> Presheaf
    functions: dict = field(default_factory=dict)    # name -> FunctionSymbol
    predicates: dict = field(default_factory=dict)   # name -> (Type, SubPresheaf)
    constants: dict = field(default_factory=dict)    # name -> (Type, {stage: element})
    _cache: dict = field(default_factory=dict, repr=False)

    def presheaf(self, ty: Type) -> Presheaf:
        if ty in self._cache:
            return self._cache[ty]
        if isinstance(ty, TBase):
            if ty.name not in self.types:
                raise FormulaTypeError(f"unknown type {ty.name}")
            out = self.types[ty.name]
        else:
            out = product(self.presheaf(ty.left), self.presheaf(ty.right))
        self._cache[ty] = out
        return out

    def add_type(self, name: str, X: Presheaf) -> "Signature":
        if X.cat is not self.cat:
            raise ValueError("presheaf lives on a different category")
        self.types[name] = X
        self._cache.clear()
        return self

    def add_predicate(self, name: str, ty: Type | str, S: SubPresheaf) -> "Signature":
        ty = TBase(ty) if isinstance(ty, str) else ty
        if S.ambient is not self.presheaf(ty):
            raise ValueError(f"predicate {name} is not a subpresheaf of {ty}")
        self.predicates[name] = (ty, S)
        return self

    def add_function(self, name: str, dom: Type | str, cod: Type | str, components: Mapping
                     ) -> "Signature":
        dom = TBase(dom) if isinstance(dom, str) else dom
        cod = TBase(cod) if isinstance(cod, str) else cod
        X, Y = self.presheaf(dom), self.presheaf(cod)
        for f, (d, c) in self.cat.arrows.items():
            for x in X.sets[c]:
                if components[c][x] not in Y._members[c]:
                    raise ValueError(f"{name} sends {x!r} outside {cod}")
                if Y.restrict[f][components[c][x]] != components[d][X.restrict[f][x]]:
                    raise ValueError(f"{name} is not natural at arrow {f!r}")
        self.functions[name] = FunctionSymbol(dom, cod, components)
        return self

    def add_constant(self, name: str, ty: Type | str, components: Mapping) -> "Signature":
        ty = TBase(ty) if isinstance(ty, str) else ty
        X = self.presheaf(ty)
        for f, (d, c) in self.cat.arrows.items():
            if X.restrict[f][components[c]] != components[d]:
                raise ValueError(f"constant {name} is not a global element")
        self.constants[name] = (ty, dict(components))
        return self


# --- parser ------------------------------------------------------------------

_UNICODE = {"∧": "&", "∨": "|", "→": "->", "⇒": "->", "¬": "~", "∀": "forall ", "∃": "exists ",
            "∈": " in ", "⊤": "true", "⊥": "false", "×": "*"}
_TOKEN = re.compile(r"\s*(?:(?P<proj>\.[12](?![0-9]))|(?P<arrow>->)|(?P<ident>[A-Za-z_][A-Za-z0-9_']*)"
                    r"|(?P<sym>[&|~=(){}<>,:.*]))")
_KEYWORDS = {"forall", "exists", "true", "false", "in"}


def _normalize(text: str) -> tuple[str, list[int]]:
    # expand unicode spellings while keeping a map back to source positions
    out, pos = [], []
    for i, ch in enumerate(text):
        rep = _UNICODE.get(ch, ch)
        out.append(rep)
        pos.extend([i] * len(rep))
    return "".join(out), pos + [len(text)]


def _tokenize(text: str):
    norm, posmap = _normalize(text)
    toks, i = [], 0
    while i < len(norm):
        if norm[i:].strip() == "":
            break
        m = _TOKEN.match(norm, i)
        if not m:
            j = i + len(norm[i:]) - len(norm[i:].lstrip())
            raise FormulaSyntaxError(f"unexpected character {norm[j]!r}", posmap[j])
        kind = m.lastgroup
        val = m.group(kind)
        start = m.start(kind)
        if kind == "ident" and val in _KEYWORDS:
            kind = val
        elif kind in ("sym", "arrow"):
            kind = val
        toks.append((kind, val, posmap[start]))
        i = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, sig: Signature, ctx: Mapping[str, Type]):
        self.toks = _tokenize(text)
        self.i = 0
        self.sig = sig
        self.scope = [dict(ctx)]

    # token helpers
    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self, kind: str | None = None):
        tok = self.peek()
        if kind is not None and tok[0] != kind:
            want = "identifier" if kind == "ident" else repr(kind)
            got = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise FormulaSyntaxError(f"expected {want}, found {got}", tok[2])
        self.i += 1
        return tok

    def at(self, *kinds) -> bool:
        return self.peek()[0] in kinds

    def lookup(self, name: str) -> Type | None:
        for frame in reversed(self.scope):
            if name in frame:
                return frame[name]
        return None

    # types
    def type_(self) -> Type:
        ty = self.type_atom()
        while self.at("*"):
            self.take("*")
            ty = TProd(ty, self.type_atom())
        return ty

    def type_atom(self) -> Type:
        if self.at("("):
            self.take("(")
            ty = self.type_()
            self.take(")")
            return ty
        name, pos = self.take("ident")[1:]
        ty = TBase(name)
        try:
            self.sig.presheaf(ty)
        except FormulaTypeError:
            raise FormulaTypeError(f"unknown type {name}", name) from None
        return ty

    # formulas
    def formula(self):
        left = self.disj()
        if self.at("->"):
            self.take("->")
            return Implies(left, self.formula())
        return left

    def disj(self):
        left = self.conj()
        while self.at("|"):
            self.take("|")
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.unary()
        while self.at("&"):
            self.take("&")
            left = And(left, self.unary())
        return left

    def unary(self):
        if self.at("~"):
            self.take("~")
            return Not(self.unary())
        if self.at("forall", "exists"):
            q = self.take()[0]
            var = self.take("ident")[1]
            self.take(":")
            ty = self.type_()
            self.take(".")
            self.scope.append({var: ty})
            body = self.formula()
            self.scope.pop()
            return (Forall if q == "forall" else Exists)(var, ty, body)
        return self.atom()

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "true":
            self.take()
            return Top()
        if kind == "false":
            self.take()
            return Bot()
        if kind == "(":
            self.take("(")
            phi = self.formula()
            self.take(")")
            return phi
        if kind == "ident" and val in self.sig.predicates and self.peek(1)[0] == "(" \
                and self.lookup(val) is None:
            self.take()
            self.take("(")
            arg = self.term()
            self.take(")")
            return self._pred(val, arg)
        if kind == "eof":
            raise FormulaSyntaxError("unexpected end of input", pos)
        left = self.term()
        if self.at("="):
            self.take("=")
            right = self.term()
            if left.ty != right.ty:
                raise FormulaTypeError(f"equality between types {left.ty} and {right.ty}",
                                       f"{pretty(left)} = {pretty(right)}")
            return Eq(left, right)
        if self.at("in"):
            self.take("in")
            if self.at("{"):
                self.take("{")
                var = self.take("ident")[1]
                self.take(":")
                ty = self.type_()
                self.take("|")
                self.scope.append({var: ty})
                body = self.formula()
                self.scope.pop()
                self.take("}")
                if left.ty != ty:
                    raise FormulaTypeError(f"membership of a {left.ty} in a comprehension over {ty}",
                                           pretty(left))
                return substitute(body, var, left)
            name, npos = self.take("ident")[1:]
            if name not in self.sig.predicates:
                raise FormulaTypeError(f"unknown predicate {name}", name)
            return self._pred(name, left)
        tok = self.peek()
        got = "end of input" if tok[0] == "eof" else repr(tok[1])
        raise FormulaSyntaxError(f"expected '=' or 'in' after term, found {got}", tok[2])

    def _pred(self, name, arg):
        ty, _ = self.sig.predicates[name]
        if arg.ty != ty:
            raise FormulaTypeError(f"predicate {name} expects {ty}, got {arg.ty}", pretty(arg))
        return Pred(name, arg)

    # terms
    def term(self):
        t = self.base()
        while self.at("proj"):
            idx = int(self.take()[1][1])
            if not isinstance(t.ty, TProd):
                raise FormulaTypeError(f"projection from non-product type {t.ty}", pretty(t))
            t = Proj(t, idx, t.ty.left if idx == 1 else t.ty.right)
        return t

    def base(self):
        kind, val, pos = self.peek()
        if kind == "<":
            self.take("<")
            a = self.term()
            self.take(",")
            b = self.term()
            self.take(">")
            return Pair(a, b, TProd(a.ty, b.ty))
        if kind != "ident":
            got = "end of input" if kind == "eof" else repr(val)
            raise FormulaSyntaxError(f"expected a term, found {got}", pos)
        self.take()
        ty = self.lookup(val)
        if ty is not None:
            return Var(val, ty)
        if val in self.sig.functions and self.at("("):
            fs = self.sig.functions[val]
            self.take("(")
            arg = self.term()
            self.take(")")
            if arg.ty != fs.dom:
                raise FormulaTypeError(f"{val} expects {fs.dom}, got {arg.ty}", pretty(arg))
            return App(val, arg, fs.cod)
        if val in self.sig.constants:
            return Const(val, self.sig.constants[val][0])
        raise FormulaTypeError(f"unbound name {val}", val)


def parse_formula(text: str, context: Mapping[str, Type | str] | list, sig: Signature):
    """Parse and type-check ``text`` in the given typed context."""
    if isinstance(context, Mapping):
        items = context.items()
    else:
        items = context
    ctx = {v: (TBase(t) if isinstance(t, str) else t) for v, t in items}
    for v, t in ctx.items():
        try:
            sig.presheaf(t)
        except FormulaTypeError:
            raise FormulaTypeError(f"context variable {v} has unknown type {t}", v) from None
    p = _Parser(text, sig, ctx)
    phi = p.formula()
    if not p.at("eof"):
        tok = p.peek()
        raise FormulaSyntaxError(f"unexpected {tok[1]!r}", tok[2])
    return phi


def parse_type(text: str, sig: Signature) -> Type:
    p = _Parser(text, sig, {})
    ty = p.type_()
    p.take("eof")
    return ty
