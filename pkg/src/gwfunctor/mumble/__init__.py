"""Finite presheaf toposes and their internal language: categories,
presheaves, sieves, subobject Heyting algebras, formulas and forcing."""

from .category import (SMALL_CATEGORIES, CategoryError, FiniteCategory, arrow_category,
                       category_from_json, chain3, cospan, discrete_category, idempotent_monoid,
                       parallel_pair, span, terminal_category, validate_category, z2_group)
from .presheaf import (Presheaf, PresheafError, SubPresheaf, all_subpresheaves, bottom,
                       characteristic, generated, implies, is_natural, is_sieve, join,
                       maximal_sieve, meet, negate, omega, product, product_of,
                       random_natural, random_presheaf, random_subpresheaf, representable,
                       sieves, sub_heyting, terminal_presheaf, top)
from .semantics import (Forcing, UnboundVariable, covering_families, eval_term, forces,
                        interpret)
from .syntax import (And, App, Bot, Const, Eq, Exists, Forall, FormulaSyntaxError,
                     FormulaTypeError, FunctionSymbol, Implies, Not, Or, Pair, Pred, Proj,
                     Signature, TBase, TProd, Top, Var, depth, free_vars, parse_formula,
                     parse_type, pretty, substitute)
