import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gwfunctor.coalgebra import (
    Coalgebra, CoalgebraError, Compose, Const, Coproduct, Dist, EnumerationCapExceeded, Exp,
    FiniteDist, Identity, Lts, NotTotalError, Power, Product, SignatureError, apply_functor_map,
    apply_functor_set, bisimilarity_partition, contains, check_homomorphism, equivalent, is_bisimulation,
    parse_functor_signature, pretty, quotient,
)

A = Const("A", ("a", "b"))


# ------------------------------------------------------------------ parsing

def test_parse_lts_row():
    assert parse_functor_signature("P(A x _)", {"A": ("a", "b")}) == Power(Product(A, Identity()))


def test_parse_markov_chain_row():
    assert parse_functor_signature("D") == Dist(Identity())


def test_parse_segala_row():
    sig = parse_functor_signature("P(D(A x _))", {"A": ("a", "b")})
    assert equivalent(sig, Power(Compose(Dist(), Product(A, Identity()))))
    assert sig == Power(Dist(Product(A, Identity())))


def test_parse_named_alphabet_without_table_is_singleton():
    assert parse_functor_signature("A") == Const("A", ("A",))


@pytest.mark.parametrize("text", [
    "P(A{a,b} x _)", "D", "(_ + 1)^A{a,b}", "(D + 1)^A{a}", "D(A{a} x _) + 1",
    "D + A{a} x _ + 1", "P(D(P(A{a,b} x _)))", "P(D(P(A{a} x _ x _)))", "D o (A{a,b} x _)",
    "_ x (_ x _)", "(_ + _) + _", "_ + (_ + _)", "P o D o _",
])
def test_pretty_round_trip(text):
    sig = parse_functor_signature(text)
    assert parse_functor_signature(pretty(sig)) == sig


def test_unicode_operators():
    assert parse_functor_signature("D ∘ (A{a} × _)") == parse_functor_signature("D o (A{a} x _)")


@pytest.mark.parametrize("text,pos", [("P(A x", 5), ("A{}", 2), ("_ + ", 4), ("P(_))", 4), ("_ $", 2)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(SignatureError) as exc:
        parse_functor_signature(text)
    assert exc.value.position == pos


def test_duplicate_labels_rejected():
    with pytest.raises(SignatureError):
        parse_functor_signature("A{a,a}")
    with pytest.raises(SignatureError):
        Const("A", ())


# --------------------------------------------------------- functor on sets

def test_powerset_of_two_set():
    car = apply_functor_set(Power(), ["a", "b"])
    assert set(car) == {frozenset(), frozenset({"a"}), frozenset({"b"}), frozenset({"a", "b"})}
    assert len(car) == 4


def test_constant_times_identity():
    car = apply_functor_set(Product(Const("K", ("x",)), Identity()), ["a", "b"])
    assert set(car) == {("x", "a"), ("x", "b")}


def test_dist_carrier_is_intensional():
    car = apply_functor_set(Dist(), ["a", "b"])
    assert not car.is_enumerated
    assert {"a": Fraction(1, 2), "b": Fraction(1, 2)} in car
    assert {"a": Fraction(1, 2), "b": Fraction(1, 4)} not in car
    assert not car.is_normalized({"a": Fraction(1, 2), "b": Fraction(1, 4)})
    assert {"c": 1} not in car
    with pytest.raises(TypeError):
        len(car)


def test_enumeration_cap():
    with pytest.raises(EnumerationCapExceeded):
        apply_functor_set(Power(Power()), list(range(5)))  # 2^32 elements
    assert len(apply_functor_set(Power(Power()), list(range(2)))) == 16


def test_exponent_enumeration():
    sig = Exp(Coproduct(Identity(), Const("1", ("*",))), A)
    assert len(apply_functor_set(sig, ["s", "t"])) == 9


# -------------------------------------------------------- functor on maps

def test_dist_pushforward_merges_mass():
    mu = FiniteDist({"a": Fraction(3, 10), "b": Fraction(7, 10)})
    out = apply_functor_map(Dist(), {"a": "c", "b": "c"})(mu)
    assert out == FiniteDist({"c": 1})
    assert out.mass() == 1


def test_power_direct_image():
    assert apply_functor_map(Power(), {"a": "c", "b": "c"})(frozenset({"a", "b"})) == frozenset({"c"})


def test_constant_factor_untouched():
    Ff = apply_functor_map(Product(A, Identity()), {"s": "t"})
    for label in A.labels:
        assert Ff((label, "s")) == (label, "t")


def test_map_not_total():
    with pytest.raises(NotTotalError):
        apply_functor_map(Power(), {"a": "c"}, domain=["a", "b"])
    with pytest.raises(NotTotalError):
        apply_functor_map(Power(), {"a": "c"})(frozenset({"b"}))


def test_finite_dist_invariants():
    with pytest.raises(ValueError):
        FiniteDist({"a": Fraction(1, 3)})
    with pytest.raises(ValueError):
        FiniteDist([("a", Fraction(1, 2)), ("a", Fraction(1, 2))])
    with pytest.raises(ValueError):
        FiniteDist({"a": 2, "b": -1})


# property: functoriality on random small signatures ------------------------

_leaf = st.sampled_from([Identity(), Const("A", ("a", "b")), Const("1", ("*",))])


def _extend(children):
    return st.one_of(
        children.map(Power),
        children.map(Dist),
        st.tuples(children, st.sampled_from([Const("B", ("u", "v"))])).map(lambda t: Exp(*t)),
        st.tuples(children, children).map(lambda t: Product(*t)),
        st.tuples(children, children).map(lambda t: Coproduct(*t)),
        st.tuples(children, children).map(lambda t: Compose(*t)),
    )


signatures = st.recursive(_leaf, _extend, max_leaves=4)


def _sample_elements(sig, carrier, rng, count):
    """Random elements of sig(carrier); exact enumeration is avoided for D."""
    def draw(sig, pick):
        if isinstance(sig, Identity):
            return pick()
        if isinstance(sig, Const):
            return rng.choice(sig.labels)
        if isinstance(sig, Power):
            return frozenset(draw(sig.inner, pick) for _ in range(rng.randint(0, 3)))
        if isinstance(sig, Dist):
            elems = {}
            for _ in range(rng.randint(1, 3)):
                elems[draw(sig.inner, pick)] = None
            ws = [rng.randint(1, 5) for _ in elems]
            return FiniteDist({e: Fraction(w, sum(ws)) for e, w in zip(elems, ws)})
        if isinstance(sig, Exp):
            return tuple((l, draw(sig.base, pick)) for l in sig.exponent.labels)
        if isinstance(sig, Product):
            return (draw(sig.left, pick), draw(sig.right, pick))
        if isinstance(sig, Coproduct):
            side = rng.choice("LR")
            return (side, draw(sig.left if side == "L" else sig.right, pick))
        if isinstance(sig, Compose):
            return draw(sig.outer, lambda: draw(sig.inner, pick))
        raise TypeError(sig)
    return [draw(sig, lambda: rng.choice(carrier)) for _ in range(count)]


@settings(max_examples=150, deadline=None)
@given(sig=signatures, seed=st.integers(0, 10**6))
def test_functoriality(sig, seed):
    rng = random.Random(seed)
    X = list(range(rng.randint(1, 5)))
    Y = list("pqrst"[: rng.randint(1, 5)])
    Z = ["z0", "z1"]
    f = {x: rng.choice(Y) for x in X}
    g = {y: rng.choice(Z) for y in Y}
    gf = {x: g[f[x]] for x in X}
    identity = apply_functor_map(sig, {x: x for x in X})
    Ff, Fg, Fgf = (apply_functor_map(sig, m) for m in (f, g, gf))
    try:
        car = apply_functor_set(sig, X, cap=200)
        elems = list(car) if car.is_enumerated else _sample_elements(sig, X, rng, 30)
    except EnumerationCapExceeded:
        elems = _sample_elements(sig, X, rng, 30)
    for e in elems:
        assert contains(sig, X, e)
        assert identity(e) == e
        assert Fgf(e) == Fg(Ff(e))
        assert contains(sig, Y, Ff(e))


def test_dist_pushforward_mass_is_exactly_one():
    rng = random.Random(3)
    for _ in range(200):
        n = rng.randint(1, 6)
        ws = [rng.randint(0, 9) for _ in range(n)]
        if sum(ws) == 0:
            continue
        mu = FiniteDist({i: Fraction(w, sum(ws)) for i, w in enumerate(ws)})
        f = {i: rng.randint(0, 2) for i in range(n)}
        assert apply_functor_map(Dist(), f)(mu).mass() == 1


# ------------------------------------------------------------ homomorphisms

def _lts(states, trans, labels=("a", "b")):
    return Lts(tuple(states), labels, frozenset(trans))


def test_identity_is_homomorphism():
    lts = _lts(["s1", "s2"], [("s1", "a", "s2")])
    assert check_homomorphism(lts, lts, {"s1": "s1", "s2": "s2"}).ok


def test_collapse_onto_dead_state_fails_with_witness():
    src = _lts(["s1", "s2"], [("s1", "a", "s2")])
    dst = _lts(["t"], [])
    res = check_homomorphism(src, dst, {"s1": "t", "s2": "t"})
    assert not res.ok and res.witness == "s1"
    assert res.via_source == frozenset({("a", "t")}) and res.via_target == frozenset()


def test_quotient_map_is_homomorphism():
    src = _lts(["s1", "s2", "s3"], [("s1", "a", "s3"), ("s2", "a", "s3")])
    q, proj = quotient(src)
    assert len(q.states) == 2
    # elementwise enumeration oracle
    for s in src.states:
        image = {(a, proj[t]) for (u, a, t) in src.transitions if u == s}
        assert image == {(a, t) for (u, a, t) in q.transitions if u == proj[s]}
    assert check_homomorphism(src, q, proj).ok


def test_signature_mismatch():
    lts = _lts(["s"], [])
    mc = Coalgebra(("s",), Dist(), {"s": FiniteDist.point("s")})
    with pytest.raises(CoalgebraError):
        check_homomorphism(lts, mc, {"s": "s"})


def test_markov_chain_homomorphism():
    half = Fraction(1, 2)
    src = Coalgebra(("a", "b", "c"), Dist(), {
        "a": FiniteDist({"b": half, "c": half}), "b": FiniteDist.point("b"), "c": FiniteDist.point("c")})
    dst = Coalgebra(("x", "y"), Dist(), {"x": FiniteDist.point("y"), "y": FiniteDist.point("y")})
    assert check_homomorphism(src, dst, {"a": "x", "b": "y", "c": "y"}).ok
    assert not check_homomorphism(src, dst, {"a": "x", "b": "x", "c": "y"}).ok


def test_coalgebra_validation():
    with pytest.raises(CoalgebraError):
        Coalgebra(("s",), Dist(), {"s": {"s": Fraction(1, 2)}})
    with pytest.raises(CoalgebraError):
        Coalgebra(("s",), Power(), {"s": frozenset({"t"})})
    with pytest.raises(CoalgebraError):
        Coalgebra(("s", "t"), Power(), {"s": frozenset()})
    with pytest.raises(CoalgebraError):
        _lts(["s"], [("s", "c", "s")])


def _random_lts(rng, max_states=4):
    n = rng.randint(1, max_states)
    states = [f"s{i}" for i in range(n)]
    trans = [(s, a, t) for s in states for a in "ab" for t in states if rng.random() < 0.3]
    return _lts(states, trans)


def test_homomorphism_composition():
    rng = random.Random(11)
    found = 0
    for _ in range(400):
        A_ = _random_lts(rng)
        qa, f = quotient(A_)
        # a second homomorphism: B -> its own quotient after relabelling
        qb, g = quotient(qa)
        if check_homomorphism(A_, qa, f).ok and check_homomorphism(qa, qb, g).ok:
            found += 1
            assert check_homomorphism(A_, qb, {s: g[f[s]] for s in A_.states}).ok
    assert found > 100


def test_homomorphism_composition_random_maps():
    rng = random.Random(5)
    hits = 0
    for _ in range(3000):
        a, b, c = (_random_lts(rng, 3) for _ in range(3))
        f = {s: rng.choice(b.states) for s in a.states}
        g = {s: rng.choice(c.states) for s in b.states}
        if check_homomorphism(a, b, f) and check_homomorphism(b, c, g):
            hits += 1
            assert check_homomorphism(a, c, {s: g[f[s]] for s in a.states})
    assert hits > 0


# ------------------------------------------------------------ bisimulation

def brute_force_largest_bisimulation(lts):
    """Union of all bisimulations, found by enumerating every relation."""
    pairs = [(s, t) for s in lts.states for t in lts.states]
    union = set()
    for bits in range(1 << len(pairs)):
        rel = {p for i, p in enumerate(pairs) if bits >> i & 1}
        if is_bisimulation(lts, rel):
            union |= rel
    return union


def partition_relation(blocks):
    return {(s, t) for b in blocks for s in b for t in b}


def test_absorbing_states_single_block():
    lts = _lts(["s1", "s2", "s3"], [])
    assert bisimilarity_partition(lts) == [("s1", "s2", "s3")]


def test_three_state_example():
    lts = _lts(["s1", "s2", "s3"], [("s1", "a", "s3"), ("s2", "a", "s3")])
    expected = brute_force_largest_bisimulation(lts)
    blocks = bisimilarity_partition(lts)
    assert blocks == [("s1", "s2"), ("s3",)]
    assert partition_relation(blocks) == expected


def test_two_label_loops_differ():
    lts = _lts(["s1", "s2"], [("s1", "a", "s1"), ("s2", "b", "s2")])
    assert bisimilarity_partition(lts) == [("s1",), ("s2",)]
    assert partition_relation([("s1",), ("s2",)]) == brute_force_largest_bisimulation(lts)


def test_partition_matches_full_relation_enumeration():
    rng = random.Random(2024)
    for _ in range(60):
        lts = _random_lts(rng, 3)
        blocks = bisimilarity_partition(lts)
        assert partition_relation(blocks) == brute_force_largest_bisimulation(lts)
        assert is_bisimulation(lts, partition_relation(blocks))


def test_lts_json_round_trip():
    data = {"states": ["p", "q"], "labels": ["a"], "transitions": [["p", "a", "q"]]}
    lts = Lts.from_json(data)
    assert Lts.from_json(lts.to_json()) == lts
    assert lts.to_coalgebra().structure["p"] == frozenset({("a", "q")})
