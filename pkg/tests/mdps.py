"""Hand-built MDPs shared by the Q-learning tests."""

from fractions import Fraction as Fr

from gwfunctor.coalgebra.functor import FiniteDist as D
from gwfunctor.url import FiniteMdp


def chain():
    # s -a-> g with reward 1, g absorbing with reward 0
    return FiniteMdp(("s", "g"), ("a",), {("s", "a"): D.point("g"), ("g", "a"): D.point("g")},
                     {("s", "a"): 1.0, ("g", "a"): 0.0}, 0.5)


def zero_reward():
    st, ac = ("x", "y"), ("l", "r")
    return FiniteMdp(st, ac, {(s, a): D.uniform(st) for s in st for a in ac},
                     {(s, a): 0.0 for s in st for a in ac}, 0.9)


def loop3():
    # deterministic cycle 0 -> 1 -> 2 -> 0, reward 1 on the edge leaving 0
    st = (0, 1, 2)
    return FiniteMdp(st, ("go",), {(s, "go"): D.point((s + 1) % 3) for s in st},
                     {(0, "go"): 1.0, (1, "go"): 0.0, (2, "go"): 0.0}, 0.5)


def gamble():
    # safe action pays 0.5 and stays; risky pays 2 with prob 1/2 then moves to a sink
    st, ac = ("home", "sink"), ("safe", "risky")
    return FiniteMdp(st, ac, {
        ("home", "safe"): D.point("home"),
        ("home", "risky"): D({"home": Fr(1, 2), "sink": Fr(1, 2)}),
        ("sink", "safe"): D.point("sink"),
        ("sink", "risky"): D.point("sink"),
    }, {("home", "safe"): 0.5, ("home", "risky"): 1.0, ("sink", "safe"): 0.0,
        ("sink", "risky"): 0.0}, 0.5)


def grid5():
    # five-cell corridor, moves succeed with prob 0.8, goal cell 4 pays 1
    st, ac = tuple(range(5)), ("left", "right")
    trans, rew = {}, {}
    for s in st:
        for a in ac:
            t = max(0, s - 1) if a == "left" else min(4, s + 1)
            other = min(4, s + 1) if a == "left" else max(0, s - 1)
            trans[(s, a)] = D({t: Fr(4, 5), other: Fr(1, 5)}) if t != other else D.point(t)
            rew[(s, a)] = 1.0 if s == 4 else 0.0
    return FiniteMdp(st, ac, trans, rew, 0.5)


def random_walk():
    # stochastic two-action walk on three states with mixed rewards
    st, ac = ("a", "b", "c"), ("stay", "move")
    trans = {
        ("a", "stay"): D({"a": Fr(2, 3), "b": Fr(1, 3)}),
        ("a", "move"): D({"b": Fr(1, 2), "c": Fr(1, 2)}),
        ("b", "stay"): D({"b": Fr(1, 2), "a": Fr(1, 4), "c": Fr(1, 4)}),
        ("b", "move"): D.point("c"),
        ("c", "stay"): D({"c": Fr(3, 4), "a": Fr(1, 4)}),
        ("c", "move"): D.uniform(st),
    }
    rew = {("a", "stay"): 0.2, ("a", "move"): -0.1, ("b", "stay"): 0.0, ("b", "move"): 0.5,
           ("c", "stay"): 0.3, ("c", "move"): -0.2}
    return FiniteMdp(st, ac, trans, rew, 0.6)


ACCEPTANCE_MDPS = {"chain": chain, "loop3": loop3, "gamble": gamble, "grid5": grid5,
                   "random_walk": random_walk}
