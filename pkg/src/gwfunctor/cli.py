"""Command-line harness: ``gw <group> <command> [options]``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
Every run with ``--out`` writes its primary outputs and a ``manifest.json``
into that directory.  ``GW_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .serial import canonical_json, csv_text, format_float, load_config, sha256_bytes

log = logging.getLogger("gwfunctor")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config_path: str | None
    seed: int | None
    output_dir: str | None
    tool_version: str
    config_hash: str | None
    inputs: dict

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Outcome:
    result: dict                       # printed as JSON and written to result.json
    lines: list                        # human-readable summary on stdout
    table: tuple | None = None         # (header, rows) for --format csv
    files: dict = None                 # extra primary outputs {name: text}


# --- input helpers ---------------------------------------------------------------


def _read(path: str | None, what: str = "config") -> Any:
    if path is None:
        raise UsageError(f"--{what} is required")
    try:
        return load_config(path)
    except FileNotFoundError:
        raise UsageError(f"cannot read {what} {path}: no such file") from None
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None
    except ValueError as exc:      # TOML and JSON decode errors are ValueErrors
        raise UsageError(f"cannot parse {what} {path}: {exc}") from None


def _section(cfg: dict, name: str) -> dict:
    return dict(cfg.get(name, cfg))


def _fmt(x) -> str:
    return canonical_json(x)


# --- coalgebra ---------------------------------------------------------------------


def cmd_coalg_bisim(args) -> Outcome:
    from .coalgebra import Lts, bisimilarity_partition
    lts = Lts.from_json(_section(_read(args.config), "lts"))
    blocks = [list(b) for b in bisimilarity_partition(lts)]
    return Outcome({"blocks": blocks, "classes": len(blocks)},
                   [f"classes: {len(blocks)}"] + [f"  {_fmt(b)}" for b in blocks],
                   (["state", "block"], [[s, i] for i, b in enumerate(blocks) for s in b]))


def cmd_coalg_check_hom(args) -> Outcome:
    from .coalgebra import Lts, check_homomorphism
    cfg = _read(args.config)
    src, dst = Lts.from_json(cfg["source"]), Lts.from_json(cfg["target"])
    lookup = {str(s): s for s in src.states}
    tgt = {str(s): s for s in dst.states}
    try:
        f = {lookup[str(k)]: tgt[str(v)] for k, v in cfg["map"].items()}
    except KeyError as exc:
        raise UsageError(f"map mentions unknown state {exc}") from None
    res = check_homomorphism(src, dst, f)
    out = {"homomorphism": res.ok}
    lines = [f"homomorphism: {str(res.ok).lower()}"]
    if not res.ok:
        out["witness"] = res.witness
        lines.append(f"witness: {res.witness!r}")
    return Outcome(out, lines)


# --- asynchronous fixed points -------------------------------------------------------


def cmd_fix_run(args) -> Outcome:
    from .asyncfix import CONVERGED, DecomposedMap, make_schedule, run_async
    cfg = _section(_read(args.config), "fix")
    A = np.asarray(cfg["A"], float)
    b = np.asarray(cfg["b"], float)
    if A.ndim != 2 or A.shape != (len(b), len(b)):
        raise UsageError("A must be square and match b")
    sc = dict(cfg.get("schedule", {}))
    sched = make_schedule(sc.get("kind", "random"), len(b), int(sc.get("horizon", 1000)),
                          int(sc.get("max_gap", max(1, len(b)))), int(sc.get("max_staleness", 1)),
                          seed=args.seed if args.seed is not None else int(sc.get("seed", 0)))
    x0 = np.asarray(cfg.get("x0", np.zeros(len(b))), float)
    x, trace = run_async(DecomposedMap.linear(A, b), sched, x0, tol=args.tol if args.tol is not None else 1e-10)
    out = {"x": x, "status": trace.status, "residual": trace.final_residual, "steps": len(trace)}
    if trace.status != CONVERGED and cfg.get("require_convergence", False):
        raise NumericalFailure(f"no convergence within the horizon (residual {trace.final_residual:.3g})")
    return Outcome(out, [f"x: {_fmt(x)}", f"status: {trace.status}", f"residual: {trace.final_residual:.6g}"],
                   files={"trace.csv": trace.to_csv()},
                   table=(["i", "x"], [[i, v] for i, v in enumerate(x.tolist())]))


# --- Q-learning ----------------------------------------------------------------------


def cmd_qlearn_run(args) -> Outcome:
    from .steps import Harmonic
    from .url import FiniteMdp, LearnConfig, async_q_learning, value_iteration
    cfg = _read(args.config)
    mdp = FiniteMdp.from_json(cfg["mdp"])
    lc = dict(cfg.get("learn", {}))
    rule = Harmonic(float(lc.pop("c", 1.0)), float(lc.pop("k0", 1.0)))
    seed = args.seed if args.seed is not None else int(lc.pop("seed", 0))
    lc.pop("seed", None)
    if args.max_iter is not None:
        lc["steps"] = args.max_iter
    learn = LearnConfig(seed=seed, step_rule=rule, **lc)
    q, trace = async_q_learning(mdp, learn)
    qstar = value_iteration(mdp, tol=args.tol if args.tol is not None else 1e-10)
    dist = q.distance(qstar)
    out = {"q": q.table, "distance_to_value_iteration": dist, "updates": learn.steps,
           "unvisited": [list(p) for p in trace.unvisited], "greedy": {str(k): v for k, v in q.greedy().items()}}
    rows = [[s, a, float(q.table[i, j])] for i, s in enumerate(mdp.states) for j, a in enumerate(mdp.actions)]
    return Outcome(out, [f"updates: {learn.steps}", f"distance to value iteration: {dist:.6g}"],
                   (["state", "action", "q"], rows), {"q.csv": q.to_csv(), "trace.csv": trace.to_csv()})


# --- variational inequalities ----------------------------------------------------------


def _factors(specs) -> list:
    from .vi import Box, CappedOrthant, Simplex
    out = []
    for f in specs:
        kind = f.get("type", "box")
        if kind == "box":
            out.append(Box(f["lo"], f["hi"]))
        elif kind == "orthant":
            out.append(CappedOrthant(int(f["dim"]), float(f["cap"])))
        elif kind == "simplex":
            out.append(Simplex(int(f["dim"]), float(f.get("mass", 1.0))))
        else:
            raise UsageError(f"unknown factor type {kind!r}")
    return out


def _affine_vi(cfg: dict):
    """F(x) = M x + q over a product of factors."""
    from .vi import VIProblem
    M = np.atleast_2d(np.asarray(cfg["M"], float))
    q = np.atleast_1d(np.asarray(cfg["q"], float))
    factors = _factors(cfg["factors"])
    vi = VIProblem(lambda X: X @ M.T + q, factors)
    if M.shape != (vi.n, vi.n) or q.shape != (vi.n,):
        raise UsageError(f"M and q must have dimension {vi.n}")
    return vi, M


def cmd_vi_solve(args) -> Outcome:
    from .vi import CONVERGED, solve_projection
    cfg = _section(_read(args.config), "vi")
    vi, M = _affine_vi(cfg)
    alpha = float(cfg.get("alpha", 1.0 / max(1.0, np.linalg.norm(M, 2))))
    res = solve_projection(vi, alpha, tol=args.tol if args.tol is not None else 1e-10,
                           max_iter=args.max_iter or 100_000, record_every=int(cfg.get("record_every", 1)))
    if res.status != CONVERGED:
        raise NumericalFailure(f"projection method stopped after {res.iterations} iterations "
                               f"with gap {res.gap:.3g}")
    return Outcome({"x": res.x, "gap": res.gap, "iterations": res.iterations, "status": res.status},
                   [f"solution: {' '.join(map(format_float, res.x))}", f"gap: {res.gap:.3g}",
                    f"iterations: {res.iterations}"],
                   (["i", "x"], [[i, v] for i, v in enumerate(res.x.tolist())]), {"history.csv": res.to_csv()})


def cmd_vi_solve_stochastic(args) -> Outcome:
    from .steps import Constant, Harmonic
    from .vi import StepSchedule, StochasticVIProblem, solve_two_step_stochastic
    cfg = _section(_read(args.config), "vi")
    vi, _ = _affine_vi(cfg)
    sched = StepSchedule(Harmonic(float(cfg.get("alpha_c", 1.0)), float(cfg.get("alpha_k0", 1.0))),
                         Constant(float(cfg.get("beta", 1.0))))
    svi = StochasticVIProblem.additive_uniform(vi, float(cfg.get("noise", 0.1)))
    iters = args.max_iter or int(cfg.get("iters", 100_000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    res = solve_two_step_stochastic(svi, sched, iters, seed)
    return Outcome({"x": res.projected, "projected_gap": res.projected_gap, "raw_gap": res.raw_gap,
                    "iterations": iters},
                   [f"solution: {' '.join(map(format_float, res.projected))}",
                    f"projected gap: {float(res.projected_gap):.3g}"],
                   (["k", "alpha", "beta", "raw_gap", "projected_gap"], res.rows), {"trace.csv": res.to_csv()})


# --- economy -------------------------------------------------------------------------


def cmd_economy_equilibrium(args) -> Outcome:
    from .economy import NetworkEconomy, equilibrium
    from .vi import CONVERGED
    cfg = _read(args.config)
    econ = NetworkEconomy.from_config(cfg)
    rep = equilibrium(econ, tol=args.tol if args.tol is not None else 1e-10,
                      max_iter=args.max_iter or 1_000_000, check_eps=args.check_eps)
    if rep.status != CONVERGED:
        raise NumericalFailure(f"equilibrium solve stopped with gap {rep.gap:.3g}")
    st = rep.state
    rows = [[i, j, k, float(st.Q[i, j, k]), float(st.q[i, j, k]), float(st.pi[i, j, k])]
            for i in range(econ.m) for j in range(econ.n) for k in range(econ.o)]
    lines = [f"gap: {rep.gap:.3g}", f"producer utilities: {_fmt(rep.producer_utilities)}",
             f"transporter utilities: {_fmt(rep.transporter_utilities)}"]
    if rep.best_response_slack is not None:
        lines.append(f"best-response slack: {rep.best_response_slack:.3g}")
    return Outcome(rep.to_json(), lines, (["i", "j", "k", "Q", "q", "pi"], rows))


# --- presheaf logic ---------------------------------------------------------------------


def _signature(cat, doc, default_element):
    from .mumble import Presheaf, Signature, SubPresheaf
    sig = Signature(cat)
    if doc is None:
        # the constant presheaf on the given element
        X = Presheaf(cat, {c: [default_element] for c in cat.objects},
                     {f: {default_element: default_element} for f in cat.arrows})
        return sig.add_type("X", X)
    types = doc.get("types", {"X": doc} if "sets" in doc else {})
    for name, data in types.items():
        sig.add_type(name, Presheaf.from_json(cat, data))
    objs = {str(c): c for c in cat.objects}
    for name, data in doc.get("predicates", {}).items():
        X = sig.types[data["type"]]
        sets = {objs[k]: {x for x in X.sets[objs[k]] if str(x) in set(map(str, v))}
                for k, v in data["sets"].items()}
        sig.add_predicate(name, data["type"], SubPresheaf(X, {c: sets.get(c, set()) for c in cat.objects}))
    for name, data in doc.get("functions", {}).items():
        X, Y = sig.types[data["dom"]], sig.types[data["cod"]]
        comps = {}
        for c in cat.objects:
            src = {str(x): x for x in X.sets[c]}
            dst = {str(y): y for y in Y.sets[c]}
            comps[c] = {src[k]: dst[str(v)] for k, v in data["components"][str(c)].items()}
        sig.add_function(name, data["dom"], data["cod"], comps)
    return sig


def cmd_mumble_force(args) -> Outcome:
    from .mumble import category_from_json, forces, parse_formula
    if args.formula is None or args.stage is None or args.element is None:
        raise UsageError("--formula, --stage and --element are required")
    cat = category_from_json(_read(args.cat, "cat"))
    doc = _read(args.presheaf, "presheaf") if args.presheaf else None
    sig = _signature(cat, doc, args.element)
    stages = {str(c): c for c in cat.objects}
    if args.stage not in stages:
        raise UsageError(f"unknown stage {args.stage!r}")
    stage = stages[args.stage]
    X = sig.types.get(args.type)
    if X is None:
        raise UsageError(f"unknown type {args.type!r}")
    elems = {str(x): x for x in X.sets[stage]}
    if args.element not in elems:
        raise UsageError(f"{args.element!r} is not an element of {args.type} at stage {args.stage}")
    ctx = {args.var: args.type}
    phi = parse_formula(args.formula, ctx, sig)
    res = forces(stage, elems[args.element], phi, sig, ctx)
    out = {"forced": res.holds, "certificate": None if res.certificate is None else
           [str(c) for c in res.certificate]}
    lines = [f"forced: {str(res.holds).lower()}"]
    if res.certificate is not None:
        lines.append(f"certificate: {_fmt(out['certificate'])}")
    return Outcome(out, lines)


# --- workspace ----------------------------------------------------------------------------


def _ws_config(args):
    from .workspace import WorkspaceConfig
    cfg = WorkspaceConfig.from_mapping(_read(args.config))
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def cmd_workspace_run(args) -> Outcome:
    from .workspace import run_simulation
    cfg = _ws_config(args)
    elog, state = run_simulation(cfg)
    text = elog.to_jsonl()
    summary = state.summary()
    summary["log_hash"] = sha256_bytes(text.encode("utf-8"))
    occ = state.occupancy_fractions()
    return Outcome(summary, [f"epochs: {state.epochs} (skipped {state.skipped})",
                             f"occupancy: {_fmt(occ)}", f"log hash: {summary['log_hash']}"],
                   (["agent", "occupancy", "utility"],
                    [[k, occ[k], a.utility] for k, a in state.agents.items()]),
                   {"events.jsonl": text})


def cmd_workspace_replay(args) -> Outcome:
    from .workspace import EventLog, replay
    cfg = _ws_config(args)
    if args.log is None:
        raise UsageError("--log is required")
    try:
        elog = EventLog.read(args.log)
    except OSError as exc:
        raise UsageError(f"cannot read log {args.log}: {exc.strerror}") from None
    state = replay(elog, cfg)
    summary = state.summary()
    summary["state_hash"] = sha256_bytes(canonical_json(state.to_json()).encode("utf-8"))
    return Outcome(summary, [f"replayed {len(elog.records)} events", f"epochs: {state.epochs}",
                             f"state hash: {summary['state_hash']}"])


# --- parser -----------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


COMMANDS: dict[tuple, Callable] = {
    ("coalg", "bisim"): cmd_coalg_bisim,
    ("coalg", "check-hom"): cmd_coalg_check_hom,
    ("fix", "run"): cmd_fix_run,
    ("qlearn", "run"): cmd_qlearn_run,
    ("vi", "solve"): cmd_vi_solve,
    ("vi", "solve-stochastic"): cmd_vi_solve_stochastic,
    ("economy", "equilibrium"): cmd_economy_equilibrium,
    ("mumble", "force"): cmd_mumble_force,
    ("workspace", "run"): cmd_workspace_run,
    ("workspace", "replay"): cmd_workspace_replay,
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for outputs and the run manifest")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--format", choices=("json", "csv"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gw", description="global-workspace engine")
    parser.add_argument("--version", action="version", version=f"gw {__version__}")
    groups = parser.add_subparsers(dest="group", metavar="group", parser_class=_Parser)
    subs = {}
    for group, cmd in COMMANDS:
        if group not in subs:
            g = groups.add_parser(group)
            subs[group] = g.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
        p = subs[group].add_parser(cmd)
        _common(p)
        if (group, cmd) == ("mumble", "force"):
            p.add_argument("--cat")
            p.add_argument("--presheaf")
            p.add_argument("--formula")
            p.add_argument("--stage")
            p.add_argument("--element")
            p.add_argument("--var", default="x")
            p.add_argument("--type", default="X")
        if (group, cmd) == ("economy", "equilibrium"):
            p.add_argument("--check-eps", type=float)
        if (group, cmd) == ("workspace", "replay"):
            p.add_argument("--log")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("GW_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)


def _manifest(args, sub: str) -> RunManifest:
    primary = args.cat if sub == "mumble force" else args.config
    inputs = {}
    for p in (getattr(args, "config", None), getattr(args, "cat", None),
              getattr(args, "presheaf", None), getattr(args, "log", None)):
        if p:
            inputs[p] = sha256_bytes(Path(p).read_bytes())
    return RunManifest(sub, primary, args.seed, args.out, __version__,
                       inputs.get(primary) if primary else None, inputs)


def _write_outputs(args, sub: str, outcome: Outcome) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(canonical_json(outcome.result) + "\n", encoding="utf-8")
    for name, text in (outcome.files or {}).items():
        (out / name).write_text(text, encoding="utf-8")
    if outcome.table is not None:
        (out / "result.csv").write_text(csv_text(*outcome.table), encoding="utf-8")
    (out / "manifest.json").write_text(canonical_json(_manifest(args, sub).to_json()) + "\n",
                                       encoding="utf-8")


def main(argv=None) -> int:
    _setup_logging()
    from .asyncfix import NonFiniteError, ScheduleError
    from .coalgebra import CoalgebraError
    from .economy import EconomyError
    from .mumble import CategoryError, FormulaSyntaxError, FormulaTypeError, PresheafError
    from .url import MdpError
    from .vi import DivergenceError
    from .workspace import WorkspaceError
    input_errors = (CoalgebraError, ScheduleError, EconomyError, CategoryError, PresheafError,
                    FormulaSyntaxError, FormulaTypeError, MdpError, WorkspaceError, KeyError, TypeError,
                    ValueError)
    try:
        args = build_parser().parse_args(argv)
        if args.group is None:
            raise UsageError("missing subcommand group")
        if getattr(args, "command", None) is None:
            raise UsageError(f"missing command for {args.group}")
        sub = f"{args.group} {args.command}"
        log.info("running %s", sub)
        outcome = COMMANDS[(args.group, args.command)](args)
    except UsageError as exc:
        print(f"gw: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, DivergenceError, NonFiniteError, ArithmeticError) as exc:
        print(f"gw: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except input_errors as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"gw: invalid input: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    if args.format == "csv":
        if outcome.table is None:
            print(f"gw: usage error: {sub} has no tabular output", file=sys.stderr)
            return EXIT_USAGE
        sys.stdout.write(csv_text(*outcome.table))
    elif args.format == "json":
        print(canonical_json(outcome.result))
    else:
        print("\n".join(outcome.lines))
    if args.out:
        try:
            _write_outputs(args, sub, outcome)
        except OSError as exc:
            print(f"gw: usage error: cannot write outputs to {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
