"""Command-line front end: ``ratobs <command> SYSTEM [options]``.

SYSTEM is a path to a ``.rsys`` file or the name of a bundled system
(michaelis, polsys, higher, ratsys, twocomp).

Exit codes: 0 success, 1 input error, 2 no inverse up to the maximal
order, 3 work budget exceeded, 4 simulation failure.
"""

import argparse
import json
import logging
import os
import sys as _sys

from . import __version__
from .algebra import to_q
from .builtin import BUILTIN, builtin_source, check_all
from .errors import NotObservableUpTo, ParseError, RatobsError, ResourceExceeded, \
    SimulationError
from .inverse import default_m_max, find_observability_index, jacobi_condition
from .lie import build_s_chain, chain_text
from .observer import GainSpec, default_perturbation
from .parser import parse
from .realization import output_based_realization
from .report import SynthesisReport, synthesize
from .simulate import SimConfig, performance_sim, write_csv

EXIT_INPUT, EXIT_UNOBSERVABLE, EXIT_RESOURCE, EXIT_SIMULATION = 1, 2, 3, 4

log = logging.getLogger("ratobs")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _rationals(text):
    try:
        return [to_q(v.strip()) for v in text.split(",") if v.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _poles(text):
    return [complex(v.replace("i", "j")) for v in text.split(",") if v.strip()]


def _grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be lo:hi:step")
    return tuple(parts)


def _param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError("parameter binding must be name=value")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def load_system(ref, params=()):
    """Parse a file path or a bundled system name, then bind ``params``."""
    if os.path.exists(ref):
        with open(ref, encoding="utf-8") as fh:
            text = fh.read()
    elif ref in BUILTIN:
        text = builtin_source(ref)
    else:
        raise FileNotFoundError(f"{ref}: no such file or bundled system")
    sys = parse(text)
    if params:
        sys = sys.bind(dict(params))
    return sys


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


def _gain_spec(args):
    if args.gain:
        return GainSpec("explicit", K=args.gain)
    if args.poles:
        return GainSpec("poles", poles=args.poles)
    if args.grid:
        return GainSpec("grid", ranges=None, perturbations=[args.perturb] if args.perturb else [])
    return None


def _cfg(args):
    return SimConfig(step=args.step, horizon=args.horizon)


def cmd_check(args):
    sys = load_system(args.system, args.param)
    free = ", ".join(sys.free_params) or "none"
    print(f"system {sys.name}: n = {sys.n}, m_y = {sys.m_y}, kind = {sys.kind}")
    print(f"free parameters: {free}")
    for a in sys.assumptions:
        print(f"assumption: {a} != 0")
    return 0


def cmd_lie(args):
    sys = load_system(args.system, args.param)
    m = args.max_order or sys.n
    print(chain_text(build_s_chain(sys, m)))
    return 0


def cmd_observability(args):
    sys = load_system(args.system, args.param)
    m_max = args.max_order or default_m_max(sys)
    m, chain, inv = find_observability_index(sys, m_max, seed=args.seed)
    print(f"m_o = {m}, n_o = {chain.n_o} ({inv.method} inverse, {inv.kind})")
    print(inv.text(sys))
    for c in inv.side_conditions:
        print(f"side condition: {c} != 0")
    if inv.param_values:
        vals = ", ".join(f"{k} = {v}" for k, v in inv.param_values.items())
        print(f"computed at parameter values: {vals}")
    states = set(sys.state_vars)
    if all(not (s.den.variables() & states) for s in chain.entries):
        print(f"Jacobi condition: {jacobi_condition(list(chain.entries), sys).text()}")
    else:
        print("Jacobi condition: not applicable (rational map)")
    return 0


def cmd_realize(args):
    sys = load_system(args.system, args.param)
    m_max = args.max_order or default_m_max(sys)
    m, chain, inv = find_observability_index(sys, m_max, seed=args.seed)
    real = output_based_realization(sys, chain, inv)
    print(f"output-based realization ({real.kind}), n_o = {real.n_o}")
    print(real.text())
    for k, g in enumerate(real.b_o, 1):
        print(f"b_o[{k}] = {g}")
    print("xh0 = (" + ", ".join(str(g) for g in real.xh0) + ")")
    return 0


def _synth(args):
    sys = load_system(args.system, args.param)
    spec = _gain_spec(args)
    if spec is not None and spec.mode == "grid":
        # the grid covers every entry of K; its size is known once n_o is
        m_max = args.max_order or default_m_max(sys)
        m, chain, _ = find_observability_index(sys, m_max, seed=args.seed)
        spec.ranges = [args.grid] * (chain.n_o * sys.m_y)
    return sys, synthesize(sys, spec, _cfg(args), seed=args.seed, m_max=args.max_order,
                           perturbation=args.perturb, wall=args.timings)


def cmd_synth(args):
    _, pl = _synth(args)
    if args.format == "text":
        _emit(pl.observer.text() + "\n", args.out)
    else:
        _emit(pl.report.to_json(), args.out)
    sim = pl.report.simulation
    if sim.get("status") in ("pole_crossing", "diverged", "left_orthant"):
        log.error("simulation: %s", sim["status"])
        return EXIT_SIMULATION
    return 0


def cmd_simulate(args):
    if args.report:
        with open(args.report, encoding="utf-8") as fh:
            rep = SynthesisReport.from_json(fh.read())
        if rep.observer.get("K") is not None and not args.gain:
            args.gain = [to_q(str(k)) for k in rep.observer["K"]]
    sys, pl = _synth(args)
    if sys.free_params:
        raise RatobsError("unbound parameters " + ", ".join(sys.free_params)
                          + ": bind them with --param")
    if pl.K is None:
        raise RatobsError("no numeric gain: pass --gain, --poles or --grid")
    pert = args.perturb or default_perturbation(pl.observer.n_o)
    res = performance_sim(sys, pl.observer, _cfg(args), perturbation=pert)
    if args.csv:
        write_csv(res, sys, pl.observer, args.csv)
    else:
        write_csv(res, sys, pl.observer, _sys.stdout)
    summ = res.summary()
    print(json.dumps(summ), file=_sys.stderr)
    if res.status != "ok":
        return EXIT_SIMULATION
    return 0


def cmd_paper_examples(args):
    results = check_all(seed=args.seed)
    for r in results:
        print(r.line())
        for note in r.notes:
            print(f"      note: {note}")
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} pipelines pass")
    return 0 if passed == len(results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="ratobs", description="Observer synthesis for rational "
                                "and polynomial systems.")
    p.add_argument("--version", action="version", version=f"ratobs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gains=False, sim=False):
        sp.add_argument("system", help="a .rsys file or a bundled system name")
        sp.add_argument("--param", action="append", type=_param, default=[],
                        metavar="NAME=VALUE", help="bind a parameter (repeatable)")
        sp.add_argument("--max-order", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        if gains:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--gain", type=_rationals, metavar="k1,k2,...")
            g.add_argument("--poles", type=_poles, metavar="p1,p2,...")
            g.add_argument("--grid", type=_grid, nargs="?", const=("-4", "4", "1"),
                           metavar="lo:hi:step")
            sp.add_argument("--perturb", type=_floats, default=None, metavar="d1,d2,...",
                            help="offset of the observer start from s(x0)")
            sp.add_argument("--step", type=float, default=1e-3)
            sp.add_argument("--horizon", type=float, default=50.0)
            sp.add_argument("--timings", action="store_true",
                            help="add wall-clock timings to the report")
        if sim:
            sp.add_argument("--csv", default=None)
            sp.add_argument("--report", default=None, help="take K from a synth report")

    common(sub.add_parser("check", help="parse and summarize a system"))
    common(sub.add_parser("lie", help="print the chain of output derivatives"))
    common(sub.add_parser("observability", help="observability index and inverse"))
    common(sub.add_parser("realize", help="output-based realization"))
    sp = sub.add_parser("synth", help="full synthesis report")
    common(sp, gains=True)
    sp.add_argument("--format", choices=("json", "text"), default="json")
    common(sub.add_parser("simulate", help="simulate plant and observer to CSV"),
           gains=True, sim=True)
    ex = sub.add_parser("paper-examples", help="run the bundled reference pipelines")
    ex.add_argument("--seed", type=int, default=0)
    return p


COMMANDS = {
    "check": cmd_check, "lie": cmd_lie, "observability": cmd_observability,
    "realize": cmd_realize, "synth": cmd_synth, "simulate": cmd_simulate,
    "paper-examples": cmd_paper_examples,
}


def _setup_logging():
    level = os.environ.get("RATOBS_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=_sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except NotObservableUpTo as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_UNOBSERVABLE
    except ResourceExceeded as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_RESOURCE
    except SimulationError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_SIMULATION
    except RatobsError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    _sys.exit(main())
