"""Command-line entry point: ``linarb <command> ...``.

Exit status: 0 verified, 2 input error, 3 budget exhausted, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .graph import (
    GraphFormatError,
    GraphValidationError,
    decomposition_from_json,
    decomposition_to_json,
    load_base_lists,
    load_graph,
    uniform_lists,
    verify_decomposition,
)
from .instances import near_regular
from .montecarlo import SUITE_FUNCTIONS, SUITES, load_instance
from .nibble import EmpiricalTargets, NibbleConfig
from .oracle import SizeLimitError, brute_force_list_2colouring, conjecture_scan, exact_linear_arboricity, linear_arboricity_lower_bound
from .pipeline import EXIT_BUDGET, EXIT_INPUT, EXIT_OK, EXIT_VERIFY, decompose, default_colours, paper_params, transcript_csv
from .schedule import ScheduleError, ScheduleParams, build_schedule, check_size_lemma, check_untainted

log = logging.getLogger("linarb")


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def parse_delta(text: str) -> float:
    """``e20`` means e**20; anything else is read as a number."""
    try:
        if text.lower().startswith("e"):
            return math.exp(float(text[1:]))
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad delta {text!r}; use a number or e<exponent>") from None


def _probability(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("p must lie strictly between 0 and 1")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


# ---------------------------------------------------------------- commands


def cmd_decompose(args) -> int:
    g = load_graph(_read(args.graph))
    if args.lists:
        base = load_base_lists(_read(args.lists), g)
        uniform = False
    else:
        k = args.colours or default_colours(g.max_degree)
        base = uniform_lists(g, k)
        uniform = True
    targets = EmpiricalTargets()
    if args.targets:
        try:
            targets = EmpiricalTargets.from_json(json.loads(_read(args.targets)))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise InputError(f"bad targets file: {exc}") from None
    config = NibbleConfig(
        mode=args.mode, p=args.p, ell=args.ell, max_restarts=args.max_restarts,
        targets=targets, workers=args.workers,
    )
    result = decompose(g, base, config, args.seed, uniform=uniform, finish_budget=args.finish_budget)
    verified = result.report is not None and result.report.passed
    payload = decomposition_to_json(
        g, result.decomposition,
        paper_params=paper_params(g, config),
        seed=args.seed,
        verified=verified,
        complete=result.exit_code != EXIT_BUDGET,
        phases=result.phases,
        summary=result.summary,
    )
    _write(args.out, dump_json(payload))
    _write(args.transcript, transcript_csv(result.transcript))
    report = {
        "exit_code": result.exit_code,
        "verification": result.report.to_json() if result.report is not None else None,
        "failure": result.failure,
        "paper_params": paper_params(g, config),
    }
    _write(args.report, dump_json(report))
    state = {EXIT_OK: "verified", EXIT_BUDGET: "budget exhausted", EXIT_VERIFY: "verification FAILED"}[result.exit_code]
    print(f"{state}: {result.summary.get('num_classes', 0)} classes, {g.num_edges} edges, phases {'+'.join(result.phases) or '-'}")
    return result.exit_code


def cmd_verify(args) -> int:
    g = load_graph(_read(args.graph))
    try:
        payload = json.loads(_read(args.decomposition))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"decomposition is not valid JSON: {exc.msg}", exc.lineno) from None
    d = decomposition_from_json(g, payload)
    lists = load_base_lists(_read(args.lists), g) if args.lists else None
    report = verify_decomposition(g, d, lists)
    text = dump_json(report.to_json())
    _write(args.report, text)
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_schedule(args) -> int:
    try:
        params = ScheduleParams(args.delta, args.p, args.ell)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    s = build_schedule(params)
    size = check_size_lemma(s)
    untainted = check_untainted(s)
    _write(args.out, s.to_csv())
    sidecar = {
        "paper_params": {"p": params.p, "ell": params.ell, "delta": params.delta, "mode": "strict"},
        "i0": s.i0,
        "size_checks": size.to_json(),
        "untainted_checks": untainted.to_json(),
    }
    _write(args.json or (str(Path(args.out).with_suffix(".json")) if args.out else None), dump_json(sidecar))
    failed = size.failures() + untainted.failures()
    print(f"i0 = {s.i0}; failed checks: {', '.join(failed) if failed else 'none'}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    inst = load_instance(args.instance)
    suites = SUITES if args.suite == "all" else (args.suite,)
    reports = []
    for suite in suites:
        reports += [
            {"suite": suite, **r.to_json()}
            for r in SUITE_FUNCTIONS[suite](inst, args.trials, args.seed, workers=args.workers, k=args.k)
        ]
    passed = all(r["pass"] for r in reports)
    out = {
        "instance": inst.name,
        "seed": args.seed,
        "trials": args.trials,
        "passed": passed,
        "reports": reports,
        "paper_params": {"p": inst.p, "ell": inst.ell, "delta": inst.delta, "mode": "frozen"},
    }
    _write(args.out, dump_json(out))
    for r in reports:
        flag = "pass" if r["pass"] else "FAIL"
        print(f"{flag} {r['suite']}/{r['quantity']}: {r['estimate']:.6g} vs {r['kind']} {r['target']:.6g} (sigma {r['sigma']:.3g})")
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_oracle(args) -> int:
    if args.scan is not None:
        rep = conjecture_scan(args.scan)
        out = rep.to_json()
        _write(args.out, dump_json(out))
        print(f"{rep.graphs} connected graphs, {len(rep.counterexamples)} counterexamples, {len(rep.boundary_cases)} boundary cases")
        return EXIT_OK if rep.passed else EXIT_VERIFY
    if not args.graph:
        raise InputError("oracle needs --graph or --scan")
    g = load_graph(_read(args.graph))
    try:
        la = exact_linear_arboricity(g)
    except SizeLimitError as exc:
        raise InputError(str(exc)) from None
    out = {"linear_arboricity": la, "lower_bound": linear_arboricity_lower_bound(g), "max_degree": g.max_degree}
    if args.lists:
        base = load_base_lists(_read(args.lists), g)
        try:
            found = brute_force_list_2colouring(g, base)
        except SizeLimitError as exc:
            raise InputError(str(exc)) from None
        out["list_colouring"] = decomposition_to_json(g, found) if found is not None else None
    _write(args.out, dump_json(out))
    print(f"la = {la}")
    return EXIT_OK


def cmd_generate(args) -> int:
    g = near_regular(args.n, args.degree, np.random.default_rng(args.seed))
    _write(args.out, g.to_text())
    if args.lists_out:
        rng = np.random.default_rng([args.seed, 1])
        k = args.palette or 2 * g.max_degree
        size = args.list_size or default_colours(g.max_degree)
        lists = {
            f"{u}-{v}": sorted(int(c) for c in rng.choice(k, size=min(size, k), replace=False))
            for u, v in g.edges
        }
        _write(args.lists_out, dump_json(lists))
    print(f"{g.vertex_count} vertices, {g.num_edges} edges, max degree {g.max_degree}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linarb", description="Linear-forest decompositions via list edge colouring.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="run reserve, nibble and finisher, then verify")
    p.add_argument("--graph", required=True)
    p.add_argument("--lists", help="JSON {\"u-v\": [colours]}; default: one shared palette")
    p.add_argument("--colours", type=_positive, help="palette size when --lists is absent")
    p.add_argument("--mode", choices=("strict", "empirical"), default="empirical")
    p.add_argument("--p", type=_probability, default=0.25)
    p.add_argument("--ell", type=_positive)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-restarts", type=_positive, default=1000)
    p.add_argument("--targets", help="JSON with empirical-mode settings")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--finish-budget", type=_positive, default=10_000)
    p.add_argument("--out", required=True)
    p.add_argument("--transcript")
    p.add_argument("--report")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("verify", help="check a decomposition")
    p.add_argument("--graph", required=True)
    p.add_argument("--decomposition", required=True)
    p.add_argument("--lists")
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("schedule", help="tabulate the parameter recurrences and their checks")
    p.add_argument("--delta", type=parse_delta, required=True, help="number or e<exponent>, e.g. e20")
    p.add_argument("--p", type=_probability, default=0.25)
    p.add_argument("--ell", type=_positive)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--json", help="sidecar path (default: CSV path with .json)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("montecarlo", help="estimate one-iteration probabilities on a frozen state")
    p.add_argument("--suite", choices=(*SUITES, "all"), required=True)
    p.add_argument("--instance", default="builtin:generic", help="JSON path or builtin:<name>")
    p.add_argument("--trials", type=_positive, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--k", type=float, default=4.0, help="pass band in standard errors")
    p.add_argument("--out")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("oracle", help="exact linear arboricity of a tiny graph, or an exhaustive scan")
    p.add_argument("--graph")
    p.add_argument("--lists")
    p.add_argument("--scan", type=int, metavar="MAX_N")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="write a seeded random near-regular graph")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--degree", type=_positive, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--lists-out", help="also write random lists")
    p.add_argument("--palette", type=_positive)
    p.add_argument("--list-size", type=_positive)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, GraphFormatError, GraphValidationError, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
