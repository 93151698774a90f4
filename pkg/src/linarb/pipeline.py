"""Reserve, nibble, finish, merge and verify, as one call."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping

from .finisher import (
    check_finisher_precondition,
    complete_colouring,
    greedy_linear_completion,
    merge_and_verify,
    misra_gries,
    transpose_reserve,
)
from .graph import DecompositionReport, Graph, classes_from_colouring, product_lists, verify_decomposition
from .nibble import NibbleConfig, NibbleError, TRANSCRIPT_COLUMNS, default_ell, run_nibble, substream

_FINISH = 4

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4


@dataclass
class PipelineResult:
    exit_code: int
    decomposition: dict[int, set[int]]
    report: DecompositionReport | None
    transcript: list[dict]
    summary: dict
    failure: dict | None = None
    phases: list[str] = field(default_factory=list)


def paper_params(g: Graph, config: NibbleConfig) -> dict:
    delta = max(g.max_degree, 2)
    return {"p": config.p, "ell": config.ell or default_ell(delta), "delta": g.max_degree, "mode": config.mode}


def decompose(
    g: Graph,
    base_lists: Mapping[int, frozenset[int]],
    config: NibbleConfig,
    seed: int,
    *,
    uniform: bool = False,
    finish_budget: int = 10_000,
) -> PipelineResult:
    """Split ``g`` into linear forests, one per base colour, respecting ``base_lists``.

    ``uniform`` marks lists that were generated as one shared palette; only
    then may the last-resort matching colouring replace the result.
    """
    product = product_lists(base_lists)
    summary: dict = {"edges": g.num_edges, "max_degree": g.max_degree}
    try:
        nib = run_nibble(g, product, config, seed)
    except NibbleError as exc:
        failure = {"phase": "nibble", "message": str(exc), "iteration": exc.iteration, "worst": exc.worst}
        return PipelineResult(EXIT_BUDGET, {}, None, [], summary, failure)

    fixed = {e: c.base for e, c in nib.gamma.items()}
    residual = [e for e in range(g.num_edges) if e not in nib.gamma]
    summary.update({
        "nibble_iterations": len(nib.transcript),
        "nibble_restarts": sum(r["restarts"] for r in nib.transcript),
        "nibble_coloured": len(nib.gamma),
        "stop_reason": nib.stop_reason,
        "reserve_attempts": nib.reservation.attempts,
    })
    res_prime = transpose_reserve(nib.reservation.res_e)
    pre = check_finisher_precondition(g, residual, res_prime)
    summary["finisher_precondition"] = pre.to_json()
    phases = ["nibble"]

    done = complete_colouring(g, residual, res_prime, substream(seed, _FINISH), finish_budget, fixed)
    summary["reserve_coloured"] = len(done.colours)
    summary["reserve_budget_used"] = done.budget_used
    completion = dict(done.colours)
    failure = None
    if not done.complete:
        summary["reserve_report"] = {**done.failure_report(), "residual_edges": len(done.residual)}
    if done.colours:
        phases.append("reserve")
    if done.residual:
        fixed_all = dict(fixed)
        fixed_all.update(completion)
        greedy = greedy_linear_completion(g, done.residual, fixed_all, base_lists)
        completion.update(greedy.colours)
        summary["greedy_coloured"] = len(greedy.colours)
        phases.append("greedy")
        if greedy.residual:
            failure = greedy.failure_report()
            if not uniform:
                partial = merge_and_verify(nib.gamma, completion, g, None).decomposition
                summary["residual_edges"] = len(greedy.residual)
                return PipelineResult(EXIT_BUDGET, partial, None, nib.transcript, summary, failure, phases)
            matching = misra_gries(g)
            d = classes_from_colouring(matching)
            palette_ok = all(set(d) <= set(base_lists[e]) for e in range(g.num_edges))
            report = verify_decomposition(g, d, base_lists if palette_ok else None)
            phases.append("matchings")
            summary["num_classes"] = len(d)
            code = EXIT_OK if report.passed else EXIT_VERIFY
            return PipelineResult(code, d, report, nib.transcript, summary, failure, phases)

    merged = merge_and_verify(nib.gamma, completion, g, base_lists)
    summary["num_classes"] = sum(1 for es in merged.decomposition.values() if es)
    code = EXIT_OK if merged.report.passed else EXIT_VERIFY
    return PipelineResult(code, merged.decomposition, merged.report, nib.transcript, summary, failure, phases)


def default_colours(delta: int) -> int:
    """Desk-scale palette: half the degree plus a square-root margin."""
    return max(1, math.ceil(delta / 2) + math.ceil(3 * math.sqrt(delta)))


def transcript_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, TRANSCRIPT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
