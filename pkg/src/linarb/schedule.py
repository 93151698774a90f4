"""Parameter schedule for the nibble: list sizes, colour degrees, reserve counts.

``log`` is the natural logarithm throughout.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field


class ScheduleError(RuntimeError):
    pass


def default_ell(delta: float) -> int:
    return max(1, math.ceil(2 * math.log(delta)))


@dataclass(frozen=True)
class ScheduleParams:
    delta: float
    p: float = 0.25
    ell: int | None = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.delta < 2:
            raise ValueError("delta must be at least 2")
        if self.ell is None:
            object.__setattr__(self, "ell", default_ell(self.delta))
        if self.ell < 1:
            raise ValueError("ell must be positive")

    @property
    def log_delta(self) -> float:
        return math.log(self.delta)


@dataclass(frozen=True)
class ScheduleRow:
    i: int
    L: float
    N: float
    R: float
    retain: float
    keep: float


def retain_keep(L: float, N: float, p: float) -> tuple[float, float]:
    """Per-step retain and keep probabilities for list size ``L`` and colour degree ``N``."""
    retain = (1 - p / L) ** (N - 1)
    keep = 1 - p * (N / L) * retain**2
    return retain, keep


def make_row(i: int, L: float, N: float, R: float, p: float) -> ScheduleRow:
    retain, keep = retain_keep(L, N, p)
    return ScheduleRow(i, L, N, R, retain, keep)


def next_values(row: ScheduleRow, p: float, error: float) -> tuple[float, float, float]:
    """One step of the recurrences; ``error`` multiplies the square-root terms (log^2 Delta)."""
    L, N, R = row.L, row.N, row.R
    shrink = 1 - p * row.retain**2
    return (
        L * row.keep**2 - math.sqrt(L) * error,
        N * row.keep * shrink + math.sqrt(N) * error,
        R * shrink + math.sqrt(R) * error,
    )


@dataclass
class Schedule:
    params: ScheduleParams
    rows: list[ScheduleRow]
    i0: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "L", "N", "R", "retain", "keep"])
        for r in self.rows:
            writer.writerow([r.i, repr(r.L), repr(r.N), repr(r.R), repr(r.retain), repr(r.keep)])
        return buf.getvalue()


def initial_values(delta: float) -> tuple[float, float, float]:
    lg = math.log(delta)
    return delta + 6 * math.sqrt(delta) * lg**4, delta, 2 * math.sqrt(delta) * lg**4


def build_schedule(params: ScheduleParams, max_iterations: int | None = None) -> Schedule:
    """Iterate the recurrences until the list size drops below ``3 log^7 Delta``.

    The guard defaults to ``min(Delta, 10**6)`` iterations.
    """
    lg = params.log_delta
    stop = 3 * lg**7
    limit = max_iterations if max_iterations is not None else int(min(params.delta, 10**6))
    L, N, R = initial_values(params.delta)
    rows = [make_row(0, L, N, R, params.p)]
    while rows[-1].L >= stop:
        if len(rows) > limit:
            raise ScheduleError(f"schedule did not reach L < 3 log^7 Delta within {limit} iterations")
        L, N, R = next_values(rows[-1], params.p, lg**2)
        if L <= 0 or N <= 0 or R <= 0:
            raise ScheduleError(f"schedule left the positive range at i={len(rows)}")
        rows.append(make_row(len(rows), L, N, R, params.p))
    return Schedule(params, rows, len(rows) - 1)


@dataclass
class CheckReport:
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": self.checks, "details": self.details}


RELATIVE_SLACK = 1e-9


def _gt(a: float, b: float) -> bool:
    return a > b * (1 - RELATIVE_SLACK)


def _le(a: float, b: float) -> bool:
    return a <= b * (1 + RELATIVE_SLACK)


def check_size_lemma(s: Schedule) -> CheckReport:
    """Evaluate the size inequalities on the rows up to ``i0``.

    ``R_i0_upper`` uses the stated exponent 3.5; ``R_i0_upper_7_5`` is the
    bound actually consumed when finishing (``2 R_i0 <= 6 log^7.5``).
    """
    lg = s.params.log_delta
    last = s.rows[s.i0]
    rows = s.rows[: s.i0 + 1]
    rep = CheckReport()
    rep.checks["L_i0_lower"] = _gt(last.L, lg**7)
    rep.checks["N_i0_lower"] = _gt(last.N, lg**7)
    rep.checks["R_i0_lower"] = _gt(last.R, lg**7)
    rep.checks["R_i0_upper"] = _le(last.R, 3 * lg**3.5)
    rep.checks["R_i0_upper_7_5"] = _le(last.R, 3 * lg**7.5)
    bad_ratio = [r.i for r in rows if not _le(r.R / r.L, lg)]
    bad_ln = [r.i for r in rows if not (_gt(r.L, r.N) and _gt(r.N, r.L / 2))]
    rep.checks["R_over_L"] = not bad_ratio
    rep.checks["L_gt_N_gt_half_L"] = not bad_ln
    rep.details = {
        "i0": s.i0,
        "log7": lg**7,
        "L_i0": last.L,
        "N_i0": last.N,
        "R_i0": last.R,
        "R_over_L_failures": bad_ratio[:20],
        "L_N_failures": bad_ln[:20],
        "L_N_failure_count": len(bad_ln),
    }
    return rep


@dataclass(frozen=True)
class UntaintedRow:
    """One row of the error-free companions, stored as logarithms (they underflow floats)."""

    i: int
    log_L_star: float
    ratio: float  # N* / L*
    log_R_star: float
    keep_star: float

    @property
    def log_N_star(self) -> float:
        return self.log_L_star + math.log(self.ratio)


def build_untainted(s: Schedule) -> list[UntaintedRow]:
    """Error-free companions of the schedule, indexed from 1 so the closed forms use empty products at i=1.

    ``N*`` is carried as the ratio ``N*/L*``.  Iterating ``N*`` on its own is
    unstable around ``N* = L*`` (a relative error grows by ``1/(1 - p retain^2)``
    per row), while the ratio recurrence keeps an exact 1.0 exact.
    """
    p = s.params.p
    lg = s.params.log_delta
    log_L = math.log(s.params.delta)
    log_R = math.log(2) + 0.5 * log_L + 4 * math.log(lg)
    ratio = 1.0
    out: list[UntaintedRow] = []
    for i in range(1, s.i0 + 1):
        r2 = s.rows[i].retain ** 2
        keep = 1 - p * ratio * r2
        shrink = 1 - p * r2
        out.append(UntaintedRow(i, log_L, ratio, log_R, keep))
        log_L += 2 * math.log(keep)
        log_R += math.log(shrink)
        ratio = ratio * shrink / keep
    return out


def check_untainted(s: Schedule, rows: list[UntaintedRow] | None = None) -> CheckReport:
    rows = build_untainted(s) if rows is None else rows
    p = s.params.p
    lg = s.params.log_delta
    log_delta = math.log(s.params.delta)
    log_log7 = 7 * math.log(lg)
    log_bound = math.log(2 * math.sqrt(lg))
    rep = CheckReport()
    eq_fail, closed_fail, ratio_fail, track_fail = [], [], [], []
    log_prod = 0.0
    for row in rows:
        if row.i >= 2:
            log_prod += math.log(1 - p * s.rows[row.i - 1].retain ** 2)
        if abs(row.ratio - 1) > RELATIVE_SLACK:
            eq_fail.append(row.i)
        want_L = log_delta + 2 * log_prod
        want_R = math.log(2) + 0.5 * log_delta + 4 * math.log(lg) + log_prod
        # relative slack on a value is absolute slack on its logarithm
        if abs(row.log_L_star - want_L) > RELATIVE_SLACK or abs(row.log_R_star - want_R) > RELATIVE_SLACK:
            closed_fail.append(row.i)
        if row.log_L_star > log_log7 and not row.log_R_star - row.log_L_star < log_bound + RELATIVE_SLACK:
            ratio_fail.append(row.i)
        r_star = math.exp(row.log_R_star)
        if not _le(s.rows[row.i].R, r_star + math.sqrt(r_star) * lg**2.5):
            track_fail.append(row.i)
    rep.checks["L_star_eq_N_star"] = not eq_fail
    rep.checks["closed_forms"] = not closed_fail
    rep.checks["R_star_over_L_star"] = not ratio_fail
    rep.checks["R_tracks_R_star"] = not track_fail
    rep.details = {
        "rows": len(rows),
        "L_star_eq_N_star_failures": eq_fail[:20],
        "closed_form_failures": closed_fail[:20],
        "ratio_failures": ratio_fail[:20],
        "R_tracking_failures": track_fail[:20],
        "R_tracking_failure_count": len(track_fail),
    }
    return rep


def expected_danger_bound(L: float, N: float, p: float, ell: int) -> float:
    """Per-edge bound on the expected number of colours lost to dangerous paths."""
    x = p * N / L
    if x >= 1:
        raise ValueError("p*N/L must be below 1")
    geometric = sum(x**k for k in range(ell))
    return L * (2 * x**ell + (p / L) * geometric)


def row_dict(row: ScheduleRow) -> dict:
    return asdict(row)
