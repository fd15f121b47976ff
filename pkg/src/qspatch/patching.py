"""Typical sets, cross-measure compatibility, and the patched universal solution.

A measure "sees" a path when the path's realized variance-rate record lies
in the support of the measure's volatility spec.  On every path seen by
several measures the per-measure solutions must coincide exactly, because
the solver reads nothing but the path.
"""
from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import (
    Constant,
    DriverPath,
    MeasureFamily,
    Member,
    Mixture,
    PathStream,
    PiecewiseConstant,
    RegimeSwitching,
    TimeGrid,
    VolatilitySpec,
    average_measure,
    branch_stream,
    sample_driver,
)
from .sde import CoefficientSet, SolutionPath, euler_residual, solve_strong

__all__ = [
    "DEFAULT_TOL",
    "ConflictError",
    "TypicalSetRecord",
    "CompatibilityReport",
    "UniversalSolutionTable",
    "typical_under",
    "assign_typical",
    "seeing_measures",
    "check_compatibility",
    "check_average_consistency",
    "patch",
    "pathwise_solver",
    "max_residual",
]

DEFAULT_TOL = 1e-12

# solver(coeffs, x0, driver, member) -> SolutionPath; the member is exposed so
# that test fixtures can model a solver that (wrongly) consults the measure
Solver = Callable[[CoefficientSet, float, DriverPath, Member], SolutionPath]


def pathwise_solver(coeffs: CoefficientSet, x0: float, driver: DriverPath, member: Member) -> SolutionPath:
    return solve_strong(coeffs, x0, driver, "pathwise", measure_id=member.id)


class ConflictError(RuntimeError):
    def __init__(self, report: "CompatibilityReport"):
        self.report = report
        super().__init__(
            f"{len(report.offending)} conflicting path(s); max deviation {report.max_deviation!r}"
        )


def _close(mu: np.ndarray, v: float, tol: float) -> np.ndarray:
    return np.abs(mu - v) <= tol


def typical_under(spec: VolatilitySpec, driver: DriverPath, tol: float = DEFAULT_TOL) -> bool:
    """Is the driver's variance-rate record in the support of ``spec``?"""
    mu = driver.vol_record
    if isinstance(spec, Constant):
        return bool(np.all(_close(mu, spec.v, tol)))
    if isinstance(spec, PiecewiseConstant):
        target = spec.schedule(driver.grid.points[:-1])
        return bool(np.all(np.abs(mu - target) <= tol))
    if isinstance(spec, RegimeSwitching):
        states = np.asarray(spec.states)
        hits = np.abs(mu[:, None] - states[None, :]) <= tol
        if not np.all(hits.any(axis=1)):
            return False
        if len(mu) < 2:
            return True
        # degenerate chains restrict which sequences are reachable
        steps = mu[1:] != mu[:-1]
        if spec.switch_prob == 0.0:
            return not bool(np.any(np.abs(mu[1:] - mu[:-1]) > 2 * tol))
        if spec.switch_prob == 1.0 and len(states) > 1:
            return bool(np.all(steps))
        return True
    if isinstance(spec, Mixture):
        return typical_under(spec.left, driver, tol) or typical_under(spec.right, driver, tol)
    raise TypeError(f"unknown spec {spec!r}")


@dataclass(frozen=True)
class TypicalSetRecord:
    measure_id: str
    path_ids: frozenset


def assign_typical(
    family: MeasureFamily, paths: Sequence[DriverPath], tol: float = DEFAULT_TOL
) -> list[TypicalSetRecord]:
    return [
        TypicalSetRecord(m.id, frozenset(p.path_id for p in paths if typical_under(m.spec, p, tol)))
        for m in family
    ]


def seeing_measures(family: MeasureFamily, driver: DriverPath, tol: float = DEFAULT_TOL) -> list[Member]:
    """Members that see ``driver`` as typical, in family order."""
    return [m for m in family if typical_under(m.spec, driver, tol)]


@dataclass
class CompatibilityReport:
    pairs: list = field(default_factory=list)  # (measure_a, measure_b, path_id, deviation)
    max_deviation: float = 0.0
    passed: bool = True
    branch_counts: dict | None = None

    @property
    def offending(self) -> list:
        return [p for p in self.pairs if p[3] != 0.0]

    @property
    def n_paths_deviating(self) -> int:
        return len({p[2] for p in self.offending})

    def as_dict(self) -> dict:
        out = {
            "pass": self.passed,
            "max_deviation": self.max_deviation,
            "n_pairs": len(self.pairs),
            "n_paths_checked": len({p[2] for p in self.pairs}),
            "n_paths_deviating": self.n_paths_deviating,
            "offending": [
                {"measures": [a, b], "path_id": pid, "deviation": d} for a, b, pid, d in self.offending
            ],
        }
        if self.branch_counts is not None:
            out["branch_counts"] = self.branch_counts
        return out


def _finish(report: CompatibilityReport) -> CompatibilityReport:
    report.max_deviation = max((p[3] for p in report.pairs), default=0.0)
    report.passed = report.max_deviation == 0.0
    return report


def _sup_gap(a: SolutionPath, b: SolutionPath) -> float:
    return float(np.max(np.abs(a.values - b.values)))


def _solve_all(family, coeffs, x0, paths, tol, solver, threads):
    def work(p):
        return [(m, solver(coeffs, x0, p, m)) for m in seeing_measures(family, p, tol)]

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(work, paths))
    return [work(p) for p in paths]


def check_compatibility(
    family: MeasureFamily,
    coeffs: CoefficientSet,
    x0: float,
    paths: Sequence[DriverPath],
    tol: float = DEFAULT_TOL,
    solver: Solver = pathwise_solver,
    threads: int = 1,
) -> CompatibilityReport:
    """Solve each multiply-seen path under every seeing measure and compare."""
    report = CompatibilityReport()
    for p, sols in zip(paths, _solve_all(family, coeffs, x0, paths, tol, solver, threads)):
        for i in range(len(sols)):
            for j in range(i + 1, len(sols)):
                (mi, si), (mj, sj) = sols[i], sols[j]
                report.pairs.append((mi.id, mj.id, p.path_id, _sup_gap(si, sj)))
    return _finish(report)


def check_average_consistency(
    P: Member,
    Q: Member,
    coeffs: CoefficientSet,
    x0: float,
    n_paths: int,
    grid: TimeGrid,
    seed: int,
    solver: Solver = pathwise_solver,
) -> CompatibilityReport:
    """Sample under (P+Q)/2 and compare with the branch component's own solve.

    Each mixture path is regenerated under the component its coin chose,
    from the same delegated sub-stream, and solved there; solutions and
    driver values must match exactly.
    """
    R = Member(f"avg({P.id},{Q.id})", average_measure(P.spec, Q.spec))
    report = CompatibilityReport(branch_counts={"left": 0, "right": 0})
    for i in range(n_paths):
        stream = PathStream.for_path(seed, R.id, i)
        dr = sample_driver(R.spec, grid, stream, (R.id, int(seed), i))
        side = dr.branch_tag.split("/")[0]
        comp = P if side == "left" else Q
        report.branch_counts[side] += 1
        dc = sample_driver(comp.spec, grid, branch_stream(stream), (comp.id, int(seed), i))
        if not np.array_equal(dr.values, dc.values):
            report.pairs.append((R.id, comp.id, dr.path_id, float(np.max(np.abs(dr.values - dc.values)))))
            continue
        report.pairs.append(
            (R.id, comp.id, dr.path_id, _sup_gap(solver(coeffs, x0, dr, R), solver(coeffs, x0, dc, comp)))
        )
    return _finish(report)


@dataclass
class UniversalSolutionTable:
    entries: dict  # path_id -> (SolutionPath, frozenset of measure ids)
    exceptional: dict  # path_id -> default SolutionPath (identically 0)
    conflicts: list
    order: list  # path ids in input order

    def value(self, path_id: str) -> SolutionPath:
        if path_id in self.entries:
            return self.entries[path_id][0]
        return self.exceptional[path_id]

    def provenance(self, path_id: str) -> frozenset:
        return self.entries[path_id][1] if path_id in self.entries else frozenset()

    def summary(self) -> dict:
        hist = Counter(len(prov) for _, prov in self.entries.values())
        by_set = Counter(";".join(sorted(prov)) for _, prov in self.entries.values())
        return {
            "n_paths": len(self.order),
            "n_entries": len(self.entries),
            "n_exceptional": len(self.exceptional),
            "n_conflicts": len(self.conflicts),
            "provenance_size_histogram": {str(k): hist[k] for k in sorted(hist)},
            "provenance_sets": {k: by_set[k] for k in sorted(by_set)},
            "exceptional": [pid for pid in self.order if pid in self.exceptional],
        }


def patch(
    family: MeasureFamily,
    coeffs: CoefficientSet,
    x0: float,
    paths: Sequence[DriverPath],
    tol: float = DEFAULT_TOL,
    solver: Solver = pathwise_solver,
    threads: int = 1,
) -> UniversalSolutionTable:
    """Assemble one solution per path from any measure that sees it.

    Paths seen by no measure get the constant-zero default.  Distinct
    solutions from two seeing measures raise ``ConflictError``.
    """
    ids = [p.path_id for p in paths]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate path ids in batch")
    entries, exceptional = {}, {}
    report = CompatibilityReport()
    for p, sols in zip(paths, _solve_all(family, coeffs, x0, paths, tol, solver, threads)):
        if not sols:
            zero = np.zeros(p.grid.N + 1)
            zero.setflags(write=False)
            exceptional[p.path_id] = SolutionPath(p.grid, zero, float(x0), p.provenance, None, "pathwise")
            continue
        first = sols[0][1]
        for m, s in sols[1:]:
            report.pairs.append((sols[0][0].id, m.id, p.path_id, _sup_gap(first, s)))
        entries[p.path_id] = (first, frozenset(m.id for m, _ in sols))
    _finish(report)
    if not report.passed:
        raise ConflictError(report)
    return UniversalSolutionTable(entries, exceptional, [], ids)


def max_residual(table: UniversalSolutionTable, coeffs: CoefficientSet, paths: Sequence[DriverPath]) -> float:
    """Largest |Euler residual| over every table entry (exceptional paths excluded)."""
    worst = 0.0
    for p in paths:
        if p.path_id in table.entries:
            sol = table.entries[p.path_id][0]
            worst = max(worst, float(np.max(np.abs(euler_residual(coeffs, sol, p)))))
    return worst
