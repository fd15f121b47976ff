"""Worst-case (sublinear) expectation over a finite measure family.

Each member is estimated by plain Monte Carlo; the G-expectation is the
max over members.  Functionals read only path data (X_T, B_T or the
realized quadratic variation), never the measure parameters.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import MeasureFamily, Member, TimeGrid, sample_block
from .sde import BlowUpError, CoefficientSet, euler_batch

__all__ = [
    "Functional",
    "Estimate",
    "GEstimate",
    "PAYOFFS",
    "payoff",
    "estimate",
    "g_expect",
    "robust_price",
    "evaluate_paths",
]

KINDS = ("terminal", "driver_terminal", "qv_terminal")
DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class Functional:
    """``phi`` applied to X_T (terminal), B_T (driver_terminal) or <B>_T (qv_terminal)."""

    kind: str
    phi: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"functional kind must be one of {KINDS}, got {self.kind!r}")

    def scaled(self, lam: float) -> "Functional":
        phi = self.phi
        return Functional(self.kind, lambda x: lam * phi(x), f"{lam:g}*({self.description})")


def _call(strike):
    return lambda x: np.maximum(x - strike, 0.0)


def _put(strike):
    return lambda x: np.maximum(strike - x, 0.0)


PAYOFFS: dict[str, Callable[..., Callable]] = {
    "call": lambda strike=1.0: _call(strike),
    "put": lambda strike=1.0: _put(strike),
    "square": lambda: lambda x: x * x,
    "identity": lambda: lambda x: np.asarray(x, dtype=np.float64),
    "constant": lambda value=1.0: lambda x: np.full(np.shape(x), float(value)),
}


def payoff(kind: str, name: str, scale: float = 1.0, **params) -> Functional:
    """Catalog functional, optionally multiplied by ``scale``."""
    try:
        phi = PAYOFFS[name](**{k: float(v) for k, v in params.items()})
    except KeyError:
        raise ValueError(f"unknown payoff {name!r}; known: {sorted(PAYOFFS)}") from None
    except TypeError as exc:
        raise ValueError(f"bad parameters for payoff {name!r}: {exc}") from None
    desc = name + ("" if not params else "(" + ", ".join(f"{k}={v:g}" for k, v in params.items()) + ")")
    if scale != 1.0:
        base = phi
        phi = lambda x: scale * base(x)  # noqa: E731
        desc = f"{scale:g}*{desc}"
    return Functional(kind, phi, desc)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    measure_id: str
    seed: int

    def as_dict(self) -> dict:
        return {"measure_id": self.measure_id, "mean": self.mean, "stderr": self.stderr, "n": self.n, "seed": self.seed}


@dataclass(frozen=True)
class GEstimate:
    per_measure: tuple[Estimate, ...]
    sup_value: float
    argmax_id: str
    inf_value: float
    argmin_id: str

    @classmethod
    def from_estimates(cls, ests) -> "GEstimate":
        ests = tuple(ests)
        if not ests:
            raise ValueError("no estimates to aggregate")
        # strict comparisons: ties go to the first member in family order
        hi = lo = ests[0]
        for e in ests[1:]:
            if e.mean > hi.mean:
                hi = e
            if e.mean < lo.mean:
                lo = e
        return cls(ests, hi.mean, hi.measure_id, lo.mean, lo.measure_id)

    def stderr_of(self, measure_id: str) -> float:
        return next(e.stderr for e in self.per_measure if e.measure_id == measure_id)

    def as_dict(self) -> dict:
        return {
            "sup_value": self.sup_value,
            "argmax_id": self.argmax_id,
            "inf_value": self.inf_value,
            "argmin_id": self.argmin_id,
            "per_measure": [e.as_dict() for e in self.per_measure],
        }

    def breakdown(self) -> list[dict]:
        return [{"measure_id": e.measure_id, "mean": e.mean, "stderr": e.stderr, "n": e.n} for e in self.per_measure]


def evaluate_paths(
    member: Member,
    grid: TimeGrid,
    coeffs: CoefficientSet | None,
    x0: float,
    functional: Functional,
    seed: int,
    start: int,
    count: int,
    qv_mode: str = "pathwise",
    crn: bool = False,
) -> np.ndarray:
    """Functional values on paths ``start..start+count-1`` of ``member``."""
    B, mu, _ = sample_block(member, grid, seed, start, count, crn)
    if functional.kind == "driver_terminal":
        return np.asarray(functional.phi(B[:, -1]), dtype=np.float64)
    dB = np.diff(B, axis=1)
    if functional.kind == "qv_terminal":
        # same sequential accumulation as DriverPath.qv_pathwise
        qv_T = np.cumsum(dB * dB, axis=1)[:, -1]
        return np.asarray(functional.phi(qv_T), dtype=np.float64)
    if coeffs is None:
        raise ValueError("terminal functionals over X need coefficients")
    if qv_mode == "pathwise":
        dq = dB * dB
    elif qv_mode == "generator":
        dq = mu * grid.dt
    else:
        raise ValueError(f"unknown qv_mode {qv_mode!r}")
    try:
        X = euler_batch(coeffs, float(x0), grid.points, grid.dt, dB, dq)
    except BlowUpError as exc:
        raise BlowUpError(exc.step, path=f"{member.id}:{seed}:{start + exc.row}") from None
    return np.asarray(functional.phi(X[:, -1]), dtype=np.float64)


def _summarize(values: np.ndarray, member_id: str, seed: int) -> Estimate:
    n = len(values)
    if n < 2:
        raise ValueError("need at least 2 samples")
    if np.all(values == values[0]):
        return Estimate(float(values[0]), 0.0, n, member_id, seed)
    return Estimate(float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n)), n, member_id, seed)


def _blocks(n: int, block: int):
    return [(s, min(block, n - s)) for s in range(0, n, block)]


def _run(tasks, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda f: f(), tasks))
    return [f() for f in tasks]


def g_expect(
    family: MeasureFamily,
    coeffs: CoefficientSet | None,
    x0: float,
    functional: Functional,
    n: int,
    seed: int,
    grid: TimeGrid,
    qv_mode: str = "pathwise",
    threads: int = 1,
    crn: bool = False,
    block_size: int = DEFAULT_BLOCK,
) -> GEstimate:
    """Per-member estimates and their max/min.

    Work is split into fixed-size path blocks; values are reassembled in
    path order, so results do not depend on ``threads``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    tasks, owners = [], []
    for m in family:
        for start, count in _blocks(n, block_size):
            tasks.append(
                lambda m=m, start=start, count=count: evaluate_paths(
                    m, grid, coeffs, x0, functional, seed, start, count, qv_mode, crn
                )
            )
            owners.append(m.id)
    results = _run(tasks, threads)
    ests = []
    for m in family:
        vals = np.concatenate([r for r, o in zip(results, owners) if o == m.id])
        ests.append(_summarize(vals, m.id, seed))
    return GEstimate.from_estimates(ests)


def estimate(
    member: Member,
    coeffs: CoefficientSet | None,
    x0: float,
    functional: Functional,
    n: int,
    seed: int,
    grid: TimeGrid,
    qv_mode: str = "pathwise",
    threads: int = 1,
    crn: bool = False,
    block_size: int = DEFAULT_BLOCK,
) -> Estimate:
    """Monte Carlo mean and standard error of ``functional`` under one member."""
    return g_expect(
        MeasureFamily((member,)), coeffs, x0, functional, n, seed, grid, qv_mode, threads, crn, block_size
    ).per_measure[0]


def robust_price(
    family: MeasureFamily,
    coeffs: CoefficientSet,
    x0: float,
    payoff_fn: Functional,
    n: int,
    seed: int,
    grid: TimeGrid,
    threads: int = 1,
    crn: bool = False,
    block_size: int = DEFAULT_BLOCK,
) -> tuple[GEstimate, list[dict]]:
    """Simulate under every member, price each path from its own solution
    (pathwise quadratic variation), and report the worst case."""
    if payoff_fn.kind != "terminal":
        raise ValueError("robust_price needs a terminal payoff over X")
    g = g_expect(family, coeffs, x0, payoff_fn, n, seed, grid, "pathwise", threads, crn, block_size)
    return g, g.breakdown()
