"""Measure family as volatility-density specs, and driver-path generation.

A measure is encoded by the law of its quadratic-variation density
``mu_t``.  Paths are drawn from counter-based streams keyed by
``(master seed, measure id, path index)`` so any subset of paths can be
regenerated independently of execution order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "SpecError",
    "TimeGrid",
    "make_grid",
    "PathStream",
    "VolatilitySpec",
    "Constant",
    "PiecewiseConstant",
    "RegimeSwitching",
    "Mixture",
    "Member",
    "MeasureFamily",
    "DriverPath",
    "branch_stream",
    "sample_vol_path",
    "sample_driver",
    "sample_block",
    "simulate_family",
    "average_measure",
    "nominal_variance",
    "spec_from_dict",
    "family_from_dicts",
]

# child-stream slots
_VOL, _NOISE, _BRANCH = 0, 1, 2


class SpecError(ValueError):
    """Invalid grid, volatility spec or measure family."""


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform time grid.  ``points`` may be a window of a larger grid."""

    points: np.ndarray
    dt: float

    @property
    def N(self) -> int:
        return len(self.points) - 1

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def start(self) -> float:
        return float(self.points[0])

    def window(self, k0: int, k1: int) -> "TimeGrid":
        """Sub-grid over indices ``k0..k1`` sharing this grid's time points."""
        if not 0 <= k0 < k1 <= self.N:
            raise SpecError(f"bad window [{k0}, {k1}] for grid with N={self.N}")
        return TimeGrid(_frozen(self.points[k0 : k1 + 1]), self.dt)

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            self.dt == other.dt and np.array_equal(self.points, other.points)
        )


def make_grid(T: float, N: int) -> TimeGrid:
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise SpecError(f"step count must be a positive integer, got {N!r}")
    if not (np.isfinite(T) and T > 0):
        raise SpecError(f"horizon must be positive, got {T!r}")
    dt = T / N
    points = np.arange(N + 1, dtype=np.float64) * dt
    points[-1] = T
    return TimeGrid(_frozen(points), dt)


def _measure_key(measure_id: str) -> int:
    digest = hashlib.blake2b(measure_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class PathStream:
    """Counter-based (Philox) random stream identified by a key path.

    Streams with the same ``(seed, key)`` always produce the same draws;
    ``child`` derives independent sub-streams.
    """

    seed: int
    key: tuple[int, ...] = ()

    @classmethod
    def for_path(cls, seed: int, measure_id: str | None, path_index: int) -> "PathStream":
        # measure_id=None gives common random numbers across measures
        mkey = 0 if measure_id is None else _measure_key(measure_id)
        return cls(int(seed), (mkey, int(path_index)))

    def child(self, slot: int) -> "PathStream":
        return PathStream(self.seed, self.key + (int(slot),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------
# volatility specs


class VolatilitySpec:
    """Base class; concrete kinds are the frozen dataclasses below."""

    bounds: tuple[float, float]

    def reachable(self) -> tuple[float, ...]:
        raise NotImplementedError

    def _check_bounds(self, declared) -> None:
        values = self.reachable()
        if any(not np.isfinite(v) or v <= 0 for v in values):
            raise SpecError(f"{type(self).__name__}: variance rates must be finite and > 0")
        tight = (min(values), max(values))
        if declared is None:
            object.__setattr__(self, "bounds", tight)
            return
        lo, hi = (float(b) for b in declared)
        if not (0 < lo <= tight[0] and tight[1] <= hi < np.inf):
            raise SpecError(
                f"{type(self).__name__}: reachable range {tight} not within bounds ({lo}, {hi})"
            )
        object.__setattr__(self, "bounds", (lo, hi))


@dataclass(frozen=True)
class Constant(VolatilitySpec):
    v: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "v", float(self.v))
        self._check_bounds(self.bounds)

    def reachable(self):
        return (self.v,)


@dataclass(frozen=True)
class PiecewiseConstant(VolatilitySpec):
    """Deterministic schedule: ``values[i]`` applies on ``[breakpoints[i-1], breakpoints[i])``."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(bp) + 1:
            raise SpecError("piecewise spec needs len(values) == len(breakpoints) + 1")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise SpecError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        self._check_bounds(self.bounds)

    def reachable(self):
        return self.values

    def schedule(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.breakpoints), times, side="right")
        return np.asarray(self.values)[idx]


@dataclass(frozen=True)
class RegimeSwitching(VolatilitySpec):
    """Markov regimes: uniform initial state; each step switches with
    probability ``switch_prob`` to a uniformly chosen other state."""

    states: tuple[float, ...]
    switch_prob: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        states = tuple(float(s) for s in self.states)
        if not states:
            raise SpecError("regime spec needs at least one state")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise SpecError(f"switch_prob must lie in [0, 1], got {self.switch_prob}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "switch_prob", float(self.switch_prob))
        self._check_bounds(self.bounds)

    def reachable(self):
        return self.states


@dataclass(frozen=True)
class Mixture(VolatilitySpec):
    """Draw ``left`` with probability ``weight``, else ``right``."""

    left: VolatilitySpec
    right: VolatilitySpec
    weight: float = 0.5
    bounds: tuple[float, float] = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise SpecError(f"mixture weight must lie in [0, 1], got {self.weight}")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(
            self,
            "bounds",
            (
                min(self.left.bounds[0], self.right.bounds[0]),
                max(self.left.bounds[1], self.right.bounds[1]),
            ),
        )

    def reachable(self):
        return self.left.reachable() + self.right.reachable()


def average_measure(P: VolatilitySpec, Q: VolatilitySpec) -> Mixture:
    """The equal-weight mixture (P + Q) / 2."""
    return Mixture(P, Q, 0.5)


def nominal_variance(spec: VolatilitySpec) -> float:
    """A single representative variance rate (regime/mixture means).

    Only the deliberately measure-dependent test solvers use this.
    """
    if isinstance(spec, Constant):
        return spec.v
    if isinstance(spec, PiecewiseConstant):
        return float(np.mean(spec.values))
    if isinstance(spec, RegimeSwitching):
        return float(np.mean(spec.states))
    if isinstance(spec, Mixture):
        w = spec.weight
        return w * nominal_variance(spec.left) + (1 - w) * nominal_variance(spec.right)
    raise TypeError(f"unknown spec {spec!r}")


class Member(NamedTuple):
    id: str
    spec: VolatilitySpec


@dataclass(frozen=True)
class MeasureFamily:
    members: tuple[Member, ...]
    envelope: tuple[float, float] = field(init=False)

    def __post_init__(self):
        members = tuple(Member(str(i), s) for i, s in self.members)
        if not members:
            raise SpecError("measure family must be non-empty")
        ids = [m.id for m in members]
        if len(set(ids)) != len(ids):
            raise SpecError(f"duplicate measure ids in {ids}")
        object.__setattr__(self, "members", members)
        object.__setattr__(
            self,
            "envelope",
            (min(m.spec.bounds[0] for m in members), max(m.spec.bounds[1] for m in members)),
        )

    def __iter__(self) -> Iterator[Member]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.members)

    def __getitem__(self, measure_id: str) -> Member:
        for m in self.members:
            if m.id == measure_id:
                return m
        raise KeyError(measure_id)


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True, eq=False)
class DriverPath:
    grid: TimeGrid
    values: np.ndarray
    vol_record: np.ndarray
    qv_pathwise: np.ndarray
    provenance: tuple[str, int, int]
    branch_tag: str | None = None

    def __post_init__(self):
        n = self.grid.N
        if len(self.values) != n + 1 or len(self.vol_record) != n or len(self.qv_pathwise) != n + 1:
            raise SpecError("driver path arrays do not match the grid")

    @property
    def path_id(self) -> str:
        mid, seed, idx = self.provenance
        return f"{mid}:{seed}:{idx}"

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @classmethod
    def from_values(
        cls,
        grid: TimeGrid,
        values,
        vol_record,
        provenance: tuple[str, int, int],
        branch_tag: str | None = None,
    ) -> "DriverPath":
        """Build a path from stored driver values (e.g. an imported path)."""
        values = _frozen(values)
        return cls(grid, values, _frozen(vol_record), _frozen(_cum_qv(values)), provenance, branch_tag)

    def window(self, k0: int, k1: int) -> "DriverPath":
        """The same path restricted to indices ``k0..k1`` (values not re-based)."""
        qv = self.qv_pathwise[k0 : k1 + 1] - self.qv_pathwise[k0]
        return DriverPath(
            self.grid.window(k0, k1),
            _frozen(self.values[k0 : k1 + 1]),
            _frozen(self.vol_record[k0:k1]),
            _frozen(qv),
            self.provenance,
            self.branch_tag,
        )


def _cum_qv(values: np.ndarray) -> np.ndarray:
    out = np.zeros(len(values))
    np.cumsum(np.diff(values) ** 2, out=out[1:])
    return out


def _resolve(spec: VolatilitySpec, stream: PathStream):
    """Walk mixture nodes with coin flips; returns (leaf spec, leaf stream, tag)."""
    tags = []
    while isinstance(spec, Mixture):
        coin = stream.generator().random()
        if coin < spec.weight:
            spec, tag = spec.left, "left"
        else:
            spec, tag = spec.right, "right"
        tags.append(tag)
        stream = stream.child(_BRANCH)
    return spec, stream, ("/".join(tags) or None)


def _leaf_vol(spec: VolatilitySpec, grid: TimeGrid, stream: PathStream) -> np.ndarray:
    n = grid.N
    if isinstance(spec, Constant):
        return np.full(n, spec.v)
    if isinstance(spec, PiecewiseConstant):
        return spec.schedule(grid.points[:-1]).astype(np.float64)
    if isinstance(spec, RegimeSwitching):
        k = len(spec.states)
        rng = stream.generator()
        init = int(rng.integers(k))
        switch = rng.random(n - 1) < spec.switch_prob
        if k > 1:
            hop = rng.integers(1, k, size=n - 1)
        else:
            hop = np.zeros(n - 1, dtype=np.int64)
        state = np.empty(n, dtype=np.int64)
        state[0] = init
        state[1:] = init + np.cumsum(np.where(switch, hop, 0))
        return np.asarray(spec.states)[state % k]
    raise TypeError(f"unknown spec {spec!r}")


def branch_stream(stream: PathStream) -> PathStream:
    """The sub-stream a mixture delegates to once its coin has been drawn."""
    return stream.child(_BRANCH)


def sample_vol_path(spec: VolatilitySpec, grid: TimeGrid, stream: PathStream):
    """Variance-rate record for one path; returns ``(mu, branch_tag)``."""
    leaf, s, tag = _resolve(spec, stream)
    return _leaf_vol(leaf, grid, s.child(_VOL)), tag


def _draw(spec: VolatilitySpec, grid: TimeGrid, stream: PathStream):
    leaf, s, tag = _resolve(spec, stream)
    mu = _leaf_vol(leaf, grid, s.child(_VOL))
    z = s.child(_NOISE).generator().standard_normal(grid.N)
    B = np.zeros(grid.N + 1)
    np.cumsum(np.sqrt(mu * grid.dt) * z, out=B[1:])
    return B, mu, tag


def sample_driver(
    spec: VolatilitySpec,
    grid: TimeGrid,
    stream: PathStream,
    provenance: tuple[str, int, int] | None = None,
) -> DriverPath:
    B, mu, tag = _draw(spec, grid, stream)
    if provenance is None:
        provenance = ("", stream.seed, stream.key[-1] if stream.key else 0)
    return DriverPath(grid, _frozen(B), _frozen(mu), _frozen(_cum_qv(B)), provenance, tag)


def _path_stream(seed, measure_id, index, crn):
    return PathStream.for_path(seed, None if crn else measure_id, index)


def sample_block(
    member: Member,
    grid: TimeGrid,
    seed: int,
    start: int,
    count: int,
    crn: bool = False,
):
    """Driver values and vol records for paths ``start..start+count-1`` as arrays.

    Row ``i`` is bitwise identical to the corresponding ``sample_driver`` path.
    """
    B = np.empty((count, grid.N + 1))
    mu = np.empty((count, grid.N))
    tags = []
    for i in range(count):
        B[i], mu[i], tag = _draw(member.spec, grid, _path_stream(seed, member.id, start + i, crn))
        tags.append(tag)
    return B, mu, tags


def simulate_family(
    family: MeasureFamily,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    crn: bool = False,
) -> dict[str, list[DriverPath]]:
    """``n_paths`` driver paths under every member, keyed by measure id."""
    out = {}
    for m in family:
        out[m.id] = [
            sample_driver(m.spec, grid, _path_stream(seed, m.id, i, crn), (m.id, int(seed), i))
            for i in range(n_paths)
        ]
    return out


# --------------------------------------------------------------------------
# construction from plain data (config files)


def _bounds_of(d):
    b = d.get("bounds")
    return None if b is None else tuple(float(x) for x in b)


def spec_from_dict(d: dict) -> VolatilitySpec:
    kind = str(d.get("kind", "")).lower()
    try:
        if kind == "constant":
            return Constant(float(d["v"]), _bounds_of(d))
        if kind in ("piecewise", "piecewise_constant"):
            return PiecewiseConstant(tuple(d["breakpoints"]), tuple(d["values"]), _bounds_of(d))
        if kind in ("regime", "regime_switching"):
            return RegimeSwitching(tuple(d["states"]), float(d["switch_prob"]), _bounds_of(d))
        if kind == "mixture":
            return Mixture(
                spec_from_dict(d["left"]), spec_from_dict(d["right"]), float(d.get("weight", 0.5))
            )
    except KeyError as exc:
        raise SpecError(f"{kind} spec is missing parameter {exc.args[0]!r}") from None
    raise SpecError(f"unknown volatility kind {d.get('kind')!r}")


def family_from_dicts(members: Sequence[dict]) -> MeasureFamily:
    out = []
    for d in members:
        if "id" not in d:
            raise SpecError("every family member needs an 'id'")
        out.append(Member(str(d["id"]), spec_from_dict(d)))
    return MeasureFamily(tuple(out))
