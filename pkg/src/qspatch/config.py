"""TOML run configuration.

Grammar (all sections optional except ``grid``, ``family`` and ``run``)::

    [grid]           T = 1.0, N = 256
    [[family]]       id = "...", kind = constant|piecewise|regime|mixture, kind params,
                     optional bounds = [lo, hi]; mixture members nest
                     left = {kind = ...}, right = {...}, weight = 0.5
    [coefficients]   name = gbm|qv_drift_gbm|sqrt_diffusion|cubic_monotone|stochvol,
                     x0 = 1.0, [coefficients.params] ...
    [functional]     kind = terminal|driver_terminal|qv_terminal,
                     payoff = call|put|square|identity|constant, scale = 1.0,
                     [functional.params] ...
    [run]            n_paths, master_seed (mandatory), threads = 1,
                     qv_mode = pathwise|generator, crn = false, tol = 1e-12,
                     block_size = 4096
    [integrate]      integrand = driver|constant|step, n_max = 20, tol = 0.0, n_paths = 1
    [compat]         average_paths = 0
    [validate]       check = auto|lipschitz|yamada_watanabe|monotone, domain = [lo, hi],
                     n_pairs = 3000, tolerance = 0.01, K, K_coercive, alpha
    [output]         directory = "out", formats = ["csv", "json"]
"""
from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gexpect import Functional, payoff
from .measures import MeasureFamily, SpecError, TimeGrid, family_from_dicts, make_grid
from .sde import CoefficientSet, builtin_coefficients


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        where = f"{path or '<config>'}:{line}: " if line else f"{path or '<config>'}: "
        super().__init__(where + message)


@dataclass
class RunConfig:
    grid: TimeGrid
    family: MeasureFamily
    n_paths: int
    master_seed: int
    threads: int = 1
    qv_mode: str = "pathwise"
    crn: bool = False
    tol: float = 1e-12
    block_size: int = 4096
    coefficients: CoefficientSet | None = None
    x0: float = 0.0
    functional: Functional | None = None
    integrate: dict = field(default_factory=dict)
    compat: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    output_dir: str = "out"
    formats: tuple = ("csv", "json")
    config_sha256: str = ""
    source: str = "<config>"


_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")


def _locate(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` inside ``section`` (or of the section header)."""
    current, header_line = None, None
    for i, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            current = m.group(1)
            if current == section and header_line is None:
                header_line = i
            continue
        if key and current == section and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return i
    return header_line


class _Reader:
    def __init__(self, text: str, data: dict, source: str):
        self.text, self.data, self.source = text, data, source

    def fail(self, msg, section, key=None):
        raise ConfigError(msg, _locate(self.text, section, key), self.source)

    def section(self, name, required=False):
        sec = self.data.get(name)
        if sec is None:
            if required:
                raise ConfigError(f"missing required section [{name}]", None, self.source)
            return {}
        return sec

    def get(self, section, key, typ, default=..., check=None):
        sec = self.data.get(section, {})
        if key not in sec:
            if default is ...:
                self.fail(f"[{section}] is missing required key {key!r}", section)
            return default
        value = sec[key]
        try:
            if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise TypeError
            if typ is float and isinstance(value, bool):
                raise TypeError
            value = typ(value)
        except (TypeError, ValueError):
            self.fail(f"{section}.{key} must be {typ.__name__}, got {value!r}", section, key)
        if check is not None and not check(value):
            self.fail(f"invalid value for {section}.{key}: {value!r}", section, key)
        return value


def parse_config(text: str, source: str = "<config>", seed_override: int | None = None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    r = _Reader(text, data, source)
    r.section("grid", required=True)
    try:
        grid = make_grid(r.get("grid", "T", float), r.get("grid", "N", int))
    except SpecError as exc:
        r.fail(str(exc), "grid")

    members = data.get("family")
    if not isinstance(members, list) or not members:
        raise ConfigError("missing [[family]] members", _locate(text, "family"), source)
    try:
        family = family_from_dicts(members)
    except (SpecError, TypeError, ValueError) as exc:
        r.fail(f"bad measure family: {exc}", "family")

    r.section("run", required=True)
    if seed_override is None:
        master_seed = r.get("run", "master_seed", int, check=lambda v: v >= 0)
    else:
        master_seed = int(seed_override)
    cfg = RunConfig(
        grid=grid,
        family=family,
        n_paths=r.get("run", "n_paths", int, 0, check=lambda v: v >= 0),
        master_seed=master_seed,
        threads=r.get("run", "threads", int, 1, check=lambda v: v >= 1),
        qv_mode=r.get("run", "qv_mode", str, "pathwise", check=lambda v: v in ("pathwise", "generator")),
        crn=r.get("run", "crn", bool, False),
        tol=r.get("run", "tol", float, 1e-12, check=lambda v: v >= 0),
        block_size=r.get("run", "block_size", int, 4096, check=lambda v: v >= 1),
        source=source,
        config_sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )

    if "coefficients" in data:
        name = r.get("coefficients", "name", str)
        params = r.section("coefficients").get("params", {})
        try:
            cfg.coefficients = builtin_coefficients(name, **params)
        except ValueError as exc:
            r.fail(str(exc), "coefficients", "name")
        cfg.x0 = r.get("coefficients", "x0", float, 0.0)

    if "functional" in data:
        kind = r.get("functional", "kind", str, "terminal")
        name = r.get("functional", "payoff", str)
        scale = r.get("functional", "scale", float, 1.0)
        params = r.section("functional").get("params", {})
        try:
            cfg.functional = payoff(kind, name, scale, **params)
        except ValueError as exc:
            r.fail(str(exc), "functional", "payoff")

    cfg.integrate = {
        "integrand": r.get("integrate", "integrand", str, "driver", check=lambda v: v in ("driver", "constant", "step")),
        "n_max": r.get("integrate", "n_max", int, 20, check=lambda v: v >= 2),
        "tol": r.get("integrate", "tol", float, 0.0, check=lambda v: v >= 0),
        "n_paths": r.get("integrate", "n_paths", int, 1, check=lambda v: v >= 0),
    }
    cfg.compat = {"average_paths": r.get("compat", "average_paths", int, 0, check=lambda v: v >= 0)}
    v = r.section("validate")
    cfg.validate = {
        "check": r.get("validate", "check", str, "auto",
                       check=lambda s: s in ("auto", "lipschitz", "yamada_watanabe", "monotone")),
        "n_pairs": r.get("validate", "n_pairs", int, 3000, check=lambda n: n >= 1),
        "tolerance": r.get("validate", "tolerance", float, 0.01, check=lambda t: t >= 0),
        "domain": tuple(v["domain"]) if "domain" in v else None,
        "K": r.get("validate", "K", float, None),
        "K_coercive": r.get("validate", "K_coercive", float, None),
        "alpha": r.get("validate", "alpha", float, None),
    }
    if cfg.validate["domain"] is not None and len(cfg.validate["domain"]) != 2:
        r.fail("validate.domain must be [lo, hi]", "validate", "domain")

    cfg.output_dir = r.get("output", "directory", str, "out")
    formats = r.section("output").get("formats", ["csv", "json"])
    cfg.formats = tuple(str(f) for f in formats)
    return cfg


def load_config(path, seed_override: int | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(p)) from None
    return parse_config(text, str(p), seed_override)
