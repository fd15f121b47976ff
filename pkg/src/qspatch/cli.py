"""``qspatch`` command line: simulate | integrate | compat | patch | price | validate.

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 solver blow-up, 4 compatibility failure, 5 patching conflict.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import GridProcess, ito_limsup
from .config import ConfigError, RunConfig, load_config
from .export import breakdown_csv, csv_text, drivers_csv, json_text, table_csv, write_text
from .gexpect import g_expect, robust_price
from .measures import PathStream, simulate_family
from .patching import ConflictError, check_average_consistency, check_compatibility, patch
from .sde import BlowUpError, check_lipschitz, check_monotone, check_yamada_watanabe

log = logging.getLogger("qspatch")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP, EXIT_COMPAT, EXIT_CONFLICT = 0, 1, 2, 3, 4, 5


class _Out:
    """Collects written files for the manifest."""

    def __init__(self, cfg: RunConfig, directory: Path, command: str):
        self.cfg, self.dir, self.command = cfg, directory, command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hashes: dict[str, str] = {}

    def write(self, name: str, text: str, fmt: str) -> None:
        if fmt in self.cfg.formats:
            self.hashes[name] = write_text(self.dir / name, text)

    def manifest(self) -> None:
        # thread count is deliberately absent: outputs must not depend on it
        write_text(
            self.dir / "manifest.json",
            json_text(
                {
                    "command": self.command,
                    "package_version": __version__,
                    "config_sha256": self.cfg.config_sha256,
                    "master_seed": self.cfg.master_seed,
                    "outputs": dict(sorted(self.hashes.items())),
                }
            ),
        )


def _need(cfg: RunConfig, attr: str, section: str):
    value = getattr(cfg, attr)
    if value is None:
        raise ConfigError(f"this command needs a [{section}] section", None, cfg.source)
    return value


def _paths(cfg: RunConfig):
    batches = simulate_family(cfg.family, cfg.grid, cfg.n_paths, cfg.master_seed, cfg.crn)
    return [p for m in cfg.family for p in batches[m.id]], batches


def cmd_simulate(cfg: RunConfig, out: _Out) -> int:
    _, batches = _paths(cfg)
    summary = {"grid": {"T": cfg.grid.T, "N": cfg.grid.N}, "n_paths": cfg.n_paths, "members": {}}
    for m in cfg.family:
        paths = batches[m.id]
        out.write(f"drivers_{m.id}.csv", drivers_csv(paths), "csv")
        qv_T = np.array([p.qv_pathwise[-1] for p in paths])
        B_T = np.array([p.values[-1] for p in paths])
        stats = {"n": len(paths), "bounds": list(m.spec.bounds)}
        if len(paths):
            stats.update(
                qv_T_mean=float(qv_T.mean()),
                qv_T_min=float(qv_T.min()),
                qv_T_max=float(qv_T.max()),
                B_T_mean=float(B_T.mean()),
            )
        summary["members"][m.id] = stats
    out.write("simulate_summary.json", json_text(summary), "json")
    return EXIT_OK


def _integrand(kind: str, B: np.ndarray) -> np.ndarray:
    if kind == "driver":
        return B
    if kind == "constant":
        return np.ones_like(B)
    step = np.zeros_like(B)
    step[len(B) // 2 :] = 1.0
    return step


def cmd_integrate(cfg: RunConfig, out: _Out) -> int:
    opts = cfg.integrate
    member = cfg.family.members[0]
    paths = simulate_family(cfg.family, cfg.grid, opts["n_paths"], cfg.master_seed, cfg.crn)[member.id]
    rows, per_path, ok = [], [], True
    for p in paths:
        X = GridProcess(cfg.grid, p.values)
        eta = GridProcess(cfg.grid, _integrand(opts["integrand"], p.values))
        res = ito_limsup(eta, X, opts["n_max"], opts["tol"])
        last = res.stabilized_at or opts["n_max"]
        for n, eps, gap, err, bound in res.rows():
            if n > last:
                break
            bound_ok = err <= bound
            ok &= bound_ok
            rows.append((p.provenance[2], n, eps, gap, err, bound, "true" if bound_ok else "false"))
        per_path.append(
            {"path_index": p.provenance[2], "stabilized_at": res.stabilized_at, "converged": res.converged}
        )
    out.write(
        "convergence.csv",
        csv_text(("path_index", "n", "epsilon", "cauchy_gap", "sup_error", "error_bound", "bound_ok"), rows),
        "csv",
    )
    out.write(
        "integrate_summary.json",
        json_text({"measure_id": member.id, "integrand": opts["integrand"], "bounds_hold": ok, "paths": per_path}),
        "json",
    )
    return EXIT_OK if ok else EXIT_FAIL


def cmd_compat(cfg: RunConfig, out: _Out) -> int:
    coeffs = _need(cfg, "coefficients", "coefficients")
    paths, _ = _paths(cfg)
    rep = check_compatibility(cfg.family, coeffs, cfg.x0, paths, cfg.tol, threads=cfg.threads)
    result = {"pass": rep.passed, "pathwise": rep.as_dict(), "average": []}
    n_avg = cfg.compat["average_paths"]
    if n_avg:
        members = cfg.family.members
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                avg = check_average_consistency(
                    members[i], members[j], coeffs, cfg.x0, n_avg, cfg.grid, cfg.master_seed
                )
                result["average"].append({"P": members[i].id, "Q": members[j].id} | avg.as_dict())
                result["pass"] = result["pass"] and avg.passed
    out.write("compat.json", json_text(result), "json")
    return EXIT_OK if result["pass"] else EXIT_COMPAT


def cmd_patch(cfg: RunConfig, out: _Out) -> int:
    coeffs = _need(cfg, "coefficients", "coefficients")
    paths, _ = _paths(cfg)
    try:
        table = patch(cfg.family, coeffs, cfg.x0, paths, cfg.tol, threads=cfg.threads)
    except ConflictError as exc:
        out.write("patch_conflicts.json", json_text(exc.report.as_dict()), "json")
        log.error("%s", exc)
        return EXIT_CONFLICT
    out.write("table.csv", table_csv(table), "csv")
    out.write("patch_summary.json", json_text(table.summary()), "json")
    return EXIT_OK


def cmd_price(cfg: RunConfig, out: _Out) -> int:
    functional = _need(cfg, "functional", "functional")
    if cfg.n_paths < 2:
        raise ConfigError("price needs run.n_paths >= 2", None, cfg.source)
    if functional.kind == "terminal":
        coeffs = _need(cfg, "coefficients", "coefficients")
        g, _ = robust_price(
            cfg.family, coeffs, cfg.x0, functional, cfg.n_paths, cfg.master_seed, cfg.grid,
            cfg.threads, cfg.crn, cfg.block_size,
        )
    else:
        g = g_expect(
            cfg.family, cfg.coefficients, cfg.x0, functional, cfg.n_paths, cfg.master_seed, cfg.grid,
            cfg.qv_mode, cfg.threads, cfg.crn, cfg.block_size,
        )
    out.write("gexpect.json", json_text(g.as_dict() | {"functional": functional.description}), "json")
    out.write("breakdown.csv", breakdown_csv(g), "csv")
    return EXIT_OK


_AUTO_CHECK = {
    "Lipschitz": "lipschitz",
    "StochVol": "lipschitz",
    "YamadaWatanabe": "yamada_watanabe",
    "Monotone": "monotone",
}


def cmd_validate(cfg: RunConfig, out: _Out) -> int:
    coeffs = _need(cfg, "coefficients", "coefficients")
    v = cfg.validate
    check = v["check"] if v["check"] != "auto" else _AUTO_CHECK.get(coeffs.class_tag, "lipschitz")
    stream = PathStream(cfg.master_seed)
    common = dict(n_pairs=v["n_pairs"], stream=stream, tolerance=v["tolerance"], K=v["K"])
    try:
        if check == "lipschitz":
            rep = check_lipschitz(coeffs, v["domain"] or (-1.0, 1.0), **common)
        elif check == "yamada_watanabe":
            rep = check_yamada_watanabe(coeffs, v["alpha"], v["domain"] or (0.0, 1.0), **common)
        else:
            rep = check_monotone(coeffs, v["domain"] or (-1.0, 1.0), K_coercive=v["K_coercive"], **common)
    except ValueError as exc:
        raise ConfigError(str(exc), None, cfg.source) from None
    out.write("validate.json", json_text({"check": check} | rep.as_dict()), "json")
    return EXIT_OK if rep.verdict else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "integrate": cmd_integrate,
    "compat": cmd_compat,
    "patch": cmd_patch,
    "price": cmd_price,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qspatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("cmd_", ""))
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
        p.add_argument("--seed", type=int, help="override run.master_seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.threads = args.threads
        out = _Out(cfg, Path(args.out or cfg.output_dir), args.command)
        code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except BlowUpError as exc:
        log.error("%s", exc)
        return EXIT_BLOWUP
    out.manifest()
    log.info("%s finished with exit code %d; outputs in %s", args.command, code, out.dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
