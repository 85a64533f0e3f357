"""Command-line driver: ``ghisd run | sweep | inspect | export``.

Exit codes: 0 success, 2 invalid input, 3 a sub-search diverged (``run``) or a
sweep value failed (``sweep``).  Artifacts are written atomically.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .config import SearchConfig, config_for
from .errors import ContractViolation
from .export import atomic_write, export_graph, import_graph, load_state, write_field_dumps
from .frame import probe_index
from .landscape import LandscapeGraph, SymmetrySpec, build_landscape, diverged_searches
from .systems import SystemSpec, VectorFieldSystem, make_system

logger = logging.getLogger("ghisd")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3

SWEEP_PARAMS = ("kappa", "gamma")


@dataclass
class RunConfig:
    """A parsed run configuration file."""

    path: Path
    spec: SystemSpec
    system: VectorFieldSystem
    cfg: SearchConfig
    sym: SymmetrySpec
    seeds: dict
    plan: list
    raw: dict


def bundled_configs() -> list[str]:
    root = resources.files("ghisd") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def _resolve_config_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = name if name.endswith(".json") else name + ".json"
    candidate = resources.files("ghisd") / "configs" / bundled
    if candidate.is_file():
        return Path(str(candidate))
    raise ContractViolation(f"{name}: no such config file (bundled: {', '.join(bundled_configs())})")


def read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ContractViolation(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ContractViolation(f"{path}: top level must be an object")
    return doc


def _seed_values(name: str, entry, system: VectorFieldSystem, base: Path) -> np.ndarray:
    n = system.dimension
    where = f"seeds.{name}"
    if isinstance(entry, list):
        x = np.asarray(entry, dtype=float)
    elif isinstance(entry, dict) and set(entry) == {"constant"}:
        x = np.full(n, float(entry["constant"]))
    elif isinstance(entry, dict) and set(entry) == {"file"}:
        x = load_state(base / entry["file"])
    else:
        raise ContractViolation(f"{where}: expected a list, {{'constant': c}} or {{'file': path}}")
    if x.shape != (n,):
        raise ContractViolation(f"{where}: {x.size} values, system dimension is {n}")
    if not np.all(np.isfinite(x)):
        raise ContractViolation(f"{where}: non-finite values")
    return x


def parse_run_config(doc: dict, path: Path, overrides: Optional[dict] = None) -> RunConfig:
    """Validate a configuration document; ``overrides`` patch the system spec."""
    unknown = set(doc) - {"system", "config", "symmetry", "seeds", "plan", "description"}
    if unknown:
        raise ContractViolation(f"unknown top-level field(s) {sorted(unknown)}")
    if "system" not in doc:
        raise ContractViolation("system: missing")
    sys_doc = dict(doc["system"]) if isinstance(doc["system"], dict) else doc["system"]
    if overrides:
        sys_doc.update(overrides)
    try:
        spec = SystemSpec.from_dict(sys_doc)
    except (TypeError, ValueError) as exc:
        raise ContractViolation(str(exc)) from exc
    system = make_system(spec)
    try:
        cfg = config_for(spec, doc.get("config"))
    except TypeError as exc:
        raise ContractViolation(f"config: {exc}") from exc
    sym = SymmetrySpec.from_dict(doc.get("symmetry"), SymmetrySpec.for_system(system))
    if sym.translations != "none" and system.grid is None:
        raise ContractViolation("symmetry.translations: only valid for grid systems")
    seeds_doc = doc.get("seeds", {})
    if not isinstance(seeds_doc, dict):
        raise ContractViolation("seeds: expected an object")
    seeds = {k: _seed_values(k, v, system, path.parent) for k, v in seeds_doc.items()}
    plan = doc.get("plan", [])
    if not isinstance(plan, list):
        raise ContractViolation("plan: expected an array")
    return RunConfig(path, spec, system, cfg, sym, seeds, plan, doc)


def load_run_config(name: str, overrides: Optional[dict] = None) -> RunConfig:
    path = _resolve_config_path(name)
    return parse_run_config(read_json(path), path, overrides)


def execute(rc: RunConfig, out_dir, threads: int = 1, seed_label: Optional[str] = None,
            command: str = "run") -> tuple[int, LandscapeGraph, dict]:
    """Build the landscape for ``rc`` and write all artifacts into ``out_dir``."""
    out = Path(out_dir)
    plan = rc.plan
    if seed_label is not None:
        if seed_label not in rc.seeds:
            raise ContractViolation(f"--seed-label: no seed named {seed_label!r}")
        plan = [{"op": "downward", "from": seed_label}]
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    graph = build_landscape(rc.system, rc.seeds, plan, rc.cfg, rc.sym, threads=threads)
    wall = time.perf_counter() - t0
    atomic_write(out / "landscape.json", export_graph(graph, "json"))
    atomic_write(out / "landscape.dot", export_graph(graph, "dot"))
    if rc.system.grid is not None:
        write_field_dumps(graph, out, rc.system.grid)
    diverged = diverged_searches(graph)
    code = EXIT_FAILED if diverged else EXIT_OK
    manifest = {
        "config_path": str(rc.path),
        "output_directory": str(out),
        "command": command,
        "started_at": started.isoformat(timespec="seconds"),
        "wall_time_s": round(wall, 3),
        "threads": threads,
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "nodes_by_index": {str(k): v for k, v in graph.counts_by_index().items()},
        "diverged_searches": diverged,
        "warnings": graph.warnings,
        "exit_code": code,
    }
    atomic_write(out / "manifest.json",
                 (json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n").encode())
    return code, graph, manifest


def cmd_run(args) -> int:
    rc = load_run_config(args.config)
    code, graph, manifest = execute(rc, args.out, args.threads, args.seed_label)
    counts = ", ".join(f"index {k}: {v}" for k, v in graph.counts_by_index().items())
    print(f"{len(graph.nodes)} nodes ({counts}), {len(graph.edges)} edges -> {args.out}")
    if manifest["diverged_searches"]:
        print(f"{manifest['diverged_searches']} sub-search(es) diverged", file=sys.stderr)
    return code


def _value_dirname(param: str, value: float) -> str:
    return f"{param}={value:g}"


def sweep_table(rows: list[dict]) -> str:
    """CSV summary: parameter value, root-node index, node counts per index, warnings."""
    top = max((max(r["counts"], default=0) for r in rows), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter_value", "root_index"] + [f"n_index{i}" for i in range(top + 1)] + ["warnings"])
    for r in rows:
        counts = r["counts"]
        w.writerow([f"{r['value']:g}", "" if r["root_index"] is None else r["root_index"]]
                   + [counts.get(i, 0) for i in range(top + 1)] + [r["warnings"]])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ContractViolation(f"--param: expected one of {SWEEP_PARAMS}")
    if not args.values:
        raise ContractViolation("--values: at least one value is required")
    for v in args.values:
        if args.param == "kappa" and not v > 0:
            raise ContractViolation(f"--values: kappa must be > 0, got {v:g}")
        if args.param == "gamma" and not v >= 0:
            raise ContractViolation(f"--values: gamma must be >= 0, got {v:g}")
    load_run_config(args.config)  # validate the base config before doing any work
    out = Path(args.out)
    rows, failed = [], False
    for v in args.values:
        row = {"value": v, "counts": {}, "root_index": None, "warnings": ""}
        try:
            rc = load_run_config(args.config, {args.param: v})
            code, graph, manifest = execute(rc, out / _value_dirname(args.param, v), args.threads,
                                            args.seed_label, command="sweep")
            row["counts"] = graph.counts_by_index()
            if graph.nodes:
                row["root_index"] = next(iter(graph.nodes.values())).index
            notes = [f"{w['kind']}" for w in graph.warnings]
            row["warnings"] = ";".join(f"{k}x{notes.count(k)}" for k in sorted(set(notes)))
            failed |= code != EXIT_OK
        except ContractViolation as exc:
            row["warnings"] = f"invalid: {exc}"
            failed = True
        rows.append(row)
        print(f"{args.param}={v:g}: {row['counts']} {row['warnings']}")
    atomic_write(out / "summary.csv", sweep_table(rows).encode())
    return EXIT_FAILED if failed else EXIT_OK


def _inspect_system(args) -> tuple[VectorFieldSystem, SearchConfig]:
    if args.config:
        rc = load_run_config(args.config)
        return rc.system, rc.cfg
    if args.system:
        try:
            doc = json.loads(args.system)
        except json.JSONDecodeError as exc:
            raise ContractViolation(f"--system: {exc.msg} at column {exc.colno}") from exc
        spec = SystemSpec.from_dict(doc)
        return make_system(spec), config_for(spec)
    raise ContractViolation("inspect needs --config or --system")


def cmd_inspect(args) -> int:
    system, cfg = _inspect_system(args)
    x = load_state(args.state, system.dimension)
    report = probe_index(system, x, cfg, K=max(1, args.K), check_stationary=False)
    print(f"index {report.index}, residual {report.residual:.3g}, zero-count {report.zero_count}")
    print("rayleigh values: " + " ".join(f"{v:.6g}" for v in report.rayleigh_values))
    print("eigenvalue real parts: " + " ".join(f"{v:.6g}" for v in report.eigenvalues))
    if report.residual > cfg.residual_tol:
        print(f"note: residual above {cfg.residual_tol:g}, state is not stationary")
    for note in report.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_export(args) -> int:
    src = Path(args.landscape)
    try:
        data = src.read_bytes()
    except OSError as exc:
        raise ContractViolation(f"{src}: cannot read ({exc.strerror})") from exc
    try:
        graph = import_graph(data, base_dir=src.parent)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ContractViolation(f"{src}: malformed landscape ({exc})") from exc
    payload = export_graph(graph, args.format)
    if args.out:
        atomic_write(args.out, payload)
    else:
        sys.stdout.write(payload.decode())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ghisd", description="Saddle search and solution landscapes.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="build a landscape from a config file")
    run.add_argument("--config", required=True, help="config path or bundled config name")
    run.add_argument("--out", default="ghisd-out", help="output directory")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--seed-label", help="ignore the plan; search downward from this seed")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="re-run a config over kappa or gamma values")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", type=float, nargs="*", default=[])
    sw.add_argument("--out", default="ghisd-sweep")
    sw.add_argument("--threads", type=int, default=1)
    sw.add_argument("--seed-label")
    sw.set_defaults(func=cmd_sweep)

    ins = sub.add_parser("inspect", help="residual and index of a state file")
    ins.add_argument("state", help=".bin (float64), .json or text file")
    ins.add_argument("--config", help="take the system and solver settings from a config")
    ins.add_argument("--system", help='inline system spec, e.g. \'{"kind": "toy3d"}\'')
    ins.add_argument("--K", type=int, default=2, help="initial probe count (doubled as needed)")
    ins.set_defaults(func=cmd_inspect)

    ex = sub.add_parser("export", help="re-emit a landscape.json as json or dot")
    ex.add_argument("landscape")
    ex.add_argument("--format", choices=("json", "dot"), default="dot")
    ex.add_argument("--out")
    ex.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
