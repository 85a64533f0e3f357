"""Landscape serialization (JSON, DOT) and grid-field dumps.

JSON output is byte-stable: keys are sorted, every float is rounded to nine
significant digits, and node/edge order follows discovery order.  Grid states
with more than ``INLINE_LIMIT`` entries are referenced by a relative path
instead of being inlined.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import SaddleRecord
from .errors import ContractViolation
from .frame import Frame
from .landscape import Edge, LandscapeGraph
from .systems import Grid

FORMAT_TAG = "ghisd-landscape/1"
INLINE_LIMIT = 10_000
PGM_RANGE = (-1.2, 1.2)


def _round(value: float) -> float:
    if value is None or not math.isfinite(value):
        return value
    return float(f"{value:.9g}")


def _clean(obj):
    """Recursively round floats (including numpy scalars) for stable output."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    return obj


def field_path(label: str) -> str:
    """Relative path of a node's exact field dump."""
    return f"fields/{label}.bin"


def _grid_of(graph: LandscapeGraph) -> Optional[Grid]:
    spec = graph.metadata.get("system")
    while spec and spec.get("kind") == "reversed":
        spec = spec.get("inner")
    if spec and "N" in spec:
        return Grid(int(spec["N"]), int(spec["N"]))
    return None


def _state_entry(rec: SaddleRecord, grid: Optional[Grid], inline_limit: int) -> dict:
    if grid is None:
        return {"kind": "dense", "values": rec.x}
    entry = {"kind": "grid", "rows": grid.rows, "cols": grid.cols}
    if rec.x.size > inline_limit:
        entry["file"] = field_path(rec.label)
    else:
        entry["values"] = rec.x
    return entry


def graph_document(graph: LandscapeGraph, inline_limit: int = INLINE_LIMIT) -> dict:
    """The JSON-ready description of ``graph`` (floats not yet rounded)."""
    grid = _grid_of(graph)
    partners = graph.metadata.get("sign_partners", {})
    nodes = []
    for label, rec in graph.nodes.items():
        node = {
            "label": label,
            "index": rec.index,
            "zero_count": rec.zero_count,
            "residual": rec.residual,
            "search_index": rec.search_index,
            "provenance": rec.provenance,
            "eigenvalues": np.real(rec.eigenvalues),
            "state": _state_entry(rec, grid, inline_limit),
        }
        if label in partners:
            node["sign_partner"] = partners[label]
        nodes.append(node)
    edges = [
        {"parent": e.parent, "child": e.child, "direction": e.direction, "sign": e.sign}
        for e in graph.edges.values()
    ]
    return {
        "format": FORMAT_TAG,
        "system": graph.metadata.get("system"),
        "config": graph.metadata.get("config"),
        "symmetry": graph.metadata.get("symmetry"),
        "warnings": graph.warnings,
        "nodes": nodes,
        "edges": edges,
    }


def _dot_id(label: str) -> str:
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: LandscapeGraph) -> str:
    lines = ["digraph landscape {", "    rankdir=TB;"]
    for label, rec in graph.nodes.items():
        lines.append(f"    {_dot_id(label)} [label={_dot_id(f'{label} (index {rec.index})')}];")
    for e in graph.edges.values():
        tag = f"v{e.direction}{'+' if e.sign > 0 else '-'}"
        lines.append(f"    {_dot_id(e.parent)} -> {_dot_id(e.child)} [label={_dot_id(tag)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(graph: LandscapeGraph, fmt: str = "json",
                 inline_limit: int = INLINE_LIMIT) -> bytes:
    """Serialize ``graph`` as ``json`` or ``dot``; the bytes depend only on the graph."""
    if fmt == "json":
        doc = _clean(graph_document(graph, inline_limit))
        text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=False)
        return (text + "\n").encode("utf-8")
    if fmt == "dot":
        return to_dot(graph).encode("utf-8")
    raise ContractViolation(f"unknown export format {fmt!r}")


def import_graph(data, base_dir=None) -> LandscapeGraph:
    """Rebuild a graph from :func:`export_graph` JSON output.

    Unstable bases are not serialized, so imported records carry an empty
    basis frame; re-verify a node before searching from it.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    doc = json.loads(data) if isinstance(data, str) else data
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise ContractViolation(f"not a {FORMAT_TAG} document")
    graph = LandscapeGraph()
    for key in ("system", "config", "symmetry"):
        graph.metadata[key] = doc.get(key)
    if doc.get("warnings"):
        graph.metadata["warnings"] = list(doc["warnings"])
    partners = {}
    base = Path(base_dir) if base_dir is not None else Path(".")
    for node in doc["nodes"]:
        state = node["state"]
        if "values" in state:
            x = np.asarray(state["values"], dtype=float)
        else:
            x = read_bin(base / state["file"], state["rows"] * state["cols"])
        n = x.size
        rec = SaddleRecord(
            x=x,
            index=int(node["index"]),
            basis=Frame.empty(n),
            residual=float(node["residual"]),
            zero_count=int(node["zero_count"]),
            label=node["label"],
            search_index=node.get("search_index"),
            eigenvalues=np.asarray(node.get("eigenvalues", []), dtype=float),
            provenance=node.get("provenance", ""),
        )
        graph.add_node(rec)
        if "sign_partner" in node:
            partners[node["label"]] = node["sign_partner"]
    if partners:
        graph.metadata["sign_partners"] = partners
    for e in doc["edges"]:
        graph.edges[(e["parent"], e["child"])] = Edge(e["parent"], e["child"],
                                                      int(e["direction"]), int(e["sign"]))
    return graph


def atomic_write(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pgm_bytes(values, grid: Grid, lo: float = PGM_RANGE[0], hi: float = PGM_RANGE[1]) -> bytes:
    """8-bit binary PGM of a grid field, mapping ``[lo, hi]`` linearly onto 0..255."""
    g = np.asarray(values, dtype=float).reshape(grid.shape)
    scaled = np.clip((g - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{grid.cols} {grid.rows}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def bin_bytes(values) -> bytes:
    """Row-major little-endian float64 dump."""
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def read_bin(path, expected: Optional[int] = None) -> np.ndarray:
    x = np.fromfile(path, dtype="<f8").astype(float)
    if expected is not None and x.size != expected:
        raise ContractViolation(f"{path}: {x.size} values, expected {expected}")
    return x


def write_field_dumps(graph: LandscapeGraph, out_dir, grid: Grid) -> list:
    """Write ``fields/<label>.bin`` and ``fields/<label>.pgm`` for every node."""
    out = Path(out_dir)
    written = []
    for label, rec in graph.nodes.items():
        rel = field_path(label)
        atomic_write(out / rel, bin_bytes(rec.x))
        atomic_write(out / rel.replace(".bin", ".pgm"), pgm_bytes(rec.x, grid))
        written.append(rel)
    return written


def load_state(path, dimension: Optional[int] = None) -> np.ndarray:
    """Read a state from ``.bin`` (float64), ``.json`` (list or ``{"values": ...}``)
    or whitespace/comma separated text."""
    path = Path(path)
    if path.suffix == ".bin":
        x = read_bin(path)
    elif path.suffix == ".json":
        doc = json.loads(path.read_text())
        x = np.asarray(doc["values"] if isinstance(doc, dict) else doc, dtype=float).ravel()
    else:
        text = path.read_text().replace(",", " ")
        x = np.array(text.split(), dtype=float)
    if dimension is not None and x.size != dimension:
        raise ContractViolation(f"state file {path} has {x.size} values, system dimension is {dimension}")
    return x
