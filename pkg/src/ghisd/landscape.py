"""Solution-landscape construction: downward and upward search, symmetry-aware
deduplication, and the landscape graph.
"""
from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.optimize

from .config import SearchConfig
from .dynamics import (
    CONVERGED,
    DIVERGED,
    SaddleRecord,
    ghisd_run,
    refine_saddle,
    verify_point,
)
from .errors import ContractViolation
from .frame import Frame, ordered_directions, unstable_basis
from .systems import SIGN_FLIP, TRANSLATE_X, TRANSLATE_XY, Grid, VectorFieldSystem

logger = logging.getLogger(__name__)

TRANSLATIONS = ("none", "x-only", "x-and-y")


@dataclass(frozen=True)
class SymmetrySpec:
    """Which cyclic grid shifts are quotiented out when comparing states.

    ``sign_flip`` only groups ``phi`` / ``-phi`` pairs for reporting; the two
    are never merged.
    """

    translations: str = "none"
    sign_flip: bool = False

    def __post_init__(self):
        if self.translations not in TRANSLATIONS:
            raise ContractViolation(
                f"symmetry.translations: expected one of {TRANSLATIONS}, got {self.translations!r}"
            )

    @classmethod
    def for_system(cls, system: VectorFieldSystem) -> "SymmetrySpec":
        if TRANSLATE_XY in system.symmetry:
            t = "x-and-y"
        elif TRANSLATE_X in system.symmetry:
            t = "x-only"
        else:
            t = "none"
        return cls(t, SIGN_FLIP in system.symmetry)

    def to_dict(self) -> dict:
        return {"translations": self.translations, "sign_flip": self.sign_flip}

    @classmethod
    def from_dict(cls, d: Optional[dict], default: "SymmetrySpec") -> "SymmetrySpec":
        if d is None:
            return default
        if not isinstance(d, dict) or set(d) - {"translations", "sign_flip"}:
            raise ContractViolation("symmetry: expected {translations, sign_flip}")
        return cls(d.get("translations", default.translations),
                   bool(d.get("sign_flip", default.sign_flip)))


def _shift_correlations(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    # c[dy, dx] = sum(a * roll(b, (dy, dx)))
    fa = np.fft.rfft2(a.reshape(grid.shape))
    fb = np.fft.rfft2(b.reshape(grid.shape))
    return np.fft.irfft2(fa * np.conj(fb), s=grid.shape)


def _shifts(sym: SymmetrySpec, grid: Grid):
    if sym.translations == "x-only":
        return [(0, dx) for dx in range(grid.cols)]
    return [(dy, dx) for dy in range(grid.rows) for dx in range(grid.cols)]


def fourier_shift(u, grid: Grid, dy: float, dx: float) -> np.ndarray:
    """Translate a grid state by a possibly fractional number of cells.

    Uses the trigonometric interpolant; integer shifts reproduce ``np.roll``
    up to round-off.
    """
    g = np.asarray(u, dtype=float).reshape(grid.shape)
    ky = np.fft.fftfreq(grid.rows)[:, None]
    kx = np.fft.rfftfreq(grid.cols)[None, :]
    phase = np.exp(-2j * np.pi * (ky * dy + kx * dx))
    return np.fft.irfft2(np.fft.rfft2(g) * phase, s=grid.shape).reshape(np.shape(u))


def _refine_shift(a, b, grid: Grid, start, x_only: bool):
    """Continuous shift near ``start`` maximizing the interpolated correlation."""
    fa = np.fft.fft2(a.reshape(grid.shape))
    fb = np.fft.fft2(b.reshape(grid.shape))
    cross = fa * np.conj(fb) / grid.size
    ky = 2 * np.pi * np.fft.fftfreq(grid.rows)[:, None]
    kx = 2 * np.pi * np.fft.fftfreq(grid.cols)[None, :]

    def neg_corr(s):
        sy, sx = (0.0, s[0]) if x_only else (s[0], s[1])
        e = cross * np.exp(1j * (ky * sy + kx * sx))
        val = -float(e.real.sum())
        gy = float((e * 1j * ky).real.sum())
        gx = float((e * 1j * kx).real.sum())
        return val, (np.array([-gx]) if x_only else np.array([-gy, -gx]))

    x0 = np.array([start[1]] if x_only else list(start), dtype=float)
    bounds = [(v - 1.0, v + 1.0) for v in x0]
    res = scipy.optimize.minimize(neg_corr, x0, jac=True, method="L-BFGS-B", bounds=bounds)
    s = res.x
    return (0.0, float(s[0])) if x_only else (float(s[0]), float(s[1]))


def shift_distance(a, b, sym: SymmetrySpec, weight: float = 1.0,
                   grid: Optional[Grid] = None, tol: Optional[float] = None):
    """Smallest weighted distance between ``a`` and an allowed translate of ``b``.

    Returns ``(distance, (dy, dx))``.  The cyclic shift maximizing the FFT
    cross-correlation is checked directly; when that fails to land within
    ``tol`` but the correlation estimate is within ``10 * tol``, every cyclic
    shift is scanned.  If ``tol`` is still not met, the best shift is refined
    to a fractional one (Fourier translation), since states on a continuous
    translation orbit need not sit a whole number of cells apart.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape} vs {b.shape}")
    sw = np.sqrt(weight)
    if sym.translations == "none":
        return sw * float(np.linalg.norm(a - b)), (0, 0)
    if grid is None:
        raise ContractViolation("translation symmetry needs a grid system")
    corr = _shift_correlations(a, b, grid)
    x_only = sym.translations == "x-only"
    if x_only:
        corr = corr[:1]
    dy, dx = np.unravel_index(int(np.argmax(corr)), corr.shape)
    aa, bb = float(a @ a), float(b @ b)
    estimate = sw * np.sqrt(max(aa + bb - 2.0 * corr[dy, dx], 0.0))
    g_a, g_b = a.reshape(grid.shape), b.reshape(grid.shape)
    best = sw * float(np.linalg.norm(g_a - np.roll(g_b, (dy, dx), axis=(0, 1))))
    best_shift = (int(dy), int(dx))
    if tol is not None and best > tol and estimate < 10.0 * tol:
        for s in _shifts(sym, grid):
            d = sw * float(np.linalg.norm(g_a - np.roll(g_b, s, axis=(0, 1))))
            if d < best:
                best, best_shift = d, s
    # translations preserve the norm, and only near-misses are worth refining
    norm_gap = sw * abs(np.sqrt(aa) - np.sqrt(bb))
    near = best <= 0.5 * sw * np.sqrt(max(aa, bb))
    if tol is not None and best > tol and norm_gap <= tol and near:
        s = _refine_shift(a, b, grid, best_shift, x_only)
        d = sw * float(np.linalg.norm(a - fourier_shift(b, grid, *s)))
        if d < best:
            best, best_shift = d, s
    return best, best_shift


def is_equivalent(a, b, sym: SymmetrySpec, tol: float, weight: float = 1.0,
                  grid: Optional[Grid] = None) -> bool:
    """True when ``a`` lies within ``tol`` of some allowed cyclic shift of ``b``."""
    d, _ = shift_distance(a, b, sym, weight, grid, tol)
    return d <= tol


@dataclass(frozen=True)
class Edge:
    parent: str
    child: str
    direction: int
    sign: int


@dataclass
class LandscapeGraph:
    """Deduplicated stationary points plus the directed search relations.

    Node states are class representatives: every later candidate is compared
    against the stored state of each node, never against other candidates.
    """

    nodes: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    _serial: int = 0

    def new_label(self) -> str:
        while True:
            label = f"n{self._serial}"
            self._serial += 1
            if label not in self.nodes:
                return label

    def locate(self, x, system: VectorFieldSystem, sym: SymmetrySpec, tol: float) -> Optional[str]:
        for label, rec in self.nodes.items():
            if is_equivalent(x, rec.x, sym, tol, system.weight, system.grid):
                return label
        return None

    def add_node(self, rec: SaddleRecord) -> str:
        if not rec.label:
            rec.label = self.new_label()
        if rec.label in self.nodes:
            raise ContractViolation(f"duplicate node label {rec.label!r}")
        self.nodes[rec.label] = rec
        return rec.label

    def add_edge(self, parent: str, child: str, direction: int, sign: int) -> bool:
        """Record a relation; repeated ``(parent, child)`` pairs keep the first tags."""
        if parent not in self.nodes or child not in self.nodes:
            raise ContractViolation(f"edge endpoint missing: {parent} -> {child}")
        key = (parent, child)
        if key in self.edges:
            return False
        self.edges[key] = Edge(parent, child, direction, sign)
        return True

    def warn(self, kind: str, **details):
        self.metadata.setdefault("warnings", []).append({"kind": kind, **details})

    @property
    def warnings(self) -> list:
        return self.metadata.get("warnings", [])

    def counts_by_index(self) -> dict:
        counts: dict = {}
        for rec in self.nodes.values():
            counts[rec.index] = counts.get(rec.index, 0) + 1
        return dict(sorted(counts.items()))

    def by_index(self, index: int) -> list:
        return [rec for rec in self.nodes.values() if rec.index == index]

    def children(self, label: str) -> list:
        return [c for (p, c) in self.edges if p == label]

    def parents(self, label: str) -> list:
        return [p for (p, c) in self.edges if c == label]

    def sign_partners(self, system: VectorFieldSystem, sym: SymmetrySpec, tol: float) -> dict:
        """Map each node to the node equivalent to its negation, when one exists."""
        partners = {}
        for label, rec in self.nodes.items():
            match = self.locate(-rec.x, system, sym, tol)
            partners[label] = match
        return partners


def _run_many(fn, tasks: Sequence, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _insert(graph: LandscapeGraph, outcome, system, sym, cfg, provenance: str):
    """Deduplicate a converged outcome; new points are index-verified and added.

    Returns ``(label, record or None)``; the record is only returned for new nodes.
    """
    match = graph.locate(outcome.x, system, sym, cfg.x_tol)
    if match is not None:
        return match, None
    rec = refine_saddle(system, outcome, cfg, provenance=provenance)
    label = graph.add_node(rec)
    if rec.index_mismatch:
        graph.warn("index-mismatch", node=label, searched=rec.search_index, measured=rec.index)
    return label, rec


def _ensure_node(graph: LandscapeGraph, rec: SaddleRecord, system, sym, cfg) -> str:
    match = graph.locate(rec.x, system, sym, cfg.x_tol)
    if match is not None:
        return match
    return graph.add_node(rec)


def _downward_directions(m: int, i: int, rule: str) -> list[int]:
    """0-based initial-direction indices for an m-GHiSD launched along direction ``i``."""
    if rule == "typical":
        return list(range(m))
    skip = min(i, m)
    return [j for j in range(m + 1) if j != skip]


def downward_search(system: VectorFieldSystem, parent: SaddleRecord, cfg: SearchConfig,
                    sym: SymmetrySpec, graph: Optional[LandscapeGraph] = None,
                    threads: int = 1) -> LandscapeGraph:
    """Queue-driven descent from a verified saddle.

    Each popped entry ``(x, m, V)`` re-queues itself with ``m - 1`` and launches
    m-GHiSD from ``x +/- eps v_i`` for every direction ``v_i`` of ``V``.
    Converged points are index-verified, deduplicated, and queued with their
    own unstable basis; a relation is kept for every convergence to a
    strictly lower-index node.
    """
    graph = graph if graph is not None else LandscapeGraph()
    root = _ensure_node(graph, parent, system, sym, cfg)
    root_rec = graph.nodes[root]
    queue = deque()
    if root_rec.index >= 1:
        queue.append((root, root_rec.x, root_rec.index - 1, root_rec.basis))
    eps = cfg.eps_perturb
    while queue:
        label, x, m, basis = queue.popleft()
        if m >= 1:
            queue.append((label, x, m - 1, basis))
        parent_index = graph.nodes[label].index
        tasks = []
        for i in range(basis.k):
            dirs = [j for j in _downward_directions(m, i, cfg.downward_directions) if j < basis.k]
            frame0 = basis.select(dirs)
            for sign in (1, -1):
                tasks.append((i, sign, x + sign * eps * basis.vectors[i], frame0))
        results = _run_many(lambda t: ghisd_run(system, t[2], t[3], cfg), tasks, threads)
        for (i, sign, _, frame0), outcome in zip(tasks, results):
            if not outcome.converged:
                graph.warn("search-failed", origin=label, m=frame0.k, direction=i + 1,
                           sign=sign, status=outcome.status, iterations=outcome.iterations)
                continue
            child, rec = _insert(graph, outcome, system, sym, cfg, "downward")
            if rec is not None and rec.index >= 1:
                queue.append((child, rec.x, rec.index - 1, rec.basis))
            if child == label:
                continue
            if graph.nodes[child].index < parent_index:
                graph.add_edge(label, child, i + 1, sign)
            else:
                graph.warn("non-descending-relation", parent=label, child=child,
                           parent_index=parent_index, child_index=graph.nodes[child].index)
    return graph


def upward_search(system: VectorFieldSystem, start: SaddleRecord, K: int, cfg: SearchConfig,
                  sym: SymmetrySpec, graph: Optional[LandscapeGraph] = None,
                  threads: int = 1) -> LandscapeGraph:
    """Stack-driven ascent from a verified point up to index ``K``.

    Discovered points are added as nodes with provenance ``upward``; no
    relations are recorded.
    """
    graph = graph if graph is not None else LandscapeGraph()
    root = _ensure_node(graph, start, system, sym, cfg)
    root_rec = graph.nodes[root]
    K = min(K, system.dimension)
    stack = []
    if root_rec.index + 1 <= K:
        dirs = ordered_directions(system, root_rec.x, K, cfg, init=root_rec.basis if root_rec.index else None)
        stack.append((root_rec.x, root_rec.index + 1, dirs))
    eps = cfg.eps_perturb
    while stack:
        x, m, dirs = stack.pop()
        if m < K:
            stack.append((x, m + 1, dirs))
        frame0 = dirs.select(range(m))
        v = dirs.vectors[m - 1]
        tasks = [(sign, x + sign * eps * v) for sign in (1, -1)]
        results = _run_many(lambda t: ghisd_run(system, t[1], frame0, cfg), tasks, threads)
        for (sign, _), outcome in zip(tasks, results):
            if not outcome.converged:
                graph.warn("search-failed", m=m, direction=m, sign=sign,
                           status=outcome.status, iterations=outcome.iterations)
                continue
            _, rec = _insert(graph, outcome, system, sym, cfg, "upward")
            if rec is not None and m < K:
                fresh = ordered_directions(system, rec.x, K, cfg, init=rec.basis if rec.index else None)
                stack.append((rec.x, m + 1, fresh))
    return graph


def _seed_state(seeds: Mapping, label: str) -> np.ndarray:
    if label not in seeds:
        raise ContractViolation(f"unknown seed label {label!r}")
    return np.asarray(seeds[label], dtype=float)


def _find(system, x0, k: int, cfg) -> tuple:
    n = system.dimension
    if k == n:
        frame0 = Frame(np.eye(n) / np.sqrt(system.weight), system.weight)
    elif k == 0:
        frame0 = Frame.empty(n, system.weight)
    else:
        frame0 = unstable_basis(system, x0, k, cfg)
    outcome = ghisd_run(system, x0, frame0, cfg)
    return outcome


def build_landscape(system: VectorFieldSystem, seeds: Mapping[str, Iterable[float]],
                    plan: Sequence[Mapping], cfg: SearchConfig, sym: SymmetrySpec,
                    threads: int = 1) -> LandscapeGraph:
    """Execute a plan of search directives into one globally deduplicated graph.

    Directives (dicts keyed by ``op``):

    * ``{"op": "seed", "seed": s}``: verify seed ``s`` as a stationary point;
    * ``{"op": "find", "seed": s, "k": k, "label": name}``: run k-GHiSD from
      seed ``s`` (``k`` defaults to the dimension, i.e. the reversed flow);
    * ``{"op": "downward", "from": label}``;
    * ``{"op": "upward", "from": label, "K": K}``.

    ``from`` may name a node or a seed; an unvisited seed is verified first.
    """
    graph = LandscapeGraph()
    graph.metadata["system"] = None if system.spec is None else system.spec.to_dict()
    graph.metadata["config"] = cfg.to_dict()
    graph.metadata["symmetry"] = sym.to_dict()
    n = system.dimension

    def add_seed(name: str, provenance: str = "seed") -> str:
        x = _seed_state(seeds, name)
        if x.shape != (n,):
            raise ContractViolation(f"seed {name!r} has shape {x.shape}, expected ({n},)")
        rec = verify_point(system, x, cfg, label=name, provenance=provenance)
        return _ensure_node(graph, rec, system, sym, cfg)

    aliases: dict = {}

    def resolve(name: str) -> str:
        if name in aliases:
            return aliases[name]
        if name in graph.nodes:
            return name
        if name in seeds:
            aliases[name] = add_seed(name)
            return aliases[name]
        raise ContractViolation(f"plan references unknown label {name!r}")

    for step, d in enumerate(plan):
        if not isinstance(d, Mapping) or "op" not in d:
            raise ContractViolation(f"plan[{step}]: expected an object with an 'op' field")
        op = d["op"]
        if op == "seed":
            aliases[d["seed"]] = add_seed(d["seed"])
        elif op == "find":
            name = d["seed"]
            k = int(d.get("k", n))
            if not 0 <= k <= n:
                raise ContractViolation(f"plan[{step}].k: must be in [0, {n}]")
            outcome = _find(system, _seed_state(seeds, name), k, cfg)
            if outcome.status != CONVERGED:
                graph.warn("search-failed", origin=name, m=k, status=outcome.status,
                           iterations=outcome.iterations)
                continue
            rec = refine_saddle(system, outcome, cfg, label=d.get("label", name), provenance="find")
            aliases[d.get("label", name)] = _ensure_node(graph, rec, system, sym, cfg)
        elif op == "downward":
            parent = graph.nodes[resolve(d["from"])]
            downward_search(system, parent, cfg, sym, graph, threads)
        elif op == "upward":
            if "K" not in d:
                raise ContractViolation(f"plan[{step}]: upward needs 'K'")
            start = graph.nodes[resolve(d["from"])]
            upward_search(system, start, int(d["K"]), cfg, sym, graph, threads)
        else:
            raise ContractViolation(f"plan[{step}].op: unknown directive {op!r}")
    if sym.sign_flip:
        graph.metadata["sign_partners"] = graph.sign_partners(system, sym, cfg.x_tol)
    return graph


def diverged_searches(graph: LandscapeGraph) -> int:
    return sum(1 for w in graph.warnings
               if w.get("kind") == "search-failed" and w.get("status") == DIVERGED)
