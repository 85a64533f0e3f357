"""Autonomous vector fields ``x' = F(x)`` and the benchmark systems.

States are flat float arrays of length ``n``.  Field-valued (grid) systems
carry a :class:`Grid` and store ``phi[row, col]`` row-major, with rows along
``y`` and columns along ``x`` on the periodic unit square.  Every field
evaluator also accepts a stack of states with shape ``(..., n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, UnsupportedOperation

TRANSLATE_XY = "periodic-translation-xy"
TRANSLATE_X = "periodic-translation-x"
SIGN_FLIP = "sign-flip"

KINDS = ("quartic2d", "toy3d", "allen-cahn", "sheared-phase-field", "reversed")
PHASE_FIELD_KINDS = ("allen-cahn", "sheared-phase-field")

# linear part of the 3D example, applied as x' = -TOY3D_MATRIX @ x + ...
TOY3D_MATRIX = np.array(
    [[0.6, 0.1, 0.0],
     [-0.1, 0.6, -0.05],
     [0.0, -0.1, 0.6]]
)


@dataclass(frozen=True)
class Grid:
    """Periodic ``rows x cols`` mesh on the unit square, spacing ``h = 1/rows``."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ContractViolation(f"grid must be non-empty, got {self.rows}x{self.cols}")

    @property
    def h(self) -> float:
        return 1.0 / self.rows

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def y(self) -> np.ndarray:
        return np.arange(self.rows) * self.h

    def x(self) -> np.ndarray:
        return np.arange(self.cols) * self.h


@dataclass(frozen=True)
class SystemSpec:
    """Declarative description of a benchmark system.

    ``kappa`` and ``N`` only matter for the phase-field kinds, ``gamma`` only
    for ``sheared-phase-field``; ``inner`` is required for ``reversed``.
    """

    kind: str
    kappa: Optional[float] = None
    gamma: float = 0.0
    N: int = 64
    inner: Optional["SystemSpec"] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"system.kind: unknown kind {self.kind!r}")
        if self.kind == "reversed":
            if self.inner is None:
                raise ContractViolation("system.inner: reversed system needs an inner spec")
            return
        if self.kind in PHASE_FIELD_KINDS:
            if self.kappa is None or not (self.kappa > 0) or not math.isfinite(self.kappa):
                raise ContractViolation(f"system.kappa: must be > 0, got {self.kappa!r}")
            if not isinstance(self.N, int) or self.N < 8:
                raise ContractViolation(f"system.N: must be an integer >= 8, got {self.N!r}")
            if self.N & (self.N - 1):
                raise ContractViolation(f"system.N: must be a power of two, got {self.N}")
        if not (self.gamma >= 0) or not math.isfinite(self.gamma):
            raise ContractViolation(f"system.gamma: must be >= 0, got {self.gamma!r}")
        if self.gamma and self.kind != "sheared-phase-field":
            raise ContractViolation("system.gamma: only used by sheared-phase-field")

    def to_dict(self) -> dict:
        if self.kind == "reversed":
            return {"kind": "reversed", "inner": self.inner.to_dict()}
        out = {"kind": self.kind}
        if self.kind in PHASE_FIELD_KINDS:
            out.update(kappa=self.kappa, N=self.N)
        if self.kind == "sheared-phase-field":
            out["gamma"] = self.gamma
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        if not isinstance(d, dict) or "kind" not in d:
            raise ContractViolation("system: expected an object with a 'kind' field")
        unknown = set(d) - {"kind", "kappa", "gamma", "N", "inner"}
        if unknown:
            raise ContractViolation(f"system: unknown field(s) {sorted(unknown)}")
        inner = d.get("inner")
        return cls(
            kind=d["kind"],
            kappa=None if d.get("kappa") is None else float(d["kappa"]),
            gamma=float(d.get("gamma", 0.0)),
            N=d.get("N", 64),
            inner=None if inner is None else cls.from_dict(inner),
        )


@dataclass(frozen=True, eq=False)
class VectorFieldSystem:
    """An autonomous vector field with its inner-product weight.

    ``weight`` scales the Euclidean product, ``<u, v> = weight * sum(u * v)``;
    it is 1 for finite-dimensional systems and ``h**2`` on grids.
    """

    dimension: int
    rule: Callable[[np.ndarray], np.ndarray]
    weight: float = 1.0
    energy_rule: Optional[Callable[[np.ndarray], float]] = None
    symmetry: frozenset = field(default_factory=frozenset)
    grid: Optional[Grid] = None
    spec: Optional[SystemSpec] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ContractViolation("dimension must be positive")
        if self.grid is not None and self.grid.size != self.dimension:
            raise ContractViolation("grid size does not match dimension")

    def field(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dimension,):
            raise ContractViolation(
                f"state has trailing dimension {x.shape[-1:]}, system expects {self.dimension}"
            )
        return self.rule(x)

    @property
    def is_gradient(self) -> bool:
        return self.energy_rule is not None

    def inner(self, u, v) -> float:
        return self.weight * float(np.dot(u, v))

    def norm(self, u) -> float:
        u = np.ravel(u)
        return math.sqrt(self.weight * float(u @ u))


def eval_field(system: VectorFieldSystem, x) -> np.ndarray:
    """Return ``F(x)`` for a single state; ``x`` is not modified."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.dimension,):
        raise ContractViolation(f"state shape {x.shape} != ({system.dimension},)")
    return system.field(x)


def eval_energy(system: VectorFieldSystem, x) -> float:
    if system.energy_rule is None:
        raise UnsupportedOperation("system has no energy (not a gradient system)")
    x = np.asarray(x, dtype=float)
    if x.shape != (system.dimension,):
        raise ContractViolation(f"state shape {x.shape} != ({system.dimension},)")
    return float(system.energy_rule(x))


def _as_grid(u: np.ndarray, grid: Grid) -> np.ndarray:
    return u.reshape(u.shape[:-1] + grid.shape)


def laplacian_periodic(u, grid: Optional[Grid]) -> np.ndarray:
    """Five-point periodic Laplacian, scaled by ``1/h**2``.

    ``u`` has shape ``(..., rows*cols)``; the result has the same shape.
    """
    if grid is None:
        raise ContractViolation("laplacian_periodic needs grid metadata")
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.size:
        raise ContractViolation(f"field length {u.shape[-1]} != grid size {grid.size}")
    g = _as_grid(u, grid)
    lap = (
        np.roll(g, 1, axis=-1) + np.roll(g, -1, axis=-1)
        + np.roll(g, 1, axis=-2) + np.roll(g, -1, axis=-2)
        - 4.0 * g
    )
    lap *= 1.0 / grid.h**2
    return lap.reshape(u.shape)


def ddx_periodic(u, grid: Grid) -> np.ndarray:
    """Central difference along ``x`` (columns)."""
    g = _as_grid(np.asarray(u, dtype=float), grid)
    d = (np.roll(g, -1, axis=-1) - np.roll(g, 1, axis=-1)) / (2.0 * grid.h)
    return d.reshape(np.shape(u))


def shift_field(u, grid: Grid, dy: int = 0, dx: int = 0) -> np.ndarray:
    """Cyclic shift of a grid state by ``dy`` rows and ``dx`` columns."""
    g = _as_grid(np.asarray(u, dtype=float), grid)
    return np.roll(g, (dy, dx), axis=(-2, -1)).reshape(np.shape(u))


def _quartic_field(x):
    return -4.0 * x * (x * x - 1.0)


def _quartic_energy(x):
    return float(np.sum((x * x - 1.0) ** 2))


def _toy3d_field(x):
    return -x @ TOY3D_MATRIX.T + 5.0 / (1.0 + (x - 5.0) ** 2)


def _allen_cahn_rule(kappa, grid):
    def rule(phi):
        # phi * phi * phi: numpy's float power is two orders of magnitude slower
        out = laplacian_periodic(phi, grid)
        out *= kappa
        out += phi
        out -= phi * phi * phi
        return out
    return rule


def _sheared_rule(kappa, gamma, grid):
    base = _allen_cahn_rule(kappa, grid)
    if gamma == 0.0:
        return base
    # sin(2 pi y) as a column so it broadcasts across x
    profile = (gamma * np.sin(2.0 * np.pi * grid.y()))[:, None]

    def rule(phi):
        adv = _as_grid(ddx_periodic(phi, grid), grid) * profile
        return base(phi) + adv.reshape(phi.shape)
    return rule


def _ginzburg_landau_energy(kappa, grid):
    # forward differences: the only stencil whose exact discrete gradient is
    # the five-point Laplacian used by the dynamics
    h = grid.h

    def energy(phi):
        g = phi.reshape(grid.shape)
        gx = (np.roll(g, -1, axis=1) - g) / h
        gy = (np.roll(g, -1, axis=0) - g) / h
        density = 0.5 * kappa * (gx**2 + gy**2) + 0.25 * (1.0 - g**2) ** 2
        return h * h * float(density.sum())
    return energy


def make_system(spec: SystemSpec) -> VectorFieldSystem:
    if spec.kind == "quartic2d":
        return VectorFieldSystem(2, _quartic_field, energy_rule=_quartic_energy, spec=spec)
    if spec.kind == "toy3d":
        return VectorFieldSystem(3, _toy3d_field, spec=spec)
    if spec.kind == "reversed":
        inner = make_system(spec.inner)
        fwd, e = inner.rule, inner.energy_rule
        return VectorFieldSystem(
            inner.dimension,
            lambda x: -fwd(x),
            weight=inner.weight,
            energy_rule=None if e is None else (lambda x: -e(x)),
            symmetry=inner.symmetry,
            grid=inner.grid,
            spec=spec,
        )
    grid = Grid(spec.N, spec.N)
    if spec.kind == "allen-cahn":
        return VectorFieldSystem(
            grid.size,
            _allen_cahn_rule(spec.kappa, grid),
            weight=grid.h**2,
            energy_rule=_ginzburg_landau_energy(spec.kappa, grid),
            symmetry=frozenset({TRANSLATE_XY, SIGN_FLIP}),
            grid=grid,
            spec=spec,
        )
    return VectorFieldSystem(
        grid.size,
        _sheared_rule(spec.kappa, spec.gamma, grid),
        weight=grid.h**2,
        symmetry=frozenset({TRANSLATE_X, SIGN_FLIP}),
        grid=grid,
        spec=spec,
    )
