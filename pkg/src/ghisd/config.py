"""Solver and search hyperparameters."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .errors import ContractViolation
from .systems import PHASE_FIELD_KINDS, SystemSpec, VectorFieldSystem

DIRECTION_RULES = ("literal", "typical")
EIGEN_SOLVERS = ("power", "krylov")


@dataclass(frozen=True)
class SearchConfig:
    """Step sizes, tolerances and caps shared by every search routine.

    Norms and tolerances are measured in the system's weighted norm.
    ``dimer_l=None`` selects the position-dependent half-length
    ``1e-4 * max(1, ||x||)``.
    """

    alpha: float = 1e-2
    beta: float = 1e-2
    dimer_l: Optional[float] = None
    eps_perturb: float = 1e-2
    residual_tol: float = 1e-6
    x_tol: float = 1e-4
    zero_tol: float = 1e-4
    subspace_tol: float = 1e-8
    max_iters: int = 20_000
    max_eigen_iters: int = 20_000
    divergence_bound: float = 1e3
    # directions updated at the new position x^(m+1); False uses x^(m)
    dimer_at_new_position: bool = True
    # downward initial directions: every v_j but one ("literal") or v_1..v_m ("typical")
    downward_directions: str = "literal"
    # unstable-subspace probe: power iteration on I + beta J, or ARPACK on the
    # same dimer products (much faster on stiff grid spectra)
    eigen_solver: str = "power"
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "eps_perturb", "residual_tol", "x_tol",
                     "zero_tol", "subspace_tol", "divergence_bound"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ContractViolation(f"config.{name}: must be a positive number, got {value!r}")
        if self.dimer_l is not None and not self.dimer_l > 0:
            raise ContractViolation(f"config.dimer_l: must be positive, got {self.dimer_l!r}")
        for name in ("max_iters", "max_eigen_iters"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ContractViolation(f"config.{name}: must be a positive integer, got {value!r}")
        if self.residual_tol >= self.divergence_bound:
            raise ContractViolation("config.residual_tol: must be below divergence_bound")
        if self.downward_directions not in DIRECTION_RULES:
            raise ContractViolation(
                f"config.downward_directions: expected one of {DIRECTION_RULES}, "
                f"got {self.downward_directions!r}"
            )

        if self.eigen_solver not in EIGEN_SOLVERS:
            raise ContractViolation(
                f"config.eigen_solver: expected one of {EIGEN_SOLVERS}, got {self.eigen_solver!r}"
            )
        if not isinstance(self.seed, int):
            raise ContractViolation(f"config.seed: must be an integer, got {self.seed!r}")

    def dimer_length(self, x_norm: float) -> float:
        if self.dimer_l is not None:
            return self.dimer_l
        return 1e-4 * max(1.0, x_norm)

    def replace(self, **changes) -> "SearchConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def defaults_for(cls, system) -> "SearchConfig":
        """Defaults for a system (or spec): toy settings, or a stable explicit step on grids."""
        spec = system.spec if isinstance(system, VectorFieldSystem) else system
        while spec is not None and spec.kind == "reversed":
            spec = spec.inner
        if spec is None or spec.kind not in PHASE_FIELD_KINDS:
            return cls()
        h = 1.0 / spec.N
        step = 0.4 * h * h / (4.0 * spec.kappa)
        return cls(
            alpha=step,
            beta=step,
            eps_perturb=0.1,
            x_tol=1e-3,
            max_iters=100_000,
            max_eigen_iters=50_000,
            eigen_solver="krylov",
        )

    @classmethod
    def from_dict(cls, d: Optional[dict], base: Optional["SearchConfig"] = None) -> "SearchConfig":
        base = base or cls()
        d = d or {}
        if not isinstance(d, dict):
            raise ContractViolation("config: expected an object")
        names = set(cls.field_names())
        unknown = sorted(set(d) - names)
        if unknown:
            raise ContractViolation(f"config: unknown field(s) {unknown}")
        return dataclasses.replace(base, **d)


def config_for(spec: SystemSpec, overrides: Optional[dict] = None) -> SearchConfig:
    return SearchConfig.from_dict(overrides, SearchConfig.defaults_for(spec))
