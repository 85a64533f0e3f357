"""The k-GHiSD integrator: reflected explicit-Euler position updates coupled
with dimer-driven direction updates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SearchConfig
from .errors import DegenerateFrameError, PreconditionError
from .frame import Frame, IndexReport, dimer_derivative, orthonormalize, probe_index
from .systems import VectorFieldSystem

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max-iters"
DIVERGED = "diverged"
DEGENERATE = "degenerate-frame"


@dataclass(frozen=True, eq=False)
class GhisdOutcome:
    status: str
    x: np.ndarray
    frame: Frame
    residual: float
    iterations: int

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


@dataclass(eq=False)
class SaddleRecord:
    """A verified stationary point.

    ``index`` is the measured index; ``search_index`` is the ``k`` of the
    GHiSD run that produced the point (``None`` for seeds), so a mismatch
    between the two stays visible.
    """

    x: np.ndarray
    index: int
    basis: Frame
    residual: float
    zero_count: int
    label: str = ""
    search_index: Optional[int] = None
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    provenance: str = ""

    @property
    def index_mismatch(self) -> bool:
        return self.search_index is not None and self.search_index != self.index


def ghisd_step(system: VectorFieldSystem, x, frame: Frame, cfg: SearchConfig,
               fx: Optional[np.ndarray] = None):
    """One explicit step of k-GHiSD; returns ``(x_new, frame_new)``.

    ``fx`` may carry a precomputed ``F(x)``.
    """
    x = np.asarray(x, dtype=float)
    if fx is None:
        fx = system.field(x)
    x_new = x + cfg.alpha * frame.reflect(fx)
    if frame.k == 0:
        return x_new, frame
    centre = x_new if cfg.dimer_at_new_position else x
    jv = dimer_derivative(system, centre, frame.vectors, cfg.dimer_length(system.norm(centre)))
    return x_new, orthonormalize(frame.vectors + cfg.beta * jv, frame.weight)


def ghisd_run(system: VectorFieldSystem, x0, frame0: Frame, cfg: SearchConfig) -> GhisdOutcome:
    """Iterate :func:`ghisd_step` until convergence, divergence or the iteration cap."""
    x = np.array(x0, dtype=float)
    frame = frame0
    residual = math.inf
    for it in range(cfg.max_iters + 1):
        fx = system.field(x)
        residual = system.norm(fx)
        x_norm = system.norm(x)
        if not (math.isfinite(residual) and math.isfinite(x_norm)):
            return GhisdOutcome(DIVERGED, x, frame, residual, it)
        if residual <= cfg.residual_tol:
            return GhisdOutcome(CONVERGED, x, frame, residual, it)
        if x_norm > cfg.divergence_bound:
            return GhisdOutcome(DIVERGED, x, frame, residual, it)
        if it == cfg.max_iters:
            break
        try:
            x, frame = ghisd_step(system, x, frame, cfg, fx)
        except DegenerateFrameError as exc:
            logger.debug("GHiSD frame degenerated at iteration %d: %s", it, exc)
            return GhisdOutcome(DEGENERATE, x, frame, residual, it)
    return GhisdOutcome(MAX_ITERS, x, frame, residual, cfg.max_iters)


def record_from_report(x, report: IndexReport, label: str = "",
                       search_index: Optional[int] = None, provenance: str = "") -> SaddleRecord:
    return SaddleRecord(
        x=np.array(x, dtype=float),
        index=report.index,
        basis=report.basis,
        residual=report.residual,
        zero_count=report.zero_count,
        label=label,
        search_index=search_index,
        eigenvalues=report.eigenvalues,
        provenance=provenance,
    )


def verify_point(system: VectorFieldSystem, x, cfg: SearchConfig, label: str = "",
                 k_hint: int = 0, init=None, provenance: str = "seed") -> SaddleRecord:
    """Measure the index of a stationary point and package it as a record."""
    report = probe_index(system, x, cfg, K=k_hint + 2, init=init)
    if report.notes:
        logger.info("%s: %s", label or "point", ", ".join(report.notes))
    return record_from_report(x, report, label, None, provenance)


def refine_saddle(system: VectorFieldSystem, outcome: GhisdOutcome, cfg: SearchConfig,
                  K: Optional[int] = None, label: str = "", provenance: str = "") -> SaddleRecord:
    """Index-verify a converged GHiSD outcome (``K >= k + 2`` probes, grown if needed)."""
    if not outcome.converged:
        raise PreconditionError(f"refine_saddle needs a converged outcome, got {outcome.status}")
    k = outcome.frame.k
    K = max(K or 0, k + 2)
    init = outcome.frame if k else None
    report = probe_index(system, outcome.x, cfg, K=K, init=init)
    rec = record_from_report(outcome.x, report, label, k, provenance)
    if rec.index_mismatch:
        logger.info("%s: searched with k=%d, measured index %d", label or "point", k, rec.index)
    return rec
