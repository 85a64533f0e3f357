"""Orthonormal direction frames and unstable-subspace estimation.

All routines work in the system's weighted inner product.  Jacobian-vector
products are never formed exactly; they come from the central-difference
dimer ``(F(x + l v) - F(x - l v)) / 2l``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, eigsh

from .config import SearchConfig
from .errors import ContractViolation, DegenerateFrameError, PreconditionError
from .systems import VectorFieldSystem

logger = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class Frame:
    """``k`` directions stored as the rows of a ``(k, n)`` array."""

    vectors: np.ndarray
    weight: float = 1.0
    converged: bool = True

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2:
            raise ContractViolation("frame vectors must be a (k, n) array")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def empty(cls, n: int, weight: float = 1.0) -> "Frame":
        return cls(np.zeros((0, n)), weight)

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.k

    def __getitem__(self, item):
        return self.vectors[item]

    def gram(self) -> np.ndarray:
        return self.weight * (self.vectors @ self.vectors.T)

    def orthonormality_error(self) -> float:
        if self.k == 0:
            return 0.0
        return float(np.max(np.abs(self.gram() - np.eye(self.k))))

    def reflect(self, u: np.ndarray) -> np.ndarray:
        """Apply ``I - 2 sum_j v_j <., v_j>`` to ``u``."""
        if self.k == 0:
            return u
        c = self.weight * (self.vectors @ u)
        return u - 2.0 * (c @ self.vectors)

    def select(self, indices) -> "Frame":
        return Frame(self.vectors[list(indices)], self.weight, self.converged)


def orthonormalize(raw, weight: float = 1.0) -> Frame:
    """Gram-Schmidt with one full re-orthogonalization pass per column.

    Each column is projected against all previous outputs twice (classical
    Gram-Schmidt, repeated), which keeps orthogonality at round-off level.
    Raises :class:`DegenerateFrameError` when a column's norm after
    projection drops below ``1e-12`` relative to its input norm.
    """
    a = np.array(raw, dtype=float, ndmin=2)
    k, n = a.shape
    if k == 0:
        return Frame(np.zeros((0, n)), weight)
    q = np.empty_like(a)
    for j in range(k):
        v = a[j].copy()
        scale = math.sqrt(weight * float(v @ v))
        for _ in range(2 if j else 0):
            v -= (weight * (q[:j] @ v)) @ q[:j]
        nrm = math.sqrt(weight * float(v @ v))
        if not math.isfinite(nrm) or scale == 0.0 or nrm < DEGENERATE_NORM * scale:
            raise DegenerateFrameError(j, nrm)
        q[j] = v / nrm
    return Frame(q, weight)


def dimer_derivative(system: VectorFieldSystem, x, v, l: float) -> np.ndarray:
    """Central-difference approximation of ``J(x) v``.

    ``v`` may be a single direction or a ``(k, n)`` stack; the result has the
    same shape.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != (system.dimension,) or v.shape[-1] != system.dimension:
        raise ContractViolation("dimer_derivative: dimension mismatch")
    if not l > 0:
        raise ContractViolation("dimer half-length must be positive")
    single = v.ndim == 1
    vs = v[None, :] if single else v
    pair = np.concatenate([x + l * vs, x - l * vs])
    f = system.field(pair)
    k = vs.shape[0]
    d = (f[:k] - f[k:]) / (2.0 * l)
    return d[0] if single else d


def max_principal_angle_sin(a: np.ndarray, b: np.ndarray, weight: float = 1.0) -> float:
    """Sine of the largest principal angle between two orthonormal row spans."""
    if a.shape[0] == 0:
        return 0.0
    m = weight * (a @ b.T)
    r = b - m.T @ a
    s = weight * (r @ r.T)
    return float(np.sqrt(max(np.linalg.eigvalsh(s)[-1], 0.0)))


def _starting_rows(system, k, init, seed) -> np.ndarray:
    # dense systems start from the coordinate axes (keeps symmetric problems
    # axis-aligned); grids start from seeded noise so no Fourier mode is missed
    n, w = system.dimension, system.weight
    candidates = []
    if init is not None:
        rows = init.vectors if isinstance(init, Frame) else np.atleast_2d(init)
        candidates.extend(rows)
    if system.grid is None:
        candidates.extend(np.eye(n))
    rng = np.random.default_rng(seed)
    chosen = []
    pos = 0
    while len(chosen) < k:
        if pos < len(candidates):
            c = np.asarray(candidates[pos], dtype=float)
            pos += 1
        else:
            c = rng.standard_normal(n)
        v = c.copy()
        for _ in range(2):
            for q in chosen:
                v -= w * np.dot(q, v) * q
        nrm = np.sqrt(w) * np.linalg.norm(v)
        if nrm > 1e-6 * np.sqrt(w) * np.linalg.norm(c):
            chosen.append(v / nrm)
    return np.array(chosen)


def power_unstable_basis(system: VectorFieldSystem, x, k: int, cfg: SearchConfig,
                         init=None) -> Frame:
    """Subspace power iteration on ``I + beta J(x)`` with dimer products.

    Stops once the largest principal angle between successive spans falls
    to ``cfg.subspace_tol``; after ``cfg.max_eigen_iters`` iterations the last
    frame is returned with ``converged=False``.
    """
    x = np.asarray(x, dtype=float)
    n = system.dimension
    if not 1 <= k <= n:
        raise ContractViolation(f"need 1 <= k <= {n}, got k={k}")
    w = system.weight
    frame = orthonormalize(_starting_rows(system, k, init, cfg.seed), w)
    l = cfg.dimer_length(system.norm(x))
    for _ in range(cfg.max_eigen_iters):
        jv = dimer_derivative(system, x, frame.vectors, l)
        new = orthonormalize(frame.vectors + cfg.beta * jv, w)
        change = max_principal_angle_sin(frame.vectors, new.vectors, w)
        frame = new
        if change <= cfg.subspace_tol:
            return frame
    logger.debug("power iteration hit max_eigen_iters=%d at k=%d", cfg.max_eigen_iters, k)
    return Frame(frame.vectors, w, converged=False)


def _arpack_top(op, want, v0, symmetric, cfg):
    """Top-``want`` eigenpairs of ``op`` by real part, as real columns.

    Returns ``(values, columns, converged)``; a complex pair contributes its
    real and imaginary parts, both tagged with the pair's eigenvalue.
    """
    converged = True
    try:
        if symmetric:
            vals, vecs = eigsh(op, k=want, which="LA", v0=v0, maxiter=cfg.max_eigen_iters,
                               tol=cfg.subspace_tol)
        else:
            vals, vecs = eigs(op, k=want, which="LR", v0=v0, maxiter=cfg.max_eigen_iters,
                              tol=cfg.subspace_tol)
    except ArpackNoConvergence as exc:
        vals, vecs, converged = exc.eigenvalues, exc.eigenvectors, False
    values, cols = [], []
    for j in np.argsort(-np.real(vals), kind="stable"):
        u, lam = vecs[:, j], vals[j]
        if np.iscomplexobj(u) and abs(np.imag(lam)) > 1e-12 * max(1.0, abs(lam)):
            if np.imag(lam) > 0:
                values += [lam, lam]
                cols += [u.real, u.imag]
        else:
            values.append(lam)
            cols.append(np.real(u))
    return values, cols, converged


def krylov_unstable_basis(system: VectorFieldSystem, x, k: int, cfg: SearchConfig,
                          init=None) -> Frame:
    """ARPACK estimate of an invariant subspace for the ``k`` eigenvalues of
    largest real part.

    Uses the same dimer products as :func:`power_unstable_basis`, so no
    Jacobian is formed.  A single-vector Krylov method sees only one direction
    per exactly degenerate eigenspace (symmetric states have many), so found
    directions are locked and the search is repeated on the deflated operator
    ``P J P`` until it reports nothing above the ``k``-th value.  The result
    is orthonormal in the system inner product, ordered by decreasing real
    part.  Falls back to power iteration when ``k`` is too close to ``n``.
    """
    x = np.asarray(x, dtype=float)
    n = system.dimension
    if not 1 <= k <= n:
        raise ContractViolation(f"need 1 <= k <= {n}, got k={k}")
    symmetric = system.is_gradient
    want = k if symmetric else k + 1
    if want >= n // 2:
        return power_unstable_basis(system, x, k, cfg, init=init)
    l = cfg.dimer_length(system.norm(x))
    rng = np.random.default_rng(cfg.seed)
    # locked directions, Euclidean-orthonormal (the weight is a constant)
    q = np.zeros((0, n))
    lam = np.zeros(0, dtype=complex)

    # locked directions are parked at ``parked``, just below the current cutoff
    parked = 0.0

    def matvec(v):
        v = np.ravel(v)
        c = q @ v
        r = v - q.T @ c
        s = math.sqrt(float(r @ r))
        out = parked * (q.T @ c)
        if s == 0.0:
            return out
        jv = dimer_derivative(system, x, r / s, l) * s
        return jv - q.T @ (q @ jv) + out

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    converged = True
    if init is not None:
        rows = init.vectors if isinstance(init, Frame) else np.atleast_2d(init)
        v0 = np.sum(rows, axis=0) + 1e-3 * np.sqrt(np.mean(rows**2)) * rng.standard_normal(n)
    else:
        v0 = rng.standard_normal(n)
    for _ in range(k + 1):
        v0 = v0 - q.T @ (q @ v0)
        values, cols, ok = _arpack_top(op, min(want, n - q.shape[0] - 2), v0, symmetric, cfg)
        converged &= ok
        floor = np.min(lam.real) if lam.size >= k else -np.inf
        scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
        fresh = [(v, c) for v, c in zip(values, cols) if np.real(v) > floor + 1e-9 * scale]
        if not fresh:
            break
        merged_vals = np.concatenate([lam, [v for v, _ in fresh]])
        merged = np.vstack([q] + [c[None, :] for _, c in fresh])
        order = np.argsort(-merged_vals.real, kind="stable")[:max(k, 1)]
        # never split a complex pair at the cut
        keep = list(order)
        if len(order) < len(merged_vals) and np.imag(merged_vals[order[-1]]) != 0:
            rest = np.argsort(-merged_vals.real, kind="stable")[len(order):]
            keep.append(rest[0])
        keep = sorted(keep, key=lambda j: -merged_vals[j].real)
        basis, _ = np.linalg.qr(merged[keep].T)
        q = basis.T
        lam = merged_vals[keep]
        parked = float(np.min(lam.real)) - scale
        v0 = rng.standard_normal(n)
    frame = orthonormalize(q[:k], system.weight)
    return Frame(frame.vectors, frame.weight, converged)


def unstable_basis(system: VectorFieldSystem, x, k: int, cfg: SearchConfig, init=None) -> Frame:
    """Dispatch to the probe solver selected by ``cfg.eigen_solver``."""
    if cfg.eigen_solver == "krylov":
        return krylov_unstable_basis(system, x, k, cfg, init=init)
    return power_unstable_basis(system, x, k, cfg, init=init)


@dataclass(frozen=True, eq=False)
class IndexReport:
    """Outcome of probing the Jacobian spectrum at a stationary point.

    ``eigenvalues`` are the real parts of the projected matrix's spectrum,
    sorted descending; ``basis`` spans the detected unstable subspace, most
    unstable direction first; ``probes`` is the full K-direction frame.
    """

    index: int
    zero_count: int
    rayleigh_values: np.ndarray
    eigenvalues: np.ndarray
    basis: Frame
    probes: Frame
    residual: float
    truncated: bool = False
    converged: bool = True
    notes: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.probes.k


def _ordered_unstable_coefficients(a: np.ndarray, symmetric: bool, zero_tol: float):
    """Orthonormal coefficient columns spanning the unstable invariant subspace of ``a``."""
    if symmetric:
        vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
        order = np.argsort(-vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        keep = vals > zero_tol
        return vals, vecs[:, keep]
    vals, vecs = np.linalg.eig(a)
    order = np.argsort(-vals.real, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    cols = []
    scale = max(1.0, float(np.max(np.abs(vals))))
    for lam, u in zip(vals, vecs.T):
        if lam.real <= zero_tol:
            break
        if abs(lam.imag) <= 1e-12 * scale:
            cols.append(u.real)
        elif lam.imag > 0:
            cols.extend([u.real, u.imag])
    n_unstable = int(np.sum(vals.real > zero_tol))
    try:
        if len(cols) != n_unstable:
            raise DegenerateFrameError(len(cols), 0.0)
        c = orthonormalize(np.array(cols).reshape(len(cols), a.shape[0])).vectors.T
    except DegenerateFrameError:
        # defective or ill-conditioned eigenvectors: fall back to an ordered Schur form
        _, z, sdim = scipy.linalg.schur(a, output="real", sort=lambda re, im: re > zero_tol)
        c = z[:, :sdim]
    return vals, c


def estimate_index(system: VectorFieldSystem, x, K: int, cfg: SearchConfig,
                   init=None, check_stationary: bool = True) -> IndexReport:
    """Count Jacobian eigenvalues with positive real part using ``K`` probe directions.

    The count comes from the eigenvalues of the projected ``K x K`` matrix
    ``A_ij = <J v_j, v_i>``.  When no probed eigenvalue is clearly negative
    the report is flagged ``truncated``: the true index may exceed what ``K``
    probes can see.  A probed value at zero is enough to rule that out, since
    the probes capture the eigenvalues of largest real part first.
    """
    x = np.asarray(x, dtype=float)
    residual = system.norm(system.field(x))
    if check_stationary and residual > cfg.residual_tol:
        raise PreconditionError(
            f"estimate_index needs a stationary point: residual {residual:.3e} > {cfg.residual_tol:.1e}"
        )
    probes = unstable_basis(system, x, K, cfg, init=init)
    w = system.weight
    jv = dimer_derivative(system, x, probes.vectors, cfg.dimer_length(system.norm(x)))
    a = w * (probes.vectors @ jv.T)
    vals, coeffs = _ordered_unstable_coefficients(a, system.is_gradient, cfg.zero_tol)
    re = np.sort(vals.real)[::-1]
    index = int(np.sum(re > cfg.zero_tol))
    zero_count = int(np.sum(np.abs(re) <= cfg.zero_tol))
    basis = orthonormalize(coeffs.T @ probes.vectors, w) if index else Frame.empty(system.dimension, w)
    notes = []
    truncated = bool(re[-1] > cfg.zero_tol) and K < system.dimension
    if truncated:
        notes.append("index-possibly-truncated")
    if not probes.converged:
        notes.append("power-iteration-not-converged")
    return IndexReport(
        index=index,
        zero_count=zero_count,
        rayleigh_values=np.sort(np.diag(a))[::-1],
        eigenvalues=re,
        basis=basis,
        probes=probes,
        residual=residual,
        truncated=truncated,
        converged=probes.converged,
        notes=notes,
    )


def probe_index(system: VectorFieldSystem, x, cfg: SearchConfig, K: int = 2,
                init=None, check_stationary: bool = True) -> IndexReport:
    """:func:`estimate_index`, doubling ``K`` (warm-started) while the report is truncated."""
    n = system.dimension
    K = max(1, min(K, n))
    while True:
        report = estimate_index(system, x, K, cfg, init=init, check_stationary=check_stationary)
        if not report.truncated or K >= n:
            return report
        logger.debug("index probe truncated at K=%d (index>=%d); doubling", K, report.index)
        init = report.probes
        K = min(2 * K, n)


def ordered_directions(system: VectorFieldSystem, x, K: int, cfg: SearchConfig,
                       init=None) -> Frame:
    """``K`` orthonormal probe directions at ``x``, most unstable first.

    The converged probe span is rotated so that ``span(v_1..v_i)`` follows the
    projected spectrum in order of decreasing real part.
    """
    probes = unstable_basis(system, x, K, cfg, init=init)
    w = system.weight
    jv = dimer_derivative(system, x, probes.vectors, cfg.dimer_length(system.norm(x)))
    a = w * (probes.vectors @ jv.T)
    # a threshold below every eigenvalue keeps all K directions
    floor = -np.inf
    _, coeffs = _ordered_unstable_coefficients(a, system.is_gradient, floor)
    try:
        return Frame(orthonormalize(coeffs.T @ probes.vectors, w).vectors, w, probes.converged)
    except DegenerateFrameError:
        return probes
