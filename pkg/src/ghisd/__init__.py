"""Generalized high-index saddle dynamics (GHiSD) and solution landscapes.

Typical use::

    from ghisd import SystemSpec, make_system, SearchConfig, verify_point
    from ghisd import SymmetrySpec, downward_search

    system = make_system(SystemSpec("quartic2d"))
    cfg = SearchConfig()
    top = verify_point(system, [0.0, 0.0], cfg, label="max")
    graph = downward_search(system, top, cfg, SymmetrySpec())
"""
from .config import SearchConfig, config_for
from .dynamics import (
    GhisdOutcome,
    SaddleRecord,
    ghisd_run,
    ghisd_step,
    refine_saddle,
    verify_point,
)
from .errors import (
    ContractViolation,
    DegenerateFrameError,
    PreconditionError,
    UnsupportedOperation,
)
from .export import export_graph, import_graph
from .frame import (
    Frame,
    IndexReport,
    dimer_derivative,
    estimate_index,
    orthonormalize,
    power_unstable_basis,
    probe_index,
)
from .landscape import (
    LandscapeGraph,
    SymmetrySpec,
    build_landscape,
    downward_search,
    is_equivalent,
    upward_search,
)
from .systems import (
    Grid,
    SystemSpec,
    VectorFieldSystem,
    eval_energy,
    eval_field,
    laplacian_periodic,
    make_system,
)

__version__ = "0.1.0"

__all__ = [
    "ContractViolation", "DegenerateFrameError", "Frame", "GhisdOutcome", "Grid",
    "IndexReport", "LandscapeGraph", "PreconditionError", "SaddleRecord", "SearchConfig",
    "SymmetrySpec", "SystemSpec", "UnsupportedOperation", "VectorFieldSystem",
    "build_landscape", "config_for", "dimer_derivative", "downward_search", "estimate_index",
    "eval_energy", "eval_field", "export_graph", "ghisd_run", "ghisd_step", "import_graph",
    "is_equivalent", "laplacian_periodic", "make_system", "orthonormalize",
    "power_unstable_basis", "probe_index", "refine_saddle", "upward_search", "verify_point",
]
