from .basis import BasisSet, UnsupportedElementError, build_basis
from .integrals import IntegralSet, compute_integrals, nuclear_repulsion
from .scf import ScfError, ScfOptions, ScfResult, run_scf, scf_rhf, scf_uhf

__all__ = [
    "BasisSet",
    "IntegralSet",
    "ScfError",
    "ScfOptions",
    "ScfResult",
    "UnsupportedElementError",
    "build_basis",
    "compute_integrals",
    "nuclear_repulsion",
    "run_scf",
    "scf_rhf",
    "scf_uhf",
]
