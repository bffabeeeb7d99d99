"""Band structure and in-gap impurity levels of a fast-oscillating
Schrodinger operator -d2/dx2 + V(x) + a(x/eps) on the line.

Subpackages follow the pipeline: `potentials` (inputs), `cell_ops`
(periodic cell solvers and band-edge series), `floquet` (monodromy and
numeric band edges), `well` (the compact-well operator -d2/dx2 + V),
`semigap` (levels below the essential spectrum), `finitegap` (levels in
finite spectral gaps), `oracle` (direct numerical eigensolver used for
validation), `cli` (command-line front end).
"""

from .potentials import (
    CellFunction,
    CompactPotential,
    PeriodicPotential,
    fourier_pair,
    make_compact,
    normalize_zero_mean,
    support_radius,
)

__all__ = [
    "CellFunction",
    "CompactPotential",
    "PeriodicPotential",
    "fourier_pair",
    "make_compact",
    "normalize_zero_mean",
    "support_radius",
]

__version__ = "0.1.0"
