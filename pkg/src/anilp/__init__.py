"""anilp: anisotropic Littlewood-Paley / Hardy-Lorentz numerics.

Library layout:

- ``dilation``   expansive matrices, dilated balls, step quasi-norm
- ``lattice``    periodic grids, sampled fields, filters, convolution
- ``lorentz``    distribution function, rearrangement, Lorentz quasi-norms
- ``maximal``    Hardy-Littlewood / dyadic / non-tangential / grand maximal
- ``square``     Lusin area, g, g*_lambda and the enlarged-aperture variant
- ``frames``     Calderon reproducing filter pairs (continuous and discrete)
- ``cubes``      dilated cubes, Calderon-Zygmund decomposition, atoms
- ``sequences``  cube-indexed majorant sequences and their inequalities
- ``cli``        config-driven experiment runner (`anilp` entry point)
"""

from .dilation import (
    Dilation,
    QuasiNormEngine,
    ball_membership,
    build_quasi_norm,
    estimate_H,
    level_indices,
    rho,
    validate_dilation,
)
from .lattice import (
    FilterSpec,
    Grid,
    SampledField,
    convolve,
    dilate_filter,
    field_from_values,
    make_vanishing_moment_filter,
    sample_filter,
)
from .lorentz import (
    LorentzParams,
    Rearrangement,
    check_power_identity,
    distribution_function,
    lorentz_norm,
    rearrange,
)

__version__ = "0.1.0"

__all__ = [
    "Dilation",
    "QuasiNormEngine",
    "validate_dilation",
    "build_quasi_norm",
    "rho",
    "ball_membership",
    "estimate_H",
    "level_indices",
    "Grid",
    "SampledField",
    "FilterSpec",
    "sample_filter",
    "dilate_filter",
    "convolve",
    "make_vanishing_moment_filter",
    "field_from_values",
    "LorentzParams",
    "Rearrangement",
    "distribution_function",
    "rearrange",
    "lorentz_norm",
    "check_power_identity",
    "__version__",
]
