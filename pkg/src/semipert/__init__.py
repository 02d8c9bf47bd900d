"""Schatten-norm perturbation toolkit for matrix semigroups.

Dense-matrix realizations of semigroup perturbation theory: Schatten
norms and product inequalities, semigroup and resolvent evaluation,
scalar majorant convolution calculus, Dyson expansion terms with
certified tail bounds, resolvent-decay scans, discretized Schrodinger
operators with heat-kernel and block-norm diagnostics, and eigenvalue
growth checks for complex potentials.
"""

from .errors import (
    CrossCheckWarning,
    DivergenceError,
    InputError,
    NumericalError,
    ResolutionError,
    SpectrumError,
)
from .schatten import (
    DenseOperator,
    SchattenIndex,
    holder_product_check,
    identity,
    schatten_norm,
    singular_values,
)
from .semigroup import Generator, evolve, evolve_many, growth_bound, perturbed_generator, resolvent
from .majorants import (
    ScalarMajorant,
    convolve,
    convolve_many,
    graded_grid,
    iterated_convolution_tail,
    majorant_integral,
    weighted_integral,
)
from .dyson import (
    DysonLedger,
    duhamel_residual,
    dyson_terms,
    mixed_expansion,
    tail_certificate,
)
from .resolvent import (
    EnclosureEnvelope,
    VerticalScan,
    resolvent_difference_scan,
    spectral_enclosure,
    vertical_decay_scan,
)
from .schrodinger import (
    GridDomain,
    HeatKernelModel,
    Potential,
    bq_membership_probe,
    birman_solomjak_norm,
    build_dirichlet_laplacian,
    dirichlet_gaussian_model,
    heat_kernel_bound_check,
    parse_potential_expression,
)
from .asymptotics import (
    SpectralReport,
    heat_trace_check,
    perturbed_spectrum,
    weyl_constant,
    weyl_lower_bound_check,
)

__version__ = "0.1.0"
