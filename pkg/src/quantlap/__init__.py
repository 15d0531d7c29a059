"""Quantized Laplacians on CP^1: balanced embeddings and the spectrum of P^*P.

Modules
-------
geometry
    Grassmannian Fubini-Study geometry and quadrature on CP^1.
bundles
    Section bases, metrics, Hilb/FS maps, Bergman and Toeplitz kernels.
quantization
    Integrated moment map, H and Q maps, assembly of the P^*P form.
spectral
    Eigendecomposition, oracle matching, eigenspace distances, fits.
balance
    Fixed-point iteration for (volume-)balanced inner products.
oracle
    Exact spectra, harmonic matrices, Lichnerowicz and Sturm-Liouville oracles.
"""

__version__ = "0.1.0"

from .balance import BalanceState, balance_residual, t_iterate
from .bundles import (
    InnerProductMatrix,
    MetricWeight,
    SectionBasis,
    bergman_kernel_diag,
    fs_map,
    hilb,
    toeplitz_kernel_diag,
    toeplitz_matrix,
)
from .errors import (
    ConfigError,
    DegenerateFrameError,
    DomainError,
    NonConvergenceError,
    PrecisionError,
    QuantlapError,
    UnsupportedError,
)
from .geometry import (
    FrameMatrix,
    QuadratureGrid,
    VolumeForm,
    build_quadrature,
    fs_tangent_inner,
    hamiltonian,
    moment_map,
    xi_field,
)
from .oracle import (
    HarmonicBuilder,
    cpn_spectrum,
    exact_balanced_eigenvalue,
    lichnerowicz_round,
    sturm_liouville_spectrum,
)
from .quantization import (
    HermitianBasis,
    PStarPForm,
    QuantizationContext,
    assemble_pstarp,
    dmu_bar,
    grad_l2_norm,
    h_of,
    mu_bar,
    q_of,
)
from .spectral import (
    AsymptoticFit,
    SpectrumReport,
    eigendecompose,
    eigenspace_distance,
    fit_asymptotic,
    hessian_asymptotics,
)
