"""Single-site quantum probe tomography at desk scale.

Submodules
----------
pauli     exact Pauli-string algebra with scalar or polynomial coefficients
family    the 12-parameter nearest-neighbor Hamiltonian family and smoothing
polysys   exact sparse multivariate polynomials and the canonical system type
series    symbolic Taylor-coefficient derivation (canonical + truncated systems)
sim       dense Gibbs/evolution simulator implementing the probe interface
estimate  finite-difference Taylor-coefficient estimators
solve     projected Gauss-Newton, FindRoot, and generic-fiber certification
learn     the three-stage learner, orbit distance, and parameter sweeps
cli       command-line entry points (derive/simulate/certify/findroot/learn/sweep)
"""

from .family import (
    LatticeSpec,
    ParamVector,
    SmoothedSampler,
    build_hamiltonian,
    sample_smoothed,
    symbolic_hamiltonian,
    transpose_params,
)
from .pauli import (
    PauliExpr,
    PauliString,
    commutator,
    conjugate_observable,
    nested_commutator,
    normalized_trace,
)
from .polysys import MultiPoly, PolynomialSystem, QQi
from .series import (
    CANONICAL_SPECS,
    CoefficientSpec,
    canonical_system,
    reference_system,
    series_observable,
    spec_polynomial,
    truncated_series_poly,
)

__version__ = "0.1.0"

__all__ = [
    "LatticeSpec",
    "ParamVector",
    "SmoothedSampler",
    "build_hamiltonian",
    "sample_smoothed",
    "symbolic_hamiltonian",
    "transpose_params",
    "PauliExpr",
    "PauliString",
    "commutator",
    "conjugate_observable",
    "nested_commutator",
    "normalized_trace",
    "MultiPoly",
    "PolynomialSystem",
    "QQi",
    "CANONICAL_SPECS",
    "CoefficientSpec",
    "canonical_system",
    "reference_system",
    "series_observable",
    "spec_polynomial",
    "truncated_series_poly",
    "__version__",
]
