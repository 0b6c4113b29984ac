"""cdburgers: a workbench for nonlinear Sobolev-Burgers equations built on
Cayley-Dickson algebras.

The pipeline: translate a real PDE into a hypercomplex form, construct an
auxiliary two-point kernel K by Picard iteration of a noncommutative
integral equation, solve a nonlinear temporal Cauchy problem, and assemble
candidate solutions as integrals against finite atomic random operator
valued measures, then verify everything with grid residuals.
"""

from cdburgers.algebra import (
    CdElement,
    ComplexCdElement,
    EmbeddingMap,
    cd_conj,
    cd_mul,
    cd_norm_sq,
    euclid_products,
    pi_project,
    re_im,
)

__version__ = "0.1.0"

__all__ = [
    "CdElement",
    "ComplexCdElement",
    "EmbeddingMap",
    "cd_conj",
    "cd_mul",
    "cd_norm_sq",
    "euclid_products",
    "pi_project",
    "re_im",
    "__version__",
]
