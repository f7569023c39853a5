"""kroneig: low-rank interior eigensolvers for Kronecker-sum operators.

The library provides randomized Khatri-Rao sketches with embedding
guarantees, a block low-rank vector format with truncation, low-rank
Sylvester solvers (factored ADI and preconditioned BiCGstab), and two
eigensolvers built on top: a contour-integral rational-filter method and a
LOBPCG variant with rank truncation. Test operators are 2D Schrodinger
discretizations with separable potentials.
"""

__version__ = "0.1.0"

from . import blr, contour, dense, lobpcg, problems, sketch, sylvester
from .errors import KroneigError

__all__ = [
    "blr",
    "contour",
    "dense",
    "lobpcg",
    "problems",
    "sketch",
    "sylvester",
    "KroneigError",
    "__version__",
]
