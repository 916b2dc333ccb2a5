"""Numerical toolkit for symplectic twist maps."""

__version__ = "0.1.0"

from . import errors, geometry, green, maps, selftest, symplectic, variational, weak_kam  # noqa: E402
from .maps import make_family  # noqa: E402

__all__ = ["errors", "geometry", "green", "maps", "selftest", "symplectic", "variational",
           "weak_kam", "make_family", "__version__"]
