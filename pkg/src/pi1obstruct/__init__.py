"""Numerical certificates that a circle action gives an infinite-order loop in a transformation group.

A kernel k (a one-form valued top form) defines an n-form on the loop
space.  If the action preserves k up to a constant and the integral of
k . xi over M is nonzero, the action cannot be contracted inside the group.
"""

__version__ = "0.1.0"

from .certify import CertificationCase, CertificationReport, certify  # noqa: E402
from .zoo import CASES, build_case  # noqa: E402

__all__ = ["CASES", "CertificationCase", "CertificationReport", "build_case", "certify", "__version__"]
