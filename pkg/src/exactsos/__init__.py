"""Exact sum-of-squares certificates recovered from approximate conjectures."""

__version__ = "0.1.0"

from .poly import FloatPolynomial, ParseError, Polynomial, parse_polynomial
from .verify import SosCertificate, check_certificate

__all__ = ["FloatPolynomial", "ParseError", "Polynomial", "SosCertificate", "check_certificate", "parse_polynomial", "__version__"]
