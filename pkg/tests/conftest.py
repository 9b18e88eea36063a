from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from exactsos.poly import parse_polynomial
from exactsos.verify import SosCertificate

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).resolve().parent.parent / "src" / "exactsos" / "data"

PARRILO_TEXT = "2*x1^4 + 2*x1^3*x2 - x1^2*x2^2 + 5*x2^4"
ROBINSON_TEXT = (
    "x1^6 + x2^6 + x3^6 - x1^4*x2^2 - x1^2*x2^4 - x1^4*x3^2 - x1^2*x3^4"
    " - x2^4*x3^2 - x2^2*x3^4 + 3*x1^2*x2^2*x3^2"
)


def P(text, nvars=2):
    return parse_polynomial(text, nvars)


@pytest.fixture
def parrilo():
    return P(PARRILO_TEXT, 2)


@pytest.fixture
def parrilo_cert():
    return SosCertificate(
        2,
        [
            (Fraction(1, 2), P("2*x1^2 - 3*x2^2 + x1*x2")),
            (Fraction(1, 2), P("x2^2 + 3*x1*x2")),
        ],
    )


@pytest.fixture
def robinson():
    return P(ROBINSON_TEXT, 3)
