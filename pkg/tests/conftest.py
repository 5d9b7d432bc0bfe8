import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncergodic.algebra import TraceAlgebra

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ALGEBRAS = {
    "M2": TraceAlgebra.matrix(2),
    "M3": TraceAlgebra.matrix(3),
    "C4": TraceAlgebra.diagonal(4),
    "M2+C": TraceAlgebra(((2, 0.3), (1, 0.4))),
    "unnormalized": TraceAlgebra(((2, 1.0), (1, 2.0))),
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(ALGEBRAS))
def alg(request):
    return ALGEBRAS[request.param]
