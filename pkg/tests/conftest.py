import pytest
from hypothesis import HealthCheck, settings

from eismu import iwasawa, oms
from eismu import msclassical as mc

settings.register_profile(
    "eismu",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("eismu")


@pytest.fixture(scope="session")
def run19():
    """Classical route for (p, N, psi, k) = (19, 5, quad, 8) at M = 5, n = 3."""
    return iwasawa.classical_run(19, 5, "quad", 8, M=5, n=3)


@pytest.fixture(scope="session")
def run37():
    return iwasawa.classical_run(37, 1, "triv", 32, M=5, n=3)


@pytest.fixture(scope="session")
def ov19(run19):
    basis = run19.packet.context["space"].basis
    return oms.build_ov_space(basis, 8, None, 5)


@pytest.fixture(scope="session")
def small_basis():
    return mc.build_manin_basis(1, 11)


@pytest.fixture(scope="session")
def small_ov(small_basis):
    """Level 11, weight 4, eight moments: small enough for property tests."""
    return oms.build_ov_space(small_basis, 4, 8, 4)
