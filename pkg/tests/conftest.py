import hypothesis
import pytest

from dfrto.cases import get_case
from dfrto.process import ProcessSpec

hypothesis.settings.register_profile(
    "ci", deadline=None, derandomize=True, max_examples=25)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def spec():
    return ProcessSpec()


@pytest.fixture(scope="session")
def case1():
    return get_case("limiting_flux")


@pytest.fixture(scope="session")
def case2():
    return get_case("generalized")


@pytest.fixture(scope="session")
def p_nom1(spec, case1):
    return case1.nominal_params(spec)


@pytest.fixture(scope="session")
def p_nom2(spec, case2):
    return case2.nominal_params(spec)
