import numpy as np
import pytest

from zeromult import DavenportHeilbronn, SearchRectangle, locate_zeros
from zeromult.conformal import build_domain_patch, build_involution

DH_RECT = SearchRectangle(0.4, 0.6, 520.5, 521.3)
# large enough to hold samples at 10 pair separations (sep ~ 0.032); the
# nearest other zero is 1.1 away, so the 3*extent circle stays clean
DH_EXTENT = 0.35


@pytest.fixture(scope="session")
def dh():
    return DavenportHeilbronn()


@pytest.fixture(scope="session")
def dh_pair(dh):
    return locate_zeros(dh, DH_RECT)


@pytest.fixture(scope="session")
def dh_patch(dh, dh_pair):
    return build_domain_patch(dh, dh_pair, DH_EXTENT)


@pytest.fixture(scope="session")
def dh_involution(dh, dh_patch):
    return build_involution(dh, dh_patch, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
