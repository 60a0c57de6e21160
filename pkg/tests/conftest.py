import pytest

from snspd_hack.presets import preset


@pytest.fixture(scope="session")
def dev1():
    return preset("device1")
