import os

import pytest

from lmsacm.channel import builtin_environment


def pytest_configure(config):
    os.environ.pop("LMS_ACM_DATA_DIR", None)


@pytest.fixture(scope="session")
def its_env():
    return builtin_environment("its")
