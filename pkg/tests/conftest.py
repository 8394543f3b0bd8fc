import pytest

import builders

try:  # androguard logs every parse step through loguru
    from loguru import logger

    logger.disable("androguard")
except ImportError:
    pass


@pytest.fixture(scope="session")
def key_cert():
    return builders.make_key_and_cert()


@pytest.fixture(scope="session")
def signed_fixture(key_cert):
    return builders.build_fixture(key_cert)
