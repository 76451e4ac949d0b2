import pytest

from htpca.logcorr import build_log_lut


@pytest.fixture(scope="session")
def lut():
    return build_log_lut()
