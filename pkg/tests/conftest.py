import warnings

import pytest

from ifm_engine.statespace import Params, RegimeWarning


@pytest.fixture(autouse=True)
def _quiet_regime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        yield


@pytest.fixture(scope="session")
def default_params():
    return Params()


@pytest.fixture(scope="session")
def wv_params():
    return Params.weak_value_defaults()
