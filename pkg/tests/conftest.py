"""测试共用夹具"""

import os

import numpy as np
import pytest

from skupatch.autograd import set_debug_checks
from skupatch.common.base import ServiceBase
from skupatch.common.protocols import ServiceLocator
from skupatch.training.selftest import tiny_config


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SKUPATCH_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="设置 SKUPATCH_SLOW=1 运行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_config():
    """f64 小网络"""
    return tiny_config()


@pytest.fixture(autouse=True)
def finite_checks():
    set_debug_checks(True)
    yield
    set_debug_checks(False)


@pytest.fixture
def clean_services():
    """隔离服务单例与 ServiceLocator"""
    saved = dict(ServiceBase._instances)
    ServiceBase._instances.clear()
    ServiceLocator.clear()
    yield
    ServiceBase._instances.clear()
    ServiceBase._instances.update(saved)
    ServiceLocator.clear()
