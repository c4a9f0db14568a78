import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(params=["python", "compiled"])
def kernel_backend(request):
    """Run a test once per available kernel backend, restoring the default."""
    from vadet import _kernels

    name = request.param
    if name not in _kernels.available_backends():
        pytest.skip(f"backend {name} not built")
    previous = _kernels.use(name)
    yield name
    _kernels.use(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
