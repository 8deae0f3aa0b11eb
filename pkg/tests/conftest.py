import numpy as np
import pytest

from simdistill import _kernels_py, kernels
from simdistill.data_io import SyntheticSpec, generate

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def kernel_module(request):
    if request.param == "python":
        return _kernels_py
    from simdistill import _ckernels

    return _ckernels


@pytest.fixture(scope="session")
def default_data():
    return generate(SyntheticSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
