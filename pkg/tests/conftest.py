import pytest

from deepfutures import matrixkit as mk


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile all kernels once so timed tests measure the kernels,
    # not the compiler
    mk.warmup()
