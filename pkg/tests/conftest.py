import pytest

from danube.tokenizer import Tokenizer

from helpers import TINY_CONFIG, build_test_vocab, tiny_model


@pytest.fixture(scope="session")
def vocab():
    return build_test_vocab()


@pytest.fixture(scope="session")
def tokenizer(vocab):
    return Tokenizer(vocab)


@pytest.fixture(scope="session")
def tiny():
    model, raw = tiny_model()
    return model, raw


@pytest.fixture(scope="session")
def tiny_config():
    return TINY_CONFIG


_KERNEL_NAMES = (
    "rms_norm", "softmax_rows", "silu", "rope_rotate",
    "matmul_f32", "matmul_quant", "set_num_threads",
)


@pytest.fixture(params=["numpy", "numba"])
def lane(request, monkeypatch):
    """Run a test under one specific kernel backend."""
    import danube.kernels as kernels

    if request.param == "numba":
        mod = pytest.importorskip("danube.kernels.numba_backend")
    else:
        from danube.kernels import numpy_backend as mod
    for name in _KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param
