import numpy as np
import pytest

from svmpool import svm

pytestmark = pytest.mark.skipif("cython" not in svm.available_backends(),
                                reason="compiled backend not built")


@pytest.mark.parametrize("loss", svm.LOSSES)
@pytest.mark.parametrize("seed", range(4))
def test_compiled_and_python_backends_agree(seed, loss):
    rng = np.random.default_rng(seed)
    X = svm.augment(rng.normal(size=(40, 6)), True)
    y = np.where(rng.random(40) < 0.5, 1.0, -1.0)
    upper, diag = svm.box_and_diag(np.full(40, 0.7), loss)
    a = svm.solve_dual(X, y, upper, diag, backend="python")
    b = svm.solve_dual(X, y, upper, diag, backend="cython")
    assert np.allclose(a[0], b[0], atol=1e-12, rtol=0)
    assert a[3] == b[3] and a[4] == b[4]
    assert np.allclose(a[6], b[6], rtol=1e-12)


def test_default_backend_is_listed():
    assert svm.DEFAULT_BACKEND in svm.available_backends()
