"""The compiled and pure-Python stopping-time kernels must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qspatch import _pykernels, kernels

try:
    from qspatch import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernel not built")

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def brute_partition(eta, eps):
    cuts = [0]
    n = len(eta) - 1
    while True:
        start = cuts[-1]
        nxt = next((t for t in range(start + 1, n + 1) if abs(eta[t] - eta[start]) >= eps), n)
        cuts.append(min(nxt, n))
        if cuts[-1] == n:
            return cuts


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_partition_examples(impl):
    held, cuts = impl.hold(np.array([0.0, 0.6, 1.2, 1.8]), 1.0)
    assert cuts.tolist() == [0, 2, 3]
    np.testing.assert_array_equal(held[:3], [0.0, 0.0, 1.2])
    _, cuts = impl.hold(np.full(10, 3.0), 0.5)
    assert cuts.tolist() == [0, 9]
    _, cuts = impl.hold(np.array([0.0, 1.0]), 0.5)
    assert cuts.tolist() == [0, 1]


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 60), elements=finite), st.floats(1e-6, 50.0))
def test_python_kernel_matches_brute_force(eta, eps):
    held, cuts = _pykernels.hold(eta, eps)
    ref = brute_partition(eta, eps)
    assert cuts.tolist() == ref
    for a, b in zip(ref, ref[1:]):
        assert np.all(held[a:b] == eta[a])


@needs_ext
@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 80), elements=finite), st.floats(1e-9, 50.0))
def test_compiled_matches_python(eta, eps):
    h1, c1 = _pykernels.hold(eta, eps)
    h2, c2 = _ckernels.hold(eta, eps)
    np.testing.assert_array_equal(h1, h2)
    np.testing.assert_array_equal(c1, c2)
    levels = np.ldexp(1.0, -np.arange(1, 8)) * eps
    np.testing.assert_array_equal(_pykernels.hold_levels(eta, levels), _ckernels.hold_levels(eta, levels))


def test_backend_selected():
    assert kernels.BACKEND in ("compiled", "python")
    if _ckernels is not None:
        assert kernels.BACKEND == "compiled" or __import__("os").environ.get("QSPATCH_PURE_PYTHON")
