import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from consensus_lab import _backend, _kernels_py
from consensus_lab.dynamics import Indicator, RationalDecay, random_state, simulate_alignment

compiled = pytest.importorskip("consensus_lab._kernels")

KINDS = [(0, 1.0), (0, 2.5), (1, 1.0), (1, 0.5), (1, 1.7), (2, 0.3)]


def test_default_backend_is_compiled():
    assert _backend.load()[1] == "cython"
    assert _backend.load("python")[0] is _kernels_py
    with pytest.raises(ValueError):
        _backend.load("fortran")


def test_env_forces_pure_python():
    out = subprocess.run(
        [sys.executable, "-c", "import consensus_lab; print(consensus_lab.BACKEND)"],
        env={"CONSENSUS_LAB_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True,
        check=True)
    assert out.stdout.strip() == "python"


@given(st.integers(1, 60), st.integers(0, 2 ** 31 - 1), st.sampled_from(KINDS))
def test_alignment_rhs_agree(n, seed, kind):
    x = random_state(n, seed=seed, low=-3, high=3)
    a = compiled.alignment_rhs(x, *kind)
    b = _kernels_py.alignment_rhs(x, *kind)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * n)
    # antisymmetric pair forces cancel
    assert abs(a.sum()) <= 1e-11 * n * (1 + np.abs(x).max())


@given(st.integers(1, 40), st.integers(0, 2 ** 31 - 1), st.sampled_from(KINDS))
def test_weighted_rhs_agree(n, seed, kind):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, n)
    W = rng.uniform(0, 3, (n, n))
    W = W + W.T
    a = compiled.weighted_alignment_rhs(x, W, *kind)
    b = _kernels_py.weighted_alignment_rhs(x, W, *kind)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * n)


def test_trajectories_agree():
    x0 = random_state(50, seed=7)
    for a in (RationalDecay(1.0), Indicator(0.4)):
        t1 = simulate_alignment(50, a, x0, 1.0, 0.01, backend="cython")
        t2 = simulate_alignment(50, a, x0, 1.0, 0.01, backend="python")
        np.testing.assert_allclose(t1.states, t2.states, atol=1e-12)
