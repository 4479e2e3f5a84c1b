import os
import subprocess
import sys

import numpy as np
import pytest

from rkrfm import _kernels


needs_compiled = pytest.mark.skipif(_kernels.BACKEND != "compiled",
                                    reason="compiled kernels not built")


class TestKernels:
    @pytest.mark.parametrize("order", range(5))
    def test_tanh_identities(self, order):
        u = np.linspace(-6, 6, 301)
        t = _kernels.tanh_derivatives(u, 4, backend="numpy")
        assert np.allclose(t[1], 1 - np.tanh(u) ** 2, atol=1e-14, rtol=0)
        # each row is the derivative of the previous one
        if order:
            h = 1e-5
            fd = (_kernels.tanh_derivatives(u + h, 4)[order - 1]
                  - _kernels.tanh_derivatives(u - h, 4)[order - 1]) / (2 * h)
            assert np.allclose(t[order], fd, atol=1e-8)

    def test_cos_quadrants(self):
        u = np.linspace(-6, 6, 101)
        c = _kernels.cos_derivatives(u, 4)
        want = [np.cos(u), -np.sin(u), -np.cos(u), np.sin(u), np.cos(u)]
        assert np.array_equal(c, np.array(want))

    @needs_compiled
    @pytest.mark.parametrize("is_tanh", [True, False])
    def test_compiled_matches_numpy_bitwise(self, is_tanh):
        rng = np.random.default_rng(3)
        xt = rng.uniform(-1, 1, (257, 2))
        w, b = rng.uniform(-2, 2, (40, 2)), rng.uniform(-2, 2, 40)
        for order in range(5):
            a = _kernels.feature_tables(xt, w, b, order, is_tanh, backend="compiled")
            n = _kernels.feature_tables(xt, w, b, order, is_tanh, backend="numpy")
            assert np.array_equal(a, n)

    def test_env_forces_numpy(self):
        env = dict(os.environ, RKRFM_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "import rkrfm._kernels as k; print(k.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "numpy"

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            _kernels.tanh_derivatives(np.zeros(3), 2, backend="gpu")
