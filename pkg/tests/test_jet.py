import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rkrfm.jet import MAX_ORDER, Jet, check_midx, concatenate, multi_index, multi_indices, n_multi


def poly_jet(coefs, pts, order):
    """Jet of p(x, y) = sum c_ij x^i y^j computed monomial by monomial."""
    data = np.zeros((n_multi(order), len(pts), 1))
    x, y = pts[:, 0], pts[:, 1]
    for (i, j), c in coefs.items():
        for a, (ax, ay) in enumerate(multi_indices(order)):
            if ax > i or ay > j:
                continue
            fx = np.prod(np.arange(i - ax + 1, i + 1)) if ax else 1
            fy = np.prod(np.arange(j - ay + 1, j + 1)) if ay else 1
            data[a, :, 0] += c * fx * fy * x ** (i - ax) * y ** (j - ay)
    return Jet(data)


coef_maps = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)),
                            st.floats(-2, 2), min_size=1, max_size=5)


class TestLayout:
    def test_graded_index(self):
        assert [multi_index(*m) for m in multi_indices(2)] == list(range(6))
        assert multi_indices(1) == ((0, 0), (1, 0), (0, 1))
        assert n_multi(MAX_ORDER) == 15

    @pytest.mark.parametrize("midx", [(5, 0), (2, 3), (-1, 0)])
    def test_bad_midx(self, midx):
        with pytest.raises(ValueError):
            check_midx(midx)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            Jet(np.zeros((4, 2, 1)))
        with pytest.raises(ValueError):
            Jet(np.zeros((21, 2, 1)))


class TestArithmetic:
    @given(coef_maps, coef_maps)
    def test_leibniz_matches_polynomial_product(self, ca, cb):
        pts = np.random.default_rng(1).uniform(-1, 1, (7, 2))
        prod = {}
        for (i, j), a in ca.items():
            for (k, l), b in cb.items():
                prod[(i + k, j + l)] = prod.get((i + k, j + l), 0.0) + a * b
        got = poly_jet(ca, pts, 4) * poly_jet(cb, pts, 4)
        want = poly_jet(prod, pts, 4)
        assert np.allclose(got.data, want.data, rtol=1e-11, atol=1e-10)

    def test_order_coercion(self):
        pts = np.zeros((3, 2))
        a, b = Jet.zeros(4, 3, 2), Jet.zeros(2, 3, 2)
        assert (a + b).order == 2 and (a * b).order == 2

    def test_derivative_and_laplacian(self):
        pts = np.random.default_rng(2).uniform(-1, 1, (5, 2))
        j = poly_jet({(3, 0): 1.0, (1, 2): 2.0}, pts, 4)
        lap = j.laplacian()
        assert lap.order == 2
        # laplacian of x^3 + 2 x y^2 is 6x + 4x
        assert np.allclose(lap.value[:, 0], 10 * pts[:, 0])
        assert np.allclose(j.derivative(1, 1).value[:, 0], 4 * pts[:, 1])
        with pytest.raises(ValueError):
            j.truncate(1).derivative(1, 1)

    def test_scalars_and_constants(self):
        c = Jet.constant([2.0, 3.0], 2, 4)
        assert np.all(c.data[1:] == 0)
        d = 1.0 - c
        assert np.array_equal(d.value, np.tile([-1.0, -2.0], (4, 1)))
        assert np.array_equal((c * [1.0, 0.5]).value[0], [2.0, 1.5])

    def test_concatenate_and_select(self):
        a, b = Jet.zeros(3, 2, 2), Jet.constant([1.0, 1.0], 2, 5)
        c = concatenate([a, b])
        assert c.n_points == 7 and c.order == 2
        assert c.points(slice(2, None)).n_points == 5
        assert c.components(1).n_components == 1

    @given(arrays(float, (6, 4, 2), elements=st.floats(-10, 10)))
    def test_zero_annihilates(self, data):
        j = Jet(data)
        assert np.all((j * Jet.zeros(2, 4, 2)).data == 0)
