import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from rkrfm.geometry import build_test_grid
from rkrfm.integrator import StagePoints
from rkrfm.jet import concatenate
from rkrfm.verify import (CONFIG_COLUMNS, MANUFACTURED_DOMAIN, MANUFACTURED_PARAMS, ErrorReport,
                          ManufacturedCase, ManufacturedConfig, ManufacturedModel, convergence_study,
                          exact_solution, exact_time_derivative, fd_oracle, fit_slope,
                          manufactured_source, relative_errors)


@pytest.fixture(scope="module")
def case():
    return ManufacturedCase(quadrature=build_test_grid(MANUFACTURED_DOMAIN, 64, 64, centered=True))


class TestExactSolution:
    def test_point_values(self):
        v = exact_solution([[math.pi / 2, math.pi / 2]], 0.0).value[0]
        assert v[0] == 1.0 and abs(v[1]) < 1e-16

    def test_laplacian_eigenfunction(self):
        pts = np.random.default_rng(0).uniform(0, 2 * math.pi, (30, 2))
        j = exact_solution(pts, 0.3, 2)
        assert np.allclose(j.laplacian().value, -2 * j.value, atol=1e-15)

    def test_decay(self):
        pts = np.random.default_rng(1).uniform(0, 2 * math.pi, (10, 2))
        assert np.allclose(exact_solution(pts, 1.0, 4).data, math.exp(-1) * exact_solution(pts, 0.0, 4).data,
                           rtol=1e-15, atol=0)

    def test_time_derivative(self):
        pts = np.random.default_rng(2).uniform(0, 2 * math.pi, (10, 2))
        h = 1e-6
        fd = (exact_solution(pts, 0.5 + h).value - exact_solution(pts, 0.5 - h).value) / (2 * h)
        assert np.allclose(exact_time_derivative(pts, 0.5).value, fd, atol=1e-9)

    def test_jet_against_fd(self):
        p = np.array([0.7, 2.1])
        j = exact_solution(p[None], 0.2, 4)
        f = lambda x, y: mpmath.sin(x) * mpmath.sin(y) * mpmath.exp(-0.2)
        for midx in [(1, 0), (1, 1), (0, 3), (2, 2), (4, 0)]:
            fd = fd_oracle(f, p, midx, 1e-5, dps=50)
            assert j[midx][0, 0] == pytest.approx(fd, abs=1e-9)


class TestSource:
    def test_exact_globals_closed_form(self, case):
        g = case.exact_globals(0.4)
        # integral of sin^2 x sin^2 y over the box is pi^2; both deformation entries cancel
        assert g.area == pytest.approx([math.pi**2 * math.exp(-0.8)] * 2, rel=1e-13)
        assert np.abs(g.S).max() < 1e-13

    def test_residual_identity(self, case):
        rng = np.random.default_rng(5)
        model = ManufacturedModel(case)
        quad = case.quadrature
        for t in rng.uniform(0, 1, 5):
            pts = rng.uniform(0, 2 * math.pi, (20, 2))
            state = concatenate([exact_solution(pts, t, 2), exact_solution(quad.points, t, 2)])
            stage = StagePoints(np.concatenate([pts, quad.points]), len(pts), quad.weights)
            F_plus_s = model(state, t, stage).value[:20]
            assert np.abs(exact_time_derivative(pts, t).value - F_plus_s).max() <= 1e-12

    def test_source_without_operator(self, case):
        # a model whose every term vanishes leaves s = d_t phi = -phi
        flat = ManufacturedCase(MANUFACTURED_PARAMS.__class__(gamma=0.0, width=1.0, mu=0.0, kappa=0.0,
                                                              radius=1.0, xi=1.0, zeta=0.0, n_cells=2),
                                case.quadrature)
        pts = np.random.default_rng(6).uniform(0, 2 * math.pi, (10, 2))
        s = flat.source(pts, 0.3)
        # advection survives with zero forces only if velocities vanish, which they do here
        assert np.allclose(s, -exact_solution(pts, 0.3).value, atol=1e-15)

    def test_manufactured_source_default_case(self):
        pts = np.array([[1.0, 2.0]])
        assert manufactured_source(pts, 0.0).shape == (1, 2)


class TestErrors:
    def test_equal_fields(self):
        e = relative_errors(np.ones((3, 2)), np.ones((3, 2)))
        assert (e.l_inf, e.l_2) == (0.0, 0.0)

    def test_uniform_scaling(self):
        x = np.random.default_rng(0).normal(size=(50, 2))
        e = relative_errors(1.01 * x, x)
        assert e.l_inf == pytest.approx(0.01, rel=1e-12) and e.l_2 == pytest.approx(0.01, rel=1e-12)

    @given(st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
    def test_scale_covariance(self, c, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
        e1, e2 = relative_errors(a, b), relative_errors(c * a, c * b)
        assert e1.l_2 == pytest.approx(e2.l_2, rel=1e-12)
        assert e1.l_inf == pytest.approx(e2.l_inf, rel=1e-12)

    def test_zero_exact(self):
        with pytest.raises(ValueError):
            relative_errors(np.ones(3), np.zeros(3))


class TestSlopes:
    def test_quadratic_recovered(self):
        dt = [0.5, 0.05, 5e-3, 5e-4]
        assert abs(fit_slope(dt, [3.7 * h**2 for h in dt]) - 2.0) <= 1e-10

    def test_degenerate(self):
        assert fit_slope([0.1, 0.1], [1.0, 2.0]) is None
        assert fit_slope([0.1], [1.0]) is None

    def test_study_continues_past_failures(self):
        def run(cfg):
            if cfg.dt == 0.2:
                raise FloatingPointError("boom")
            return ErrorReport(cfg.dt**2, cfg.dt**2, 0.0)

        study = convergence_study(ManufacturedConfig(), "dt", [0.4, 0.2, 0.1], run)
        assert [r.report is None for r in study.rows] == [False, True, False]
        assert study.slope == pytest.approx(2.0)
        lines = study.to_csv().splitlines()
        assert lines[0].split(",") == list(CONFIG_COLUMNS) + ["l_inf", "l_2", "seconds", "status"]
        assert len(lines) == 4 and "boom" in lines[2]

    def test_identical_configs_flagged(self):
        study = convergence_study(ManufacturedConfig(), "dt", [0.1, 0.1],
                                  lambda cfg: ErrorReport(1e-3, 1e-3, 0.0))
        assert study.slope is None


class TestFDOracle:
    def test_square(self):
        assert fd_oracle(lambda x, y: x * x, (0.3, 0.4), (2, 0), 1e-4) == pytest.approx(2.0, abs=1e-8)

    @pytest.mark.parametrize("midx", [(1, 0), (0, 2), (3, 1), (2, 2)])
    def test_constant(self, midx):
        assert fd_oracle(lambda x, y: 4.2, (0.0, 1.0), midx, 1e-3) == 0.0

    def test_high_precision(self):
        g = lambda x, y: x**4 * y
        assert fd_oracle(g, (0.5, 2.0), (4, 0), 1e-5, dps=50) == pytest.approx(48.0, rel=1e-9)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            fd_oracle(lambda x, y: x, (0, 0), (1, 0), 0.0)
