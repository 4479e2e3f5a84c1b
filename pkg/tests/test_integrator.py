import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rkrfm.assembly import FittedField, Periodic, eval_field, fit_field
from rkrfm.basis import sample_basis
from rkrfm.integrator import (EULER, HEUN, MIDPOINT, RK4, TABLEAUS, BasisConfig, NumericalError,
                              RKTableau, TimeGrid, advance, ode_solve, ode_step, rk_target)
from rkrfm.geometry import build_collocation, build_partition
from rkrfm.jet import Jet


class ZeroModel:
    spatial_order = 2
    quadrature = None

    def __call__(self, state, t, pts):
        return Jet.zeros(state.order - 2, state.n_points, state.n_components)


class Identity:
    """F(phi) = phi with no spatial derivatives."""
    spatial_order = 0
    quadrature = None

    def __call__(self, state, t, pts):
        return state


class Exploding(ZeroModel):
    def __call__(self, state, t, pts):
        out = super().__call__(state, t, pts)
        out.data[0, 3, 0] = np.nan
        return out


class Forbidden(ZeroModel):
    def __call__(self, state, t, pts):
        raise AssertionError("model evaluated despite the order cap")


class TestTableau:
    @pytest.mark.parametrize("tab", list(TABLEAUS.values()))
    def test_consistent(self, tab):
        assert math.isclose(sum(tab.b), 1.0)

    def test_implicit_rejected(self):
        with pytest.raises(ValueError):
            RKTableau(((0.5, 0.0), (1.0, 0.0)), (0.5, 0.5), (0.0, 1.0))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            RKTableau(((0.0, 0.0), (1.0, 0.0)), (0.5, 0.6), (0.0, 1.0))


class TestTimeGrid:
    def test_from_dt(self):
        g = TimeGrid.from_dt(1.0, 5e-4)
        assert g.K == 2000 and g.time(g.K) == 1.0
        assert g.dt == 5e-4

    def test_bad(self):
        with pytest.raises(ValueError):
            TimeGrid.from_dt(1.0, 0.3)
        with pytest.raises(ValueError):
            TimeGrid(1.0, -1)


class TestODE:
    def test_heun_one_step(self):
        assert ode_step(lambda y, t: y, 1.0, 0.0, 0.1)[0] == 1.105

    @pytest.mark.parametrize("tab", [HEUN, MIDPOINT])
    def test_local_error_third_order(self, tab):
        errs = [abs(ode_step(lambda y, t: y, 1.0, 0.0, h, tab)[0] - math.exp(h)) for h in (0.1, 0.05, 0.025)]
        assert errs[0] / errs[1] >= 7.5 and errs[1] / errs[2] >= 7.5

    def test_global_second_order(self):
        dts = [1e-1, 1e-2, 1e-3]
        errs = [abs(ode_solve(lambda y, t: y, 1.0, TimeGrid.from_dt(1.0, h))[0] - math.e) for h in dts]
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.05

    def test_rk4_fourth_order(self):
        errs = [abs(ode_step(lambda y, t: y, 1.0, 0.0, h, RK4)[0] - math.exp(h)) for h in (0.2, 0.1)]
        assert errs[0] / errs[1] >= 28

    @given(st.floats(-2, 2), st.floats(1e-3, 0.5))
    def test_linear_time_dependence_exact(self, a, h):
        # Heun integrates y' = a t exactly (trapezoid rule on a linear integrand)
        y = ode_step(lambda y, t: np.array([a * t]), 0.0, 1.0, h)[0]
        assert math.isclose(y, a * ((1 + h) ** 2 - 1) / 2, rel_tol=1e-12, abs_tol=1e-14)


class TestRKTarget:
    @pytest.fixture
    def field(self, part2x2, coll2x2):
        basis = sample_basis(part2x2, 20, 1.7, seed=4)
        pts = coll2x2.flat_points
        f, _ = fit_field(basis, coll2x2, np.column_stack([np.sin(pts[:, 0]), np.cos(pts[:, 1])]))
        return f

    def test_zero_rhs_bitwise(self, field, coll2x2):
        target = rk_target(ZeroModel(), field, HEUN, 0.0, 0.1, coll2x2)
        assert np.array_equal(target, field.jet(coll2x2, 0).value)

    def test_identity_model_heun_factor(self, field, coll2x2):
        target = rk_target(Identity(), field, HEUN, 0.0, 0.1, coll2x2)
        assert np.allclose(target, 1.105 * field.jet(coll2x2, 0).value, rtol=1e-15, atol=1e-15)

    def test_order_cap_rejected_before_evaluation(self, field, coll2x2):
        with pytest.raises(ValueError, match="order 8"):
            rk_target(Forbidden(), field, RK4, 0.0, 0.1, coll2x2)

    def test_non_finite_stage(self, field, coll2x2):
        with pytest.raises(NumericalError, match="stage 1"):
            rk_target(Exploding(), field, HEUN, 0.0, 0.1, coll2x2)

    def test_stage_orders(self, field, coll2x2):
        seen = []

        class Recorder(ZeroModel):
            def __call__(self, state, t, pts):
                seen.append((state.order, t))
                return super().__call__(state, t, pts)

        rk_target(Recorder(), field, HEUN, 1.0, 0.25, coll2x2)
        assert seen == [(4, 1.0), (2, 1.25)]


class TestAdvance:
    def sines(self, pts):
        return np.column_stack([np.sin(pts[:, 0]), np.cos(pts[:, 1])])

    def test_k_zero(self, coll2x2):
        out = advance(ZeroModel(), self.sines, coll2x2, BasisConfig(20, 1.7), Periodic(), HEUN,
                      TimeGrid(1.0, 0))
        assert len(out) == 1 and out[0].t == 0.0

    def test_zero_fixed_point(self, coll2x2):
        infos = []
        out = advance(ZeroModel(), lambda p: np.zeros((len(p), 2)), coll2x2, BasisConfig(20, 1.7),
                      Periodic(), HEUN, TimeGrid(0.3, 3), sinks=[infos.append])
        assert len(out) == 4 and [i.step for i in infos] == [0, 1, 2, 3]
        for f in out:
            assert np.abs(eval_field(f, coll2x2.flat_points)).max() <= 1e-10

    def test_frozen_zero_rhs_idempotent(self, square):
        # without coupling rows each refit is an orthogonal projection, so it settles after one step
        coll = build_collocation(build_partition(square, 1, 1), 10, 10)
        out = advance(ZeroModel(), self.sines, coll, BasisConfig(20, 1.7, regenerate=False),
                      None, HEUN, TimeGrid(0.4, 4))
        first = out[1].coefficients
        for f in out[2:]:
            assert np.allclose(f.coefficients, first, rtol=0, atol=1e-10 * np.abs(first).max())
        assert all(f.bases[0] is out[0].bases[0] for f in out)

    def test_regenerated_bases_differ(self, coll2x2):
        out = advance(ZeroModel(), self.sines, coll2x2, BasisConfig(20, 1.7), Periodic(), HEUN,
                      TimeGrid(0.2, 2))
        assert not np.array_equal(out[1].bases[0].weights, out[2].bases[0].weights)

    def test_step_index_in_error(self, coll2x2):
        with pytest.raises(NumericalError, match="step 1"):
            advance(Exploding(), self.sines, coll2x2, BasisConfig(20, 1.7), Periodic(), HEUN,
                    TimeGrid(0.2, 2))

    def test_cap_checked_up_front(self, coll2x2):
        with pytest.raises(ValueError):
            advance(Forbidden(), self.sines, coll2x2, BasisConfig(5, 1.0), None, RK4, TimeGrid(1.0, 1))

    def test_keep_last(self, coll2x2):
        out = advance(ZeroModel(), self.sines, coll2x2, BasisConfig(10, 1.7), None, EULER,
                      TimeGrid(0.2, 2), keep="last")
        assert len(out) == 1 and out[0].t == 0.2
