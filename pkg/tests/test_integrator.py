import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughlab.coefficient_fields import linear, make_custom, make_logistic
from roughlab.errors import BlowUpError, DomainError
from roughlab.integrator import (
    MAX_STORED,
    default_step,
    extrapolated_reference,
    integrate,
    reference_solve,
    store_mask,
    time_grid,
)
from roughlab.semigroup import assemble
from roughlab.spectral_core import lq_norm, lq_norms


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture(scope="module")
def heat(interval):
    return assemble(interval, interval.zeros(), 64), linear(interval)


@pytest.fixture(scope="module")
def logistic_case(interval):
    rd = make_logistic(interval.constant(1.0), 3.0, m=interval.constant(3.0))
    return assemble(interval, rd.m, 64), rd, interval.sample(np.sin)


@pytest.fixture(scope="module")
def logistic_reference(logistic_case):
    op, rd, u0 = logistic_case
    h = default_step(1.0, rd)
    return {
        "h": h,
        "ref": reference_solve(op, rd, u0, 1.0, h / 100, max_store=2).coeffs[-1],
        "ref_half": reference_solve(op, rd, u0, 1.0, h / 200, max_store=2).coeffs[-1],
    }


class TestTimeGrid:
    def test_uniform(self):
        times, early = time_grid(1.0, 0.25)
        np.testing.assert_allclose(times, [0, 0.25, 0.5, 0.75, 1.0])
        assert not early.any()

    def test_ragged_final_step(self):
        times, _ = time_grid(1.0, 0.3)
        assert times[-1] == 1.0 and len(times) == 5

    def test_geometric_start(self):
        times, early = time_grid(1.0, 0.01, t_first=1e-4)
        assert times[1] == 1e-4
        assert np.all(np.diff(times) > 0)
        ratios = times[2 : early.sum() + 1] / times[1 : early.sum()]
        np.testing.assert_allclose(ratios, 1.25)
        assert times[early].max() < 0.01

    @pytest.mark.parametrize("T, h", [(0.0, 0.1), (1.0, 0.0), (1.0, 2.0), (-1.0, 0.1)])
    def test_invalid(self, T, h):
        with pytest.raises(DomainError):
            time_grid(T, h)

    def test_store_mask_decimates(self):
        times, early = time_grid(10.0, 1e-3, t_first=1e-6)
        keep = store_mask(times.size, early)
        assert keep.sum() <= MAX_STORED
        assert keep[0] and keep[-1]
        assert keep[early].all()

    def test_default_step(self, interval):
        rd = make_logistic(interval.constant(1.0), 3.0, m=interval.constant(3.0))
        assert default_step(1.0, rd) == pytest.approx(1 / 200)
        assert default_step(1.0, linear(interval, m=interval.constant(100.0))) == pytest.approx(1 / 400)


class TestExactLinearCases:
    @pytest.mark.parametrize("scheme", ["exp_euler", "exp_rk2"])
    @pytest.mark.parametrize("h", [0.5, 0.1, 0.013])
    def test_heat_mode(self, heat, interval, scheme, h):
        op, rd = heat
        traj = integrate(op, rd, interval.sample(np.sin), 1.0, h, scheme=scheme)
        for i in range(len(traj)):
            expected = np.exp(-traj.times[i]) * np.sin(interval.axes[0])
            np.testing.assert_allclose(traj.values(i), expected, atol=1e-12)

    @pytest.mark.parametrize("scheme", ["exp_euler", "exp_rk2"])
    def test_constant_forcing(self, interval, scheme):
        rd = linear(interval, g=interval.sample(np.sin))
        op = assemble(interval, rd.m, 64)
        traj = integrate(op, rd, interval.zeros(), 2.0, 0.25, scheme=scheme)
        for i in range(len(traj)):
            expected = (1 - np.exp(-traj.times[i])) * np.sin(interval.axes[0])
            np.testing.assert_allclose(traj.values(i), expected, atol=1e-12)

    def test_state_vector_input(self, heat, interval):
        op, rd = heat
        a0 = op.from_grid(interval.sample(np.sin))
        traj = integrate(op, rd, a0, 1.0, 0.1)
        np.testing.assert_allclose(traj.coeffs[-1], np.exp(-1) * a0, atol=1e-14)

    def test_norm_traces_consistent(self, logistic_case):
        op, rd, u0 = logistic_case
        traj = integrate(op, rd, u0, 0.2, 0.01, q=1.5)
        for i in (0, 7, len(traj) - 1):
            assert traj.lq[i] == pytest.approx(lq_norm(traj.state(i), 1.5), rel=1e-12)
            assert traj.linf[i] == pytest.approx(np.abs(traj.values(i)).max(), rel=1e-12)
        assert traj.meta["scheme"] == "exp_euler" and traj.meta["h"] == 0.01


class TestReference:
    def test_heat_first_order(self, heat, interval):
        op, rd = heat
        u0 = interval.sample(np.sin)
        exact = np.exp(-1.0) * op.from_grid(u0)
        errs = [np.linalg.norm(reference_solve(op, rd, u0, 1.0, h, max_store=2).coeffs[-1] - exact)
                for h in (0.02, 0.01, 0.005)]
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        np.testing.assert_allclose(orders, 1.0, atol=0.05)

    def test_forced_first_order(self, interval):
        rd = linear(interval, g=interval.sample(np.sin))
        op = assemble(interval, rd.m, 64)
        exact = (1 - np.exp(-1.0)) * op.from_grid(interval.sample(np.sin))
        errs = [np.linalg.norm(reference_solve(op, rd, interval.zeros(), 1.0, h, max_store=2).coeffs[-1] - exact)
                for h in (0.02, 0.01, 0.005)]
        np.testing.assert_allclose(np.log2(np.array(errs[:-1]) / errs[1:]), 1.0, atol=0.05)

    def test_self_refinement(self, logistic_reference):
        assert rel_l2(logistic_reference["ref"], logistic_reference["ref_half"]) <= 1e-5

    def test_step_too_large(self, interval):
        rd = linear(interval, m=interval.constant(3.0))
        op = assemble(interval, rd.m, 16)
        with pytest.raises(DomainError):
            reference_solve(op, rd, interval.sample(np.sin), 1.0, 0.5)

    def test_shape(self, heat, interval):
        op, rd = heat
        traj = reference_solve(op, rd, interval.sample(np.sin), 0.1, 0.01)
        assert len(traj) == 11 and traj.meta["scheme"] == "backward_euler"


class TestLogistic:
    def test_rk2_matches_reference(self, logistic_case, logistic_reference):
        op, rd, u0 = logistic_case
        final = integrate(op, rd, u0, 1.0, logistic_reference["h"], scheme="exp_rk2").coeffs[-1]
        assert rel_l2(final, logistic_reference["ref"]) <= 1e-4

    def test_euler_is_first_order_accurate(self, logistic_case, logistic_reference):
        op, rd, u0 = logistic_case
        final = integrate(op, rd, u0, 1.0, logistic_reference["h"]).coeffs[-1]
        assert rel_l2(final, logistic_reference["ref"]) <= 1e-3

    @pytest.mark.parametrize("scheme, order", [("exp_euler", 1.0), ("exp_rk2", 2.0)])
    def test_convergence_order(self, logistic_case, scheme, order):
        op, rd, u0 = logistic_case
        oracle = extrapolated_reference(op, rd, u0, 1.0, 1e-4)
        errs = [np.linalg.norm(integrate(op, rd, u0, 1.0, h, scheme=scheme).coeffs[-1] - oracle)
                for h in (0.04, 0.02, 0.01)]
        fitted = np.polyfit(np.log([0.04, 0.02, 0.01]), np.log(errs), 1)[0]
        assert fitted == pytest.approx(order, abs=0.3)

    def test_below_linear_flow(self, logistic_case, interval):
        # logistic f0 <= 0 for u >= 0: the solution stays below the linear flow from the same data
        op, rd, _ = logistic_case
        u0 = interval.sample(lambda x: 4 * np.sin(x) ** 3)
        u = integrate(op, rd, u0, 1.0)
        lin = integrate(op, linear(interval, m=rd.m), u0, 1.0, u.meta["h"])
        for i in range(len(u)):
            assert np.all(u.values(i) <= lin.values(i) + 1e-6)
            assert u.values(i).min() >= -1e-6


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_blow_up_reported(interval):
    rd = make_custom(interval, lambda u: u**3, lambda u: 3 * u**2, 0.0, 0.0)
    op = assemble(interval, rd.m, 32)
    with pytest.raises(BlowUpError) as info:
        integrate(op, rd, interval.sample(lambda x: 50 * np.sin(x)), 1.0, 0.01)
    assert 0 < info.value.last_time < 1.0


def test_nonfinite_data(heat, interval):
    op, rd = heat
    bad = op.from_grid(interval.sample(np.sin))
    bad[3] = np.nan
    with pytest.raises(DomainError):
        integrate(op, rd, bad, 1.0, 0.1)
    with pytest.raises(DomainError):
        interval.sample(lambda x: np.where(x > 1, np.inf, x))


def test_unknown_scheme(heat, interval):
    op, rd = heat
    with pytest.raises(ValueError, match="unknown scheme"):
        integrate(op, rd, interval.sample(np.sin), 1.0, 0.1, scheme="rk4")


@given(amp=st.floats(0.1, 5.0), rho=st.floats(1.5, 5.0))
@settings(max_examples=10, deadline=None)
def test_logistic_never_blows_up(small_interval, amp, rho):
    rd = make_logistic(small_interval.constant(1.0), rho, m=small_interval.constant(2.0))
    op = assemble(small_interval, rd.m, 16)
    u = integrate(op, rd, small_interval.sample(lambda x: amp * np.sin(x)), 1.0, q=2.0)
    assert np.all(np.isfinite(u.linf))
    assert lq_norms(op.to_values(u.coeffs[-1:]),
                    small_interval, 2.0)[0] == pytest.approx(u.lq[-1], rel=1e-12)
