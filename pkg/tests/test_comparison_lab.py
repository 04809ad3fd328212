import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from hypothesis import given, settings, strategies as st

from roughlab.coefficient_fields import linear, make_logistic, sign_condition_fields
from roughlab.comparison_lab import (
    EXPONENT_SLACK,
    MajorantDecomposition,
    linfty_bound_check,
    required_exponent,
    semigroup_boundedness_report,
    smoothing_exponent_fit,
    solve_majorant,
    supersolution_check,
    uniqueness_probe,
)
from roughlab.errors import DomainError, InsufficientDataError, RefusalError, StructuralError
from roughlab.harness import gaussian_bump
from roughlab.integrator import extrapolated_reference, integrate
from roughlab.rough_driver import (
    _grid_distance,
    mollify_data,
    power_singularity,
    run_family,
    sign_flip_singularity,
    smooth,
)
from roughlab.semigroup import assemble
from roughlab.spectral_core import DomainSpec

from conftest import LEVELS


@pytest.fixture(scope="module")
def heat_op(study_domain):
    return assemble(study_domain, study_domain.zeros(), 255)


@pytest.fixture(scope="module")
def bump_run(heat_op, study_domain):
    bump = gaussian_bump(study_domain, 0.045)
    return integrate(heat_op, linear(study_domain), bump, 10.0, q=1.0, t_first=1e-3)


class TestMajorant:
    def test_forced_part(self, interval, basis):
        sin = interval.sample(np.sin)
        dec = solve_majorant(basis, interval.zeros(), sin, interval.zeros(), 1.0)
        for i in range(len(dec.Phi)):
            np.testing.assert_allclose(dec.Phi.values(i), (1 - np.exp(-dec.Phi.times[i])) * sin.values,
                                       atol=1e-12)
        assert np.abs(dec.U_h.coeffs).max() == 0.0

    def test_homogeneous_part(self, interval, basis):
        sin = interval.sample(lambda x: np.abs(np.sin(x)))
        dec = solve_majorant(basis, interval.zeros(), interval.zeros(), sin, 1.0)
        for i in range(len(dec.U)):
            np.testing.assert_allclose(dec.U.values(i), np.exp(-dec.U.times[i]) * sin.values, atol=1e-12)
        np.testing.assert_array_equal(dec.U.coeffs, dec.U_h.coeffs)
        assert np.abs(dec.Phi.coeffs).max() == 0.0

    def test_against_implicit_oracle(self, study_domain, heat_op):
        b = heat_op.basis
        a0 = mollify_data(power_singularity(0.25, 1.0), 8, "amplitude_truncation", b).coefficients(b)
        C = study_domain.constant(0.75)
        dec = solve_majorant(b, C, study_domain.zeros(), a0, 0.5)
        oracle = extrapolated_reference(dec.operator, linear(study_domain, m=C), a0, 0.5, 1e-4)
        assert np.linalg.norm(dec.U.coeffs[-1] - oracle) <= 1e-6 * np.linalg.norm(oracle)

    def test_decomposition_identity(self, interval, basis):
        dec = solve_majorant(basis, interval.sample(np.cos), interval.sample(lambda x: 1 + x),
                             interval.sample(np.sin), 1.0)
        assert dec.decomposition_error <= 1e-9

    def test_decomposition_mismatch(self, interval, basis):
        dec = solve_majorant(basis, interval.zeros(), interval.zeros(), interval.sample(np.sin), 1.0)
        with pytest.raises(StructuralError):
            MajorantDecomposition(dec.U, dec.U, dec.U, dec.operator)

    def test_negative_inputs(self, interval, basis):
        with pytest.raises(DomainError):
            solve_majorant(basis, interval.zeros(), interval.constant(-1.0), interval.zeros(), 1.0)
        with pytest.raises(DomainError):
            solve_majorant(basis, interval.zeros(), interval.zeros(), interval.sample(np.cos), 1.0)

    @given(alpha=st.floats(0.01, 100.0))
    @settings(max_examples=15, deadline=None)
    def test_linearity(self, small_interval, alpha):
        b = assemble(small_interval, small_interval.zeros(), 16).basis
        C = small_interval.sample(lambda x: 1 + np.cos(x))
        u0 = small_interval.sample(lambda x: x * (np.pi - x))
        U1 = solve_majorant(b, C, small_interval.zeros(), u0, 1.0).U
        Ua = solve_majorant(b, C, small_interval.zeros(), u0 * alpha, 1.0).U
        np.testing.assert_allclose(Ua.coeffs, alpha * U1.coeffs, rtol=0, atol=1e-10 * alpha * np.abs(U1.coeffs).max())

    @given(bump=st.floats(0.0, 2.0), shift=st.floats(0.0, 3.0))
    @settings(max_examples=15, deadline=None)
    def test_ordering_in_potential(self, small_interval, bump, shift):
        b = assemble(small_interval, small_interval.zeros(), 16).basis
        C1 = small_interval.sample(np.cos)
        C2 = C1 + small_interval.sample(lambda x: bump * np.exp(-((x - shift) ** 2)))
        D = small_interval.constant(0.5)
        u0 = small_interval.sample(np.sin)
        U1 = solve_majorant(b, C1, D, u0, 1.0, h=0.01).U
        U2 = solve_majorant(b, C2, D, u0, 1.0, h=0.01).U
        for i in range(len(U1)):
            assert np.all(U2.values(i) >= U1.values(i) - 1e-8)


class TestSupersolution:
    def test_heat_equality(self, interval, basis):
        sin = interval.sample(np.sin)
        op = assemble(interval, interval.zeros(), 64)
        u = integrate(op, linear(interval), sin, 1.0)
        U = solve_majorant(basis, interval.zeros(), interval.zeros(), sin, 1.0).U
        rep = supersolution_check(u, U)
        assert rep.passed
        assert abs(rep.worst_margin) <= 1e-10

    @pytest.mark.parametrize("rho, q", [(3.0, 1.0), (3.0, 2.0), (5.0, 1.0)])
    def test_every_level(self, logistic_family, study_domain, rho, q):
        (op, rd), fam = logistic_family(rho, q)
        fields = sign_condition_fields(rd)
        C, D = fields.C, fields.D
        tol = None
        for mol, u in zip(fam.mollified, fam.trajectories):
            U = solve_majorant(op.basis, C, D, mol.abs_coefficients(op.basis), 1.0,
                               h=u.meta["h"], t_first=1e-4, q=q).U
            rep = supersolution_check(u, U, tol=tol)
            tol = rep.fitted_constants["tol"] if tol is None else tol
            assert rep.passed, rep.summary()
            positive = u.times > 0
            gap = np.array([(U.values(i) - u.values(i)).min() for i in np.flatnonzero(positive)[::50]])
            assert np.all(gap > -tol)

    def test_sign_flipped_data(self, study_domain, logistic_problem):
        op, rd = logistic_problem(3.0)
        fam = run_family((op, rd), sign_flip_singularity(0.25, 1.0), (4, 16), 1.0)
        fields = sign_condition_fields(rd)
        C, D = fields.C, fields.D
        for mol, u in zip(fam.mollified, fam.trajectories):
            U = solve_majorant(op.basis, C, D, mol.abs_coefficients(op.basis), 1.0,
                               h=u.meta["h"], t_first=1e-4, q=1.0).U
            rep = supersolution_check(u, U, skip_initial=True)
            assert rep.passed and "t = 0 excluded" in rep.notes

    def test_violation_witness(self, interval, basis):
        sin = interval.sample(np.sin)
        op = assemble(interval, interval.zeros(), 64)
        u = integrate(op, linear(interval), sin * 2.0, 1.0)
        U = solve_majorant(basis, interval.zeros(), interval.zeros(), sin, 1.0).U
        rep = supersolution_check(u, U)
        assert not rep.passed
        w = rep.witnesses[0]
        assert w["t"] == 0.0 and w["node"] == (127,)
        assert w["excess"] == pytest.approx(1.0, abs=1e-4)

    def test_mismatched_grids(self, interval, basis):
        sin = interval.sample(np.sin)
        U = solve_majorant(basis, interval.zeros(), interval.zeros(), sin, 1.0).U
        V = solve_majorant(basis, interval.zeros(), interval.zeros(), sin, 2.0).U
        with pytest.raises(StructuralError):
            supersolution_check(U, V)


class TestLinftyBound:
    def test_bounded_data(self, interval):
        op = assemble(interval, interval.zeros(), 64)
        u = integrate(op, linear(interval), interval.sample(np.sin), 1.0, q=2.0, t_first=1e-4)
        rep = linfty_bound_check(u, 2.0)
        norm = np.sqrt(np.pi / 2)
        # sup |u(t)| = e^{-t}; the continuous best constant maximizes e^{-t} / (1 + t^{-1/4} norm)
        best = minimize_scalar(lambda t: -np.exp(-t) / (1 + t**-0.25 * norm), bounds=(1e-4, 1.0),
                               method="bounded", options={"xatol": 1e-10})
        assert rep.fitted_constants["c"] == pytest.approx(-best.fun, rel=1e-3)
        assert rep.fitted_constants["c"] <= -best.fun * (1 + 1e-9)
        assert rep.passed and "no refined run" in rep.notes[0]

    def test_power_singularity_heat(self, heat_op, study_domain):
        b = heat_op.basis
        a0 = mollify_data(power_singularity(0.25, 2.0), 4096, "amplitude_truncation", b).coefficients(b)
        u = integrate(heat_op, linear(study_domain), a0, 1.0, q=2.0, t_first=1e-4)
        rep = linfty_bound_check(u, 2.0)
        assert rep.fitted_constants["exponent"] == 0.25
        assert -0.25 <= rep.fitted_constants["early_slope"] < 0

    def test_bump_early_slope(self, bump_run):
        rep = linfty_bound_check(bump_run, 1.0, u0_norm=1.0)
        assert -0.65 <= rep.fitted_constants["early_slope"] <= 0
        assert rep.fitted_constants["exponent"] == 0.5

    def test_grid_stability(self, bump_run):
        d = DomainSpec.interval(np.pi, 1023)
        op = assemble(d, d.zeros(), 511)
        ref = integrate(op, linear(d), gaussian_bump(d, 0.045), 10.0, q=1.0, t_first=1e-3)
        rep = linfty_bound_check(bump_run, 1.0, u0_norm=1.0, refined=ref)
        assert rep.passed
        assert rep.fitted_constants["c_refined"] == pytest.approx(rep.fitted_constants["c"], rel=0.2)

    def test_unstable_constant_fails(self, bump_run, interval):
        op = assemble(interval, interval.zeros(), 64)
        other = integrate(op, linear(interval), gaussian_bump(interval, 0.045) * 3.0, 10.0, q=1.0, t_first=1e-3)
        rep = linfty_bound_check(bump_run, 1.0, u0_norm=1.0, refined=other)
        assert not rep.passed and rep.witnesses


class TestSmoothingExponent:
    @pytest.mark.parametrize("N, q, p, expected", [
        (1, 1.0, np.inf, 0.5), (2, 1.0, np.inf, 1.0), (1, 2.0, 2.0, 0.0), (1, 1.0, 2.0, 0.25),
    ])
    def test_required_exponent(self, N, q, p, expected):
        assert required_exponent(N, q, p) == expected

    def test_p_equals_q(self, bump_run):
        rep = smoothing_exponent_fit(bump_run, 1.0, 1.0, (1e-3, 1e-1))
        assert rep.passed and rep.fitted_constants["required"] == 0.0

    def test_bump_1d(self, bump_run):
        rep = smoothing_exponent_fit(bump_run, 1.0, np.inf, (1e-3, 1e-1))
        assert rep.passed
        assert rep.fitted_constants["required"] == -0.5
        assert rep.fitted_constants["slope"] >= -0.5 - EXPONENT_SLACK
        assert rep.name == "smoothing_exponent_q1_pinf_N1"

    def test_bump_2d(self):
        sq = DomainSpec.rectangle((np.pi, np.pi), (127, 127))
        op = assemble(sq, sq.zeros(), sq.size // 4)
        u = integrate(op, linear(sq), gaussian_bump(sq, 0.045), 10.0, q=1.0, t_first=1e-3)
        rep = smoothing_exponent_fit(u, 1.0, np.inf, (1e-3, 1e-1))
        assert rep.passed
        assert rep.fitted_constants["required"] == -1.0
        assert rep.fitted_constants["slope"] >= -1.15

    def test_p_below_q(self, bump_run):
        with pytest.raises(DomainError):
            smoothing_exponent_fit(bump_run, 2.0, 1.0, (1e-3, 1e-1))

    def test_sparse_window(self, bump_run):
        with pytest.raises(InsufficientDataError):
            smoothing_exponent_fit(bump_run, 1.0, np.inf, (1e-3, 1.1e-3))

    def test_violation(self, bump_run):
        # claiming q = 4 demands slope >= -(1/2)(1/4) - 0.15, which the bump cannot meet
        rep = smoothing_exponent_fit(bump_run, 4.0, np.inf, (1e-3, 1e-1))
        assert not rep.passed and rep.worst_margin > 0 and rep.witnesses


class TestUniqueness:
    def test_same_scheme_twice(self, logistic_problem):
        problem = logistic_problem(3.0)
        a = run_family(problem, power_singularity(0.25, 2.0), (4, 8), 0.5)
        b = run_family(problem, power_singularity(0.25, 2.0), (4, 8), 0.5)
        assert np.all(_grid_distance(a.trajectories[-1], b.trajectories[-1], 2.0) == 0.0)

    def test_smooth_data(self, logistic_problem):
        rep = uniqueness_probe(logistic_problem(3.0), smooth((1.0, 0.5, 0.25)), (4, 8), 0.5)
        assert rep.passed
        assert rep.fitted_constants["gap"] <= 1e-8

    def test_power_singularity(self, logistic_problem):
        rep = uniqueness_probe(logistic_problem(3.0), power_singularity(0.25, 2.0), LEVELS, 1.0, q=2.0)
        assert rep.passed
        tails = rep.fitted_constants["tail_amplitude"] + rep.fitted_constants["tail_modal"]
        assert rep.fitted_constants["gap"] <= 2 * tails
        assert all(r.passed for r in rep.metadata["cauchy"])

    def test_refusal(self, logistic_problem, monkeypatch):
        from roughlab import comparison_lab

        # an eigenvalue far above the true one makes every Cauchy verdict fail
        monkeypatch.setattr(comparison_lab, "_limit_eigenvalue", lambda op, rd: 50.0)
        with pytest.raises(RefusalError) as info:
            uniqueness_probe(logistic_problem(3.0), power_singularity(0.25, 2.0), (2, 4, 8), 0.5)
        assert not info.value.report.passed


class TestSemigroupBoundedness:
    def test_heat_three_bumps(self, heat_op, study_domain):
        data = [(gaussian_bump(study_domain, s), 1.0) for s in (0.045, 0.09, 0.18)]
        rep = semigroup_boundedness_report((heat_op, linear(study_domain)), data, 0.01, 1.0, 1.0)
        c = rep.fitted_constants["c"]
        assert rep.passed
        assert rep.fitted_constants["sup"] <= c * (1 + 0.01**-0.5) * (1 + 1e-12)

    def test_bounded_set_independent_of_epsilon(self, heat_op, study_domain):
        data = [(study_domain.sample(lambda x, a=a: a * np.sin(x)), 2 * a) for a in (0.2, 0.5, 1.0)]
        sups = [semigroup_boundedness_report((heat_op, linear(study_domain)), data, eps, 1.0, 1.0)
                .fitted_constants["sup"] for eps in (0.001, 0.01, 0.1)]
        assert max(sups) <= 1.0

    def test_logistic_scaling(self, logistic_problem, study_domain):
        op, rd = logistic_problem(3.0)
        reps = []
        for s in (1.0, 2.0):
            data = [(gaussian_bump(study_domain, sg) * s, s) for sg in (0.045, 0.09, 0.18)]
            reps.append(semigroup_boundedness_report((op, rd), data, 0.01, 1.0, 1.0))
        assert all(r.passed for r in reps)
        one, two = (r.fitted_constants for r in reps)
        assert two["c"] * two["data_bound"] <= 2 * one["c"] * one["data_bound"]
        assert two["sup"] <= 2 * one["sup"]

    def test_needs_three(self, heat_op, study_domain):
        with pytest.raises(ValueError):
            semigroup_boundedness_report((heat_op, linear(study_domain)),
                                         [(study_domain.sample(np.sin), 1.0)] * 2, 0.1, 1.0, 1.0)
