import numpy as np
import pytest
import scipy.sparse.linalg as spla

import degenmfem.schemes as schemes
from degenmfem.fem import assemble_forms, l2_norm_scalar
from degenmfem.linear_system import SingularSystemError
from degenmfem.mesh import build_structured_unit_square
from degenmfem.nonlinearity import NonlinearitySpec, RegularizationSpec
from degenmfem.schemes import (
    IterationReport,
    SchemeConfig,
    StoppingCriterion,
    hl_iterate,
    l_type_iterate,
    mass_balance_residual,
    newton_iterate,
    regularized_l_iterate,
    run_time_series,
    theorem_bound_monitor,
    total_iterations,
)
from degenmfem.theory import TheoryConstants

LIPSCHITZ = NonlinearitySpec(alpha=1.0)
HOLDER = NonlinearitySpec(alpha=0.5)


@pytest.fixture(scope="module")
def forms():
    return assemble_forms(build_structured_unit_square(3))


def _manufactured_linear_step(forms, tau=0.4, seed=0):
    """Exact discrete solution of one step with b = identity on positives.

    Picks a random positive scalar field u*, derives the compatible flux
    from the discrete flux equation and the source from the discrete
    balance, so (u*, q*) solves the step exactly.
    """
    rng = np.random.default_rng(seed)
    u_star = rng.uniform(0.5, 1.5, size=forms.num_cells)
    u_prev = rng.uniform(0.5, 1.5, size=forms.num_cells)
    q_star = spla.spsolve(forms.flux_mass.tocsc(),
                          forms.divergence.T @ u_star
                          + forms.dirichlet_functional)
    f_n = ((u_star - u_prev) + tau * (forms.divergence @ q_star)
           / forms.scalar_mass) / tau
    return u_star, q_star, u_prev, f_n


def _reference_stop(u_ref, q_ref=None, tol=1e-10):
    return StoppingCriterion(mode="against_reference", tol=tol,
                             reference=u_ref, flux_reference=q_ref)


def test_config_validation():
    stop = StoppingCriterion(mode="increment", tol=1e-8)
    reg = RegularizationSpec(kind="linear", epsilon=1e-3, base=HOLDER)
    with pytest.raises(ValueError):
        SchemeConfig(kind="hl", tau=0.1, stopping=stop, nonlinearity=HOLDER,
                     regularization=reg, L=1.0)  # hl takes no epsilon
    with pytest.raises(ValueError):
        SchemeConfig(kind="hl", tau=0.1, stopping=stop, nonlinearity=HOLDER)
    with pytest.raises(ValueError):
        SchemeConfig(kind="lreg", tau=0.1, stopping=stop, regularization=reg)
    with pytest.raises(ValueError):
        SchemeConfig(kind="newton", tau=0.1, stopping=stop,
                     regularization=reg, L=2.0)  # newton takes no L
    with pytest.raises(ValueError):
        SchemeConfig(kind="picard", tau=0.1, stopping=stop)
    with pytest.raises(ValueError):
        StoppingCriterion(mode="anything", tol=1e-8)
    with pytest.raises(ValueError):
        IterationReport(iterations_used=3, converged=True,
                        failure_reason="divergence")


def test_newton_linear_problem_one_iteration(forms):
    # Newton on a linear storage term solves the step in one shot.
    tau = 0.4
    u_star, q_star, u_prev, f_n = _manufactured_linear_step(forms)
    reg = RegularizationSpec(kind="linear", epsilon=1e-3, base=LIPSCHITZ)
    config = SchemeConfig(kind="newton", tau=tau,
                          stopping=_reference_stop(u_star, q_star),
                          regularization=reg)
    u, q, report = newton_iterate(forms, config, u_prev, u_prev, f_n)
    assert report.converged
    assert report.iterations_used == 1
    np.testing.assert_allclose(u, u_star, atol=1e-11)
    np.testing.assert_allclose(q, q_star, atol=1e-10)


def test_lipschitz_l_scheme_contracts_and_converges(forms):
    # With b Lipschitz and L >= L_b the iteration is a contraction, so it
    # converges unconditionally; errors must decay monotonically.
    tau = 5.0  # deliberately large time step
    u_star, q_star, u_prev, f_n = _manufactured_linear_step(forms, tau=tau)
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=_reference_stop(u_star, tol=1e-9),
                          nonlinearity=LIPSCHITZ, L=1.0)
    u, q, report = hl_iterate(forms, config, np.maximum(u_prev, 0.0),
                              u_prev, f_n)
    assert report.converged
    hist = report.error_history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
    np.testing.assert_allclose(u, u_star, atol=1e-8)


def test_hl_equals_lreg_for_lipschitz_nonlinearity(forms):
    # alpha = 1 makes b_eps identical to b, so the two L-type schemes must
    # produce bit-identical trajectories for the same L.
    tau = 0.4
    u_star, _, u_prev, f_n = _manufactured_linear_step(forms, seed=4)
    stop = _reference_stop(u_star, tol=1e-9)
    config_hl = SchemeConfig(kind="hl", tau=tau, stopping=stop,
                             nonlinearity=LIPSCHITZ, L=1.0)
    reg = RegularizationSpec(kind="linear", epsilon=1e-3, base=LIPSCHITZ)
    config_lreg = SchemeConfig(kind="lreg", tau=tau, stopping=stop,
                               regularization=reg, L=1.0)
    u1, q1, rep1 = hl_iterate(forms, config_hl, np.maximum(u_prev, 0.0),
                              u_prev, f_n)
    u2, q2, rep2 = regularized_l_iterate(
        forms, config_lreg, np.maximum(u_prev, 0.0), u_prev, f_n)
    assert rep1.iterations_used == rep2.iterations_used
    assert np.array_equal(u1, u2)
    assert np.array_equal(q1, q2)
    assert rep1.error_history == rep2.error_history


def test_exact_initial_guess_stops_immediately(forms):
    tau = 0.4
    u_star, q_star, u_prev, f_n = _manufactured_linear_step(forms, seed=7)
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=_reference_stop(u_star, tol=1e-6),
                          nonlinearity=LIPSCHITZ, L=1.0)
    u, q, report = hl_iterate(forms, config, np.maximum(u_prev, 0.0),
                              u_star, f_n)
    assert report.converged
    assert report.iterations_used <= 1


def test_zero_fixed_point(forms):
    config = SchemeConfig(
        kind="hl", tau=1.0,
        stopping=_reference_stop(np.zeros(forms.num_cells), tol=1e-12),
        nonlinearity=HOLDER, L=1.0)
    zero = np.zeros(forms.num_cells)
    u, q, report = hl_iterate(forms, config, zero, zero, zero)
    assert report.converged and report.iterations_used == 1
    np.testing.assert_array_equal(u, 0.0)
    np.testing.assert_array_equal(q, 0.0)


def test_increment_stopping_mode(forms):
    tau = 0.4
    u_star, _, u_prev, f_n = _manufactured_linear_step(forms, seed=9)
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=StoppingCriterion(mode="increment", tol=1e-10),
                          nonlinearity=LIPSCHITZ, L=1.0)
    u, q, report = hl_iterate(forms, config, np.maximum(u_prev, 0.0),
                              u_prev, f_n)
    assert report.converged
    assert report.iterations_used >= 2  # increments exist from the 2nd solve
    np.testing.assert_allclose(u, u_star, atol=1e-8)
    assert all(e < 1e6 for e in report.error_history)


def test_max_iterations_reported(forms):
    tau = 0.05
    u_star, _, u_prev, f_n = _manufactured_linear_step(forms, seed=12)
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=_reference_stop(u_star, tol=1e-14),
                          nonlinearity=HOLDER, L=40.0, max_iterations=3)
    _, _, report = hl_iterate(forms, config, np.maximum(u_prev, 0.0) ** 0.5,
                              u_prev, f_n)
    assert not report.converged
    assert report.failure_reason == "max_iterations"
    assert report.iterations_used == 3


def test_divergence_reported(forms):
    # The slow Holder iteration keeps the error above a (deliberately
    # tiny) divergence threshold, which must be flagged, not looped on.
    tau = 0.4
    u_star, _, u_prev, f_n = _manufactured_linear_step(forms, seed=3)
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=_reference_stop(u_star, tol=1e-13),
                          nonlinearity=HOLDER, L=40.0,
                          divergence_threshold=1e-12)
    _, _, report = hl_iterate(forms, config, np.maximum(u_prev, 0.0) ** 0.5,
                              u_prev, f_n)
    assert not report.converged
    assert report.failure_reason == "divergence"
    assert report.iterations_used == 1


def test_singular_system_reported(forms, monkeypatch):
    tau = 0.4
    u_star, _, u_prev, f_n = _manufactured_linear_step(forms, seed=5)
    reg = RegularizationSpec(kind="linear", epsilon=1e-3, base=HOLDER)
    config = SchemeConfig(kind="newton", tau=tau,
                          stopping=_reference_stop(u_star, tol=1e-9),
                          regularization=reg)

    def boom(system):
        raise SingularSystemError("synthetic pivot failure")

    monkeypatch.setattr(schemes, "factorize", boom)
    _, _, report = newton_iterate(forms, config, u_prev, u_prev, f_n)
    assert not report.converged
    assert report.failure_reason == "singular system"


def test_run_time_series_zero_problem():
    # f = 0, u0 = 0, g_D = 0: every step converges immediately to zero.
    mesh = build_structured_unit_square(2)
    forms0 = assemble_forms(mesh, 0.0)
    zero = np.zeros(forms0.num_cells)
    config = SchemeConfig(
        kind="hl", tau=0.05,
        stopping=StoppingCriterion(mode="against_reference", tol=1e-12),
        nonlinearity=HOLDER, L=19.0)
    refs = [(zero, np.zeros(forms0.num_edges))] * 10
    results = run_time_series(config, mesh, forms0, zero,
                              lambda tn, tp: zero, 10, references=refs)
    assert len(results) == 10  # tau = 0.05 over T = 0.5
    assert total_iterations(results) == 10
    for r in results:
        assert r.report.converged
        np.testing.assert_array_equal(r.u, 0.0)
        np.testing.assert_array_equal(r.q, 0.0)


def test_run_time_series_single_step_matches_direct_call(forms):
    tau = 0.4
    u_star, q_star, u_prev, f_n = _manufactured_linear_step(forms, seed=21)
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=StoppingCriterion(mode="against_reference",
                                                     tol=1e-9),
                          nonlinearity=LIPSCHITZ, L=1.0)
    series = run_time_series(config, forms.mesh, forms, u_prev,
                             lambda tn, tp: f_n, 1,
                             references=[(u_star, q_star)])
    u_direct, q_direct, rep = hl_iterate(
        forms, SchemeConfig(kind="hl", tau=tau,
                            stopping=_reference_stop(u_star, q_star, 1e-9),
                            nonlinearity=LIPSCHITZ, L=1.0),
        np.maximum(u_prev, 0.0), u_prev, f_n)
    assert len(series) == 1
    assert np.array_equal(series[0].u, u_direct)
    assert np.array_equal(series[0].q, q_direct)
    assert series[0].report.iterations_used == rep.iterations_used


def test_run_time_series_aborts_on_failure(forms):
    u_star, _, u_prev, f_n = _manufactured_linear_step(forms, seed=30)
    config = SchemeConfig(kind="hl", tau=0.4,
                          stopping=StoppingCriterion(mode="against_reference",
                                                     tol=1e-14),
                          nonlinearity=HOLDER, L=40.0, max_iterations=2)
    refs = [(u_star, None)] * 5
    results = run_time_series(config, forms.mesh, forms, u_prev,
                              lambda tn, tp: f_n, 5, references=refs)
    assert len(results) == 1
    assert not results[0].report.converged
    resumed = run_time_series(config, forms.mesh, forms, u_prev,
                              lambda tn, tp: f_n, 5, references=refs,
                              abort_on_failure=False)
    assert len(resumed) == 5


def test_custom_storage_bundle(forms):
    # The L-type driver accepts any monotone Lipschitz/Holder storage
    # function, not just the built-in power family.
    tau = 0.4
    rng = np.random.default_rng(14)
    u_star = rng.uniform(0.5, 1.5, size=forms.num_cells)
    u_prev = rng.uniform(0.5, 1.5, size=forms.num_cells)
    q_star = spla.spsolve(forms.flux_mass.tocsc(),
                          forms.divergence.T @ u_star
                          + forms.dirichlet_functional)
    f_n = ((np.tanh(u_star) - np.tanh(u_prev))
           + tau * (forms.divergence @ q_star) / forms.scalar_mass) / tau
    config = SchemeConfig(kind="hl", tau=tau,
                          stopping=_reference_stop(u_star, tol=1e-9),
                          nonlinearity=LIPSCHITZ, L=1.0)
    u, q, report = l_type_iterate(forms, config, np.tanh, np.tanh(u_prev),
                                  u_prev, f_n)
    assert report.converged
    np.testing.assert_allclose(u, u_star, atol=1e-8)
    np.testing.assert_allclose(q, q_star, atol=1e-7)


def test_mass_balance_residual_zero_for_exact_solution(forms):
    tau = 0.4
    u_star, q_star, u_prev, f_n = _manufactured_linear_step(forms, seed=2)
    res = mass_balance_residual(forms, np.maximum(u_star, 0.0),
                                np.maximum(u_prev, 0.0), q_star, tau, f_n)
    assert np.abs(res).max() < 1e-12


def test_theorem_bound_monitor_basics():
    consts = TheoryConstants(alpha=0.5)
    delta, tau = 1.0 / 19.0, 0.05
    # Starting from the reference, both sides reduce to the accumulation
    # term and the bound holds trivially.
    ok = theorem_bound_monitor([0.0, 0.0], [0.0], delta, tau, consts)
    assert ok == [True]
    # A genuinely contracted history passes ...
    hist_u = [0.05, 0.04, 0.032, 0.026]
    hist_q = [0.01, 0.008, 0.006]
    assert all(theorem_bound_monitor(hist_u, hist_q, delta, tau, consts))
    # ... and scaling one iterate by 10 must trip the monitor.
    bad = list(hist_u)
    bad[2] *= 10.0
    assert not all(theorem_bound_monitor(bad, hist_q, delta, tau, consts))
    with pytest.raises(ValueError):
        theorem_bound_monitor([0.1, 0.05], [0.1, 0.1], delta, tau, consts)
