"""Time-step drivers for the three linear iterative schemes.

Each backward Euler step requires solving the nonlinear system

    <b(u^n) - b(u^{n-1}), w> + tau <div q^n, w> = tau <f^n, w>,
    <q^n, v> - <u^n, div v> = -<g_D, v.n>_boundary,

and the schemes differ only in how the storage term is linearized at
iteration i:

* ``hl``     : L (u^i - u^{i-1}) + b(u^{i-1}) with the raw Holder b and
               L = 1/delta chosen from the target tolerance;
* ``lreg``   : the same with b replaced by the regularized b_eps
               everywhere (including b_eps(u^{n-1}) on the right) and
               L >= Lipschitz(b_eps)/2;
* ``newton`` : b_eps(u^{i-1}) + b'_eps(u^{i-1})(u^i - u^{i-1}), which
               makes the scalar block iteration-dependent.

The L-type schemes keep one matrix factorization for all iterations of
all time steps; Newton reassembles and refactorizes every iteration.
The source functional <f, w> is carried on the right-hand side of every
scheme.

Stopping is either ``against_reference`` (L2 distance of the scalar
iterate to a supplied reference field drops below TOL; flux error is
recorded but not used to stop) or ``increment`` (both the absolute sum
||du|| + ||dq|| and the relative sum ||du||/||u|| + ||dq||/||q|| drop
below TOL).  Non-convergence is reported, never raised: exceeding the
iteration cap, error blow-up past the divergence threshold, and singular
Newton systems are distinguished in ``IterationReport.failure_reason``.

A single time series is strictly sequential; distinct runs are
independent and may execute in parallel against shared read-only forms.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from degenmfem.fem import AssembledForms, l2_norm_flux, l2_norm_scalar
from degenmfem.linear_system import (
    SingularSystemError,
    assemble,
    factorize,
    solve,
)
from degenmfem.nonlinearity import (
    NonlinearitySpec,
    RegularizationSpec,
    b_eps,
    b_eps_prime,
    b_value,
)
from degenmfem.theory import (
    TheoryConstants,
    contraction_factor,
    per_iteration_accumulation,
)

SCHEME_KINDS = ("hl", "lreg", "newton")

DEFAULT_MAX_ITERATIONS = {"hl": 20_000, "lreg": 20_000, "newton": 50}


@dataclass(frozen=True)
class StoppingCriterion:
    """Stopping rule for one time step's iteration.

    mode : "against_reference" or "increment"
    tol : the threshold TOL
    reference : scalar reference field (against_reference mode); may be
        filled in per time step by the series driver
    flux_reference : optional flux reference, only used to record the
        flux error history
    """

    mode: str
    tol: float
    reference: np.ndarray | None = None
    flux_reference: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("against_reference", "increment"):
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection and iteration parameters.

    kind : "hl", "lreg" or "newton"
    tau : time-step size
    stopping : StoppingCriterion
    nonlinearity : the raw Holder nonlinearity (hl only)
    regularization : the regularized nonlinearity (lreg and newton)
    L : stabilization parameter (hl and lreg)
    max_iterations : per-time-step cap; defaults to 50 for Newton and
        20000 for the L-type schemes
    divergence_threshold : error norms beyond this (or non-finite) abort
        the step with failure_reason "divergence"
    """

    kind: str
    tau: float
    stopping: StoppingCriterion
    nonlinearity: NonlinearitySpec | None = None
    regularization: RegularizationSpec | None = None
    L: float | None = None
    max_iterations: int | None = None
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"kind must be one of {SCHEME_KINDS}, got {self.kind!r}")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.kind == "hl":
            if self.nonlinearity is None:
                raise ValueError("hl scheme requires a nonlinearity")
            if self.regularization is not None:
                raise ValueError("hl scheme does not regularize")
            if self.L is None or self.L <= 0.0:
                raise ValueError("hl scheme requires L > 0")
        else:
            if self.regularization is None:
                raise ValueError(f"{self.kind} scheme requires a regularization")
            if self.kind == "lreg" and (self.L is None or self.L <= 0.0):
                raise ValueError("lreg scheme requires L > 0")
            if self.kind == "newton" and self.L is not None:
                raise ValueError("newton scheme takes no L")

    def resolved_max_iterations(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return DEFAULT_MAX_ITERATIONS[self.kind]

    def storage_function(self):
        """The storage nonlinearity the scheme iterates on."""
        if self.kind == "hl":
            spec = self.nonlinearity
            return lambda u: b_value(spec, u)
        reg = self.regularization
        return lambda u: b_eps(reg, u)


@dataclass
class IterationReport:
    """Outcome of one time step's iteration."""

    iterations_used: int
    converged: bool
    failure_reason: str | None = None
    error_history: list = field(default_factory=list)
    flux_error_history: list | None = None

    def __post_init__(self):
        if self.converged and self.failure_reason is not None:
            raise ValueError("a converged report cannot carry a failure reason")


@dataclass
class TimeStepResult:
    step: int
    t: float
    u: np.ndarray
    q: np.ndarray
    report: IterationReport


class _Stopping:
    """Tracks errors/increments and decides convergence and divergence."""

    def __init__(self, forms, criterion, divergence_threshold):
        self.forms = forms
        self.mesh = forms.mesh
        self.crit = criterion
        self.threshold = divergence_threshold
        self.error_history = []
        self.flux_error_history = (
            [] if (criterion.mode == "against_reference"
                   and criterion.flux_reference is not None) else None
        )
        if criterion.mode == "against_reference" and criterion.reference is None:
            raise ValueError("against_reference stopping needs a reference field")

    def record_initial(self, u):
        if self.crit.mode == "against_reference":
            self.error_history.append(
                l2_norm_scalar(self.mesh, u - self.crit.reference))

    def update(self, u_new, q_new, u_old, q_old):
        """Returns (converged, diverged) after recording iterate i."""
        if self.crit.mode == "against_reference":
            err = l2_norm_scalar(self.mesh, u_new - self.crit.reference)
            self.error_history.append(err)
            if self.flux_error_history is not None:
                self.flux_error_history.append(
                    l2_norm_flux(self.forms, q_new - self.crit.flux_reference))
            if not math.isfinite(err) or err > self.threshold:
                return False, True
            return err < self.crit.tol, False

        du = l2_norm_scalar(self.mesh, u_new - u_old)
        if q_old is None:
            # No previous flux yet; increments start at the second solve.
            return False, not np.all(np.isfinite(u_new))
        dq = l2_norm_flux(self.forms, q_new - q_old)
        abs_sum = du + dq
        self.error_history.append(abs_sum)
        if not math.isfinite(abs_sum) or abs_sum > self.threshold:
            return False, True
        norm_u = l2_norm_scalar(self.mesh, u_new)
        norm_q = l2_norm_flux(self.forms, q_new)
        rel_u = du / norm_u if norm_u > 0.0 else (0.0 if du == 0.0 else math.inf)
        rel_q = dq / norm_q if norm_q > 0.0 else (0.0 if dq == 0.0 else math.inf)
        return abs_sum < self.crit.tol and rel_u + rel_q < self.crit.tol, False


def _finish(tracker, iterations, converged, reason):
    return IterationReport(
        iterations_used=iterations,
        converged=converged,
        failure_reason=None if converged else reason,
        error_history=tracker.error_history,
        flux_error_history=tracker.flux_error_history,
    )


def l_type_iterate(forms, config, storage_fn, storage_prev, u_init, f_n,
                   system=None, fact=None):
    """One time step of an L-stabilized iteration with a caller-supplied
    storage function.

    ``storage_fn`` may be any monotone increasing, Holder continuous
    storage nonlinearity evaluated per cell (the hl and lreg drivers pass
    the built-in power law and its regularization); ``storage_prev``
    holds its values at the previous time-step solution.  The stabilized
    system (weights L, step tau) is assembled and factorized once unless
    supplied.
    """
    if system is None:
        system = assemble(forms, config.L, config.tau)
    if fact is None:
        fact = factorize(system)
    areas = forms.scalar_mass
    big_l, tau = config.L, config.tau
    base = areas * (np.asarray(storage_prev, dtype=float) + tau * np.asarray(f_n, dtype=float))
    rhs_flux = forms.dirichlet_functional

    tracker = _Stopping(forms, config.stopping, config.divergence_threshold)
    u = np.array(u_init, dtype=float, copy=True)
    q = None
    tracker.record_initial(u)

    converged = False
    reason = "max_iterations"
    iterations = 0
    for i in range(1, config.resolved_max_iterations() + 1):
        rhs_scalar = areas * (big_l * u - storage_fn(u)) + base
        u_new, q_new = solve(fact, rhs_scalar, rhs_flux, check_against=system)
        iterations = i
        converged, diverged = tracker.update(u_new, q_new, u, q)
        u, q = u_new, q_new
        if diverged:
            reason = "divergence"
            break
        if converged:
            break

    if q is None:  # max_iterations == 0 edge case
        raise ValueError("at least one iteration is required")
    return u, q, _finish(tracker, iterations, converged, reason)


def hl_iterate(forms, config, b_prev, u_init, f_n, system=None, fact=None):
    """One time step of the Holder-adapted L-scheme (no regularization).

    Parameters
    ----------
    forms : AssembledForms
    config : SchemeConfig with kind "hl"
    b_prev : per-cell values of b(u^{n-1})
    u_init : initial iterate, normally the previous time-step solution
    f_n : per-cell source density at the new time level
    system, fact : optional preassembled saddle system and factorization
        (weights L, step tau), reused across time steps by the series
        driver

    Returns
    -------
    (u, q, IterationReport)
    """
    if config.kind != "hl":
        raise ValueError(f"expected an hl config, got {config.kind!r}")
    spec = config.nonlinearity
    return l_type_iterate(forms, config, lambda u: b_value(spec, u),
                           b_prev, u_init, f_n, system, fact)


def regularized_l_iterate(forms, config, beps_prev, u_init, f_n,
                          system=None, fact=None):
    """One time step of the standard L-scheme on the regularized problem.

    Identical loop to ``hl_iterate`` with b replaced by b_eps everywhere;
    ``beps_prev`` holds the per-cell values of b_eps(u^{n-1}).
    """
    if config.kind != "lreg":
        raise ValueError(f"expected an lreg config, got {config.kind!r}")
    reg = config.regularization
    return l_type_iterate(forms, config, lambda u: b_eps(reg, u),
                           beps_prev, u_init, f_n, system, fact)


def newton_iterate(forms, config, beps_prev, u_init, f_n):
    """One time step of the Newton scheme on the regularized problem.

    The scalar block carries the per-cell weights b'_eps(u^{i-1}), so the
    system is reassembled and refactorized every iteration.  A singular
    factorization is reported as non-convergence, not raised.
    """
    if config.kind != "newton":
        raise ValueError(f"expected a newton config, got {config.kind!r}")
    reg = config.regularization
    areas = forms.scalar_mass
    tau = config.tau
    base = areas * (np.asarray(beps_prev, dtype=float) + tau * np.asarray(f_n, dtype=float))
    rhs_flux = forms.dirichlet_functional

    tracker = _Stopping(forms, config.stopping, config.divergence_threshold)
    u = np.array(u_init, dtype=float, copy=True)
    q = np.zeros(forms.num_edges)
    tracker.record_initial(u)

    converged = False
    reason = "max_iterations"
    iterations = 0
    q_prev = None
    for i in range(1, config.resolved_max_iterations() + 1):
        weights = b_eps_prime(reg, u)
        try:
            system = assemble(forms, weights, tau)
            fact = factorize(system)
            rhs_scalar = areas * (weights * u - b_eps(reg, u)) + base
            u_new, q_new = solve(fact, rhs_scalar, rhs_flux, check_against=system)
        except SingularSystemError:
            iterations = i
            reason = "singular system"
            break
        iterations = i
        converged, diverged = tracker.update(u_new, q_new, u, q_prev)
        u, q, q_prev = u_new, q_new, q_new
        if diverged:
            reason = "divergence"
            break
        if converged:
            break

    return u, q, _finish(tracker, iterations, converged, reason)


def run_time_series(config, mesh, forms, u0, source_fn, n_steps,
                    references=None, abort_on_failure=True):
    """March n_steps backward Euler steps of constant size tau.

    Each step feeds the previous solution as the initial guess and as
    the b(u^{n-1}) right-hand-side term.  ``source_fn(t_n, t_prev)``
    must return the per-cell source density for the step ending at t_n.
    For against_reference stopping, ``references`` supplies one
    (u_ref, q_ref) pair per step unless the criterion already carries a
    reference.

    By default the series aborts at the first non-converged step (the
    whole run is then reported nc by the benchmark); pass
    ``abort_on_failure=False`` to continue regardless.

    Returns a list of TimeStepResult, one per executed step.
    """
    if config.stopping.mode == "against_reference" and references is None \
            and config.stopping.reference is None:
        raise ValueError("series with against_reference stopping needs "
                         "per-step references")
    if references is not None and len(references) < n_steps:
        raise ValueError(f"need {n_steps} references, got {len(references)}")

    storage_fn = config.storage_function()

    system = fact = None
    if config.kind in ("hl", "lreg"):
        system = assemble(forms, config.L, config.tau)
        fact = factorize(system)

    results = []
    u_prev = np.asarray(u0, dtype=float)
    for n in range(1, n_steps + 1):
        t_n = n * config.tau
        t_prev = (n - 1) * config.tau
        f_n = source_fn(t_n, t_prev)
        storage_prev = storage_fn(u_prev)

        step_config = config
        if references is not None:
            u_ref, q_ref = references[n - 1]
            step_config = replace(
                config,
                stopping=replace(config.stopping, reference=u_ref,
                                 flux_reference=q_ref),
            )

        if config.kind == "hl":
            u, q, report = hl_iterate(forms, step_config, storage_prev,
                                      u_prev, f_n, system, fact)
        elif config.kind == "lreg":
            u, q, report = regularized_l_iterate(forms, step_config,
                                                 storage_prev, u_prev, f_n,
                                                 system, fact)
        else:
            u, q, report = newton_iterate(forms, step_config, storage_prev,
                                          u_prev, f_n)

        results.append(TimeStepResult(n, t_n, u, q, report))
        if not report.converged and abort_on_failure:
            break
        u_prev = u
    return results


def total_iterations(results) -> int:
    return sum(r.report.iterations_used for r in results)


def series_converged(results, n_steps) -> bool:
    return len(results) == n_steps and all(r.report.converged for r in results)


def theorem_bound_monitor(u_errors, flux_errors, delta, tau,
                          consts: TheoryConstants, slack=1e-7):
    """Check the one-iteration error inequality along a recorded history.

    ``u_errors`` holds the scalar error norms against the reference for
    the initial guess and every iterate (length k+1); ``flux_errors``
    holds the flux error norms of the iterates (length k).  Iteration i
    satisfies the bound when

        e_u[i]^2 + tau delta R e_q[i]^2
            <= R e_u[i-1]^2 + 2 C(alpha) R delta^(2/(1-alpha)) + slack,

    the absolute slack absorbing the reference-solution error.  Returns
    one boolean per iteration; violations are reported, not raised.
    """
    if len(flux_errors) != len(u_errors) - 1:
        raise ValueError("flux_errors must have one entry per iteration")
    r = contraction_factor(delta, tau, consts)
    accumulation = per_iteration_accumulation(delta, tau, consts)
    checks = []
    for i in range(1, len(u_errors)):
        lhs = u_errors[i] ** 2 + tau * delta * r * flux_errors[i - 1] ** 2
        rhs = r * u_errors[i - 1] ** 2 + accumulation + slack
        checks.append(bool(lhs <= rhs))
    return checks


def mass_balance_residual(forms: AssembledForms, storage_new, storage_prev,
                          q, tau, f_n):
    """Per-cell balance  |T| (b_new - b_prev) + tau (B q)_T - tau |T| f_T.

    Zero for the exact solution of the discrete step; for a scheme's
    converged iterate it sits at the stopping-residual scale.  The
    storage values must come from the nonlinearity the scheme actually
    iterated on (b or b_eps).
    """
    areas = forms.scalar_mass
    return (
        areas * (np.asarray(storage_new) - np.asarray(storage_prev))
        + tau * (forms.divergence @ np.asarray(q))
        - tau * areas * np.asarray(f_n)
    )
