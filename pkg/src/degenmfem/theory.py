"""Convergence-theory quantities for the Holder-adapted L-scheme.

For the fixed-point iteration with stabilization L = 1/delta, the error
at iteration i satisfies

    ||e_u^i||^2 + tau delta R ||e_q^i||^2
        <= R ||e_u^{i-1}||^2 + 2 C(alpha) R delta^(2/(1-alpha)),

with contraction factor R(delta, tau) = (1 + tau delta / C_Omega^2)^-1.
The additive term accumulates over the iterations of one time step to at
most

    2 C(alpha) delta^(2/(1-alpha)) R / (1 - R)
        = 2 C(alpha) C_Omega^2 delta^((1+alpha)/(1-alpha)) / tau,

so requiring this to stay below TOL/2 yields a closed form for delta
(and L = 1/delta) from the target tolerance and the time step.  For the
unit-square benchmark C_Omega = sigma(Omega) = 1, and for alpha = 1/2
the selection reduces to delta = (3/2) (tau TOL)^(1/3).

All functions here are pure and thread-safe.
"""

import math
from dataclasses import dataclass

from degenmfem.nonlinearity import NonlinearitySpec


@dataclass(frozen=True)
class TheoryConstants:
    """Domain and nonlinearity constants entering the error bound.

    c_omega : the inf-sup/Poincare-type constant of the domain
    sigma_omega : the domain volume
    alpha, holder_constant : copied from the nonlinearity
    """

    alpha: float
    holder_constant: float = 1.0
    c_omega: float = 1.0
    sigma_omega: float = 1.0

    def __post_init__(self):
        if self.c_omega <= 0.0 or self.sigma_omega <= 0.0:
            raise ValueError("c_omega and sigma_omega must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.holder_constant <= 0.0:
            raise ValueError("holder_constant must be positive")

    @classmethod
    def for_unit_square(cls, spec: NonlinearitySpec) -> "TheoryConstants":
        return cls(alpha=spec.alpha, holder_constant=spec.holder_constant)


def contraction_factor(delta: float, tau: float, consts: TheoryConstants) -> float:
    """Per-iteration contraction factor R = (1 + tau delta / C^2)^-1."""
    if delta <= 0.0 or tau <= 0.0:
        raise ValueError("delta and tau must be positive")
    return 1.0 / (1.0 + tau * delta / consts.c_omega**2)


def c_alpha(consts: TheoryConstants) -> float:
    """The constant multiplying the accumulation term,

    C(alpha) = (1-alpha)/2 (L_b (2 alpha)^alpha)^(2/(1-alpha))
               (1+alpha)^(-(1+alpha)/(1-alpha)) sigma(Omega).

    Only defined for alpha < 1 (the Lipschitz case has no accumulation).
    """
    a, lb = consts.alpha, consts.holder_constant
    if a >= 1.0:
        raise ValueError("c_alpha requires alpha in (0, 1)")
    return (
        0.5 * (1.0 - a)
        * (lb * (2.0 * a) ** a) ** (2.0 / (1.0 - a))
        * (1.0 + a) ** (-(1.0 + a) / (1.0 - a))
        * consts.sigma_omega
    )


def accumulated_error_bound(delta: float, tau: float, consts: TheoryConstants) -> float:
    """Total accumulated squared-error floor within one time step,

    2 C(alpha) delta^(2/(1-alpha)) R/(1-R)
        = 2 C(alpha) C^2 delta^((1+alpha)/(1-alpha)) / tau.
    """
    if delta <= 0.0 or tau <= 0.0:
        raise ValueError("delta and tau must be positive")
    a = consts.alpha
    exponent = (1.0 + a) / (1.0 - a)
    return 2.0 * c_alpha(consts) * consts.c_omega**2 * delta**exponent / tau


def per_iteration_accumulation(delta: float, tau: float,
                               consts: TheoryConstants) -> float:
    """The additive term 2 C(alpha) R delta^(2/(1-alpha)) of one iteration."""
    a = consts.alpha
    r = contraction_factor(delta, tau, consts)
    return 2.0 * c_alpha(consts) * r * delta ** (2.0 / (1.0 - a))


def _ceil_guarded(value: float) -> int:
    # Guard one-ulp overshoot so exact integers are not bumped up.
    return int(math.ceil(value - 1e-9 * max(1.0, abs(value))))


def delta_closed_form(tol: float, tau: float, consts: TheoryConstants) -> float:
    """Solve accumulated_error_bound(delta) = TOL/2 for delta,

    delta = (TOL tau / (4 C(alpha) C^2))^((1-alpha)/(1+alpha)).
    """
    if tol <= 0.0 or tau <= 0.0:
        raise ValueError("tol and tau must be positive")
    a = consts.alpha
    if a >= 1.0:
        raise ValueError("delta selection requires alpha in (0, 1); any "
                         "L >= L_b works in the Lipschitz case")
    return (
        tol * tau / (4.0 * c_alpha(consts) * consts.c_omega**2)
    ) ** ((1.0 - a) / (1.0 + a))


def select_delta(tol: float, tau: float, consts: TheoryConstants):
    """Choose (delta, L) so the accumulated error stays below TOL/2.

    Uses the closed form for delta, then rounds L = 1/delta up to the
    next integer, which restores the strict inequality; the returned
    delta is 1/L.  For alpha = 1/2 the closed form is
    delta = (3/2) (tau TOL)^(1/3).

    Returns
    -------
    (delta, L) : (float, int)
    """
    delta_raw = delta_closed_form(tol, tau, consts)
    big_l = _ceil_guarded(1.0 / delta_raw)
    return 1.0 / big_l, big_l


def select_L_regularized(epsilon: float, spec: NonlinearitySpec) -> int:
    """Stabilization for the regularized L-scheme, ceil(eps^(alpha-1) / 2).

    Half the Lipschitz constant of b_eps is the convergence threshold of
    the scheme, rounded up to an integer.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return _ceil_guarded(0.5 * epsilon ** (spec.alpha - 1.0))
