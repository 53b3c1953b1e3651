"""Exact two-SP equilibrium under uniformly distributed risk tolerance.

With linear cost ``c v + c lam eps`` and revenue ``r eps + p`` the
three-stage game solves in closed form. SP 2 is the one labelled as the
high-risk provider by the caller (conventionally the one with larger
``p``); nothing here reorders ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import (
    DegenerateDifferentiation,
    EquilibriumOutcome,
    FeasibilityReport,
    MarketParams,
    StrategyProfile,
)

__all__ = [
    "ClosedFormSolution",
    "derived_constants",
    "check_feasibility",
    "solve_theorem1",
    "stage2_qos",
    "stage1_reduced_profits",
    "stage1_foc_residuals",
    "stage1_dominated_factors",
    "profits_c_tilde_form",
]


def _two_sp(params: MarketParams):
    if params.m != 2:
        raise ValueError(f"closed form needs exactly 2 SPs, got {params.m}")
    return params.p[0], params.p[1]


def derived_constants(params: MarketParams):
    """Return ``(alpha, c_tilde)`` = ``(r/c - lam, c t eps_bar)``."""
    return params.alpha, params.c_tilde


def check_feasibility(params: MarketParams) -> FeasibilityReport:
    """Evaluate the three sufficient conditions for the closed-form equilibrium."""
    p1, p2 = _two_sp(params)
    c, t, eb = params.c, params.t, params.eps_bar
    alpha = params.alpha
    ratio = 16.0 * (p2 - p1) / (9.0 * c * t * eb)

    share_margin = min(ratio + 1.0, 1.0 - ratio)
    lo = (4.0 * alpha - 3.0 * t) / (3.0 * t)
    hi = (4.0 * alpha - t) / (3.0 * t)
    eps_margins = (ratio - lo, hi - ratio)

    lhs = (12.0 * c * alpha * eb) ** 2 - (15.0 * c * t * eb) ** 2 + 288.0 * c * t * eb * (p2 + p1)
    rhs = (16.0 * (p2 - p1)) ** 2
    return FeasibilityReport(
        ratio=ratio,
        cond_share=share_margin >= 0.0,
        share_margin=share_margin,
        cond_eps=min(eps_margins) >= 0.0,
        eps_margins=eps_margins,
        eps_band=(lo, hi),
        cond_coverage=lhs >= rhs,
        coverage_margin=lhs - rhs,
        coverage_lhs=lhs,
        coverage_rhs=rhs,
    )


@dataclass(frozen=True)
class ClosedFormSolution:
    eps1: float
    eps2: float
    v1: float
    v2: float
    x_tau: float
    pi1: float
    pi2: float
    alpha: float
    c_tilde: float
    feasibility: FeasibilityReport

    @property
    def profile(self) -> StrategyProfile:
        return StrategyProfile.from_arrays([self.eps1, self.eps2], [self.v1, self.v2])

    def to_outcome(self) -> EquilibriumOutcome:
        warnings = ()
        if not self.feasibility.all_feasible:
            warnings = tuple(f"infeasible: {name} condition violated"
                             for name in self.feasibility.failed())
        return EquilibriumOutcome(
            profile=self.profile,
            shares=(self.x_tau, 1.0 - self.x_tau),
            profits=(self.pi1, self.pi2),
            thresholds=(self.x_tau,),
            method="closed_form",
            converged=True,
            iterations=0,
            feasibility=self.feasibility,
            warnings=warnings,
        )


def solve_theorem1(params: MarketParams) -> ClosedFormSolution:
    """Closed-form two-SP equilibrium.

    Infeasible parameters still yield the algebraic solution; check
    ``solution.feasibility.all_feasible``.
    """
    p1, p2 = _two_sp(params)
    c, t, eb = params.c, params.t, params.eps_bar
    alpha, c_tilde = derived_constants(params)
    d = p2 - p1

    eps2 = (12.0 * eb * c * alpha + 15.0 * c * t * eb - 16.0 * d) / (24.0 * t * c)
    v2 = ((2.0 * alpha + t) * c * alpha * 6.0 * eb
          + (alpha - t) * 9.0 * c * t * eb
          + (t - 2.0 * alpha) * 8.0 * p2
          + (alpha + t) * 16.0 * p1) / (24.0 * c * t)
    eps1 = eps2 - 0.75 * eb
    v1 = v2 - 0.75 * eb * alpha + d / (3.0 * c)

    x_tau = 0.5 - 8.0 * d / (9.0 * c * t * eb)
    scale = 4.0 * c / (27.0 * t * eb)
    pi1 = scale * (9.0 * t * eb / 8.0 - 2.0 * d / c) ** 2
    pi2 = scale * (9.0 * t * eb / 8.0 + 2.0 * d / c) ** 2
    return ClosedFormSolution(eps1, eps2, v1, v2, x_tau, pi1, pi2, alpha, c_tilde,
                              check_feasibility(params))


def profits_c_tilde_form(params: MarketParams):
    """Equilibrium profits written through ``c_tilde`` alone: ``(pi1, pi2)``."""
    p1, p2 = _two_sp(params)
    ct = params.c_tilde
    root = np.sqrt(ct)
    a = 0.75 * root
    b = 4.0 * (p2 - p1) / (3.0 * root)
    return (a - b) ** 2 / 3.0, (a + b) ** 2 / 3.0


def _check_order(params, eps1, eps2):
    if eps2 - eps1 < params.gap_min:
        raise DegenerateDifferentiation(
            f"need eps1 < eps2 separated by {params.gap_min:g}, got {eps1!r}, {eps2!r}")


def stage2_qos(params: MarketParams, eps1: float, eps2: float):
    """Stage-2 Nash QoS pair for fixed risks ``eps1 < eps2`` (uniform tolerance)."""
    p1, p2 = _two_sp(params)
    _check_order(params, eps1, eps2)
    c, t, r, lam, eb = params.c, params.t, params.r, params.lam, params.eps_bar
    x1, x2 = eps1 / eb, eps2 / eb
    rev1, rev2 = r * eps1 + p1, r * eps2 + p2
    v1 = ((2.0 * rev1 + rev2) / (3.0 * c)
          + (t * (1.0 + x1) * eps1 - lam * (eps2 + 2.0 * eps1) - t * (1.0 + x2) * eps2) / 3.0)
    v2 = ((2.0 * rev2 + rev1) / (3.0 * c)
          + (t * (2.0 - x1) * eps1 - lam * (2.0 * eps2 + eps1) - t * (2.0 - x2) * eps2) / 3.0)
    return v1, v2


def stage1_dominated_factors(params: MarketParams, eps1: float, eps2: float):
    """The squared brackets of the reduced profits, ``(sp1_factor, sp2_factor)``.

    Each reduced profit is ``c / (9 t gap) * factor**2``, so a zero factor
    means zero profit; those FOC roots are dominated.
    """
    p1, p2 = _two_sp(params)
    _check_order(params, eps1, eps2)
    t, eb, alpha = params.t, params.eps_bar, params.alpha
    gap = eps2 - eps1
    dc = (p2 - p1) / params.c
    f2 = (alpha + t * (2.0 * eb - eps2 - eps1) / eb) * gap + dc
    f1 = (-alpha + t * (eb + eps2 + eps1) / eb) * gap - dc
    return f1, f2


def stage1_reduced_profits(params: MarketParams, eps1: float, eps2: float):
    """Profits as functions of the risks alone, QoS at its stage-2 equilibrium."""
    f1, f2 = stage1_dominated_factors(params, eps1, eps2)
    k = params.c / (9.0 * params.t * (eps2 - eps1))
    return k * f1 ** 2, k * f2 ** 2


def stage1_foc_residuals(params: MarketParams, eps1: float, eps2: float):
    """Non-dominated first-order conditions ``(res1, res2)``; zero at equilibrium.

    ``d pi_i / d eps_i = c * factor_i * res_i / (9 t gap**2)`` with ``factor_i``
    from :func:`stage1_dominated_factors`.
    """
    p1, p2 = _two_sp(params)
    _check_order(params, eps1, eps2)
    t, eb, alpha = params.t, params.eps_bar, params.alpha
    gap = eps2 - eps1
    dc = (p2 - p1) / params.c
    res2 = (alpha + t * (2.0 * eb - 3.0 * eps2 + eps1) / eb) * gap - dc
    res1 = (alpha - t * (eb - eps2 + 3.0 * eps1) / eb) * gap - dc
    return res1, res2
