"""Backward-induction equilibria for any tolerance law and any number of SPs.

Stage 2 (QoS for fixed risks) is linear: the first-order conditions form a
tridiagonal system over the risk-sorted SPs. Stage 1 (risks) is searched by
round-robin best responses, each a grid scan plus golden-section polish.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import closed_form
from .market import (
    DegenerateDifferentiation,
    EquilibriumOutcome,
    MarketParams,
    RiskDistribution,
    StrategyProfile,
    _check_dist,
    cdf,
    evaluate_profiles,
    market_thresholds,
)

__all__ = [
    "SolverConfig",
    "Stage2System",
    "Stage2Solution",
    "BestResponseTrace",
    "NotAnEquilibrium",
    "SingularSystem",
    "EmptyDomain",
    "initial_profile",
    "solve_tridiagonal",
    "stage2_system",
    "stage2_solve",
    "stage1_profits",
    "golden_section_max",
    "best_response_eps",
    "iterate_best_response",
    "solve_spne",
]

log = logging.getLogger(__name__)

CONVERGED = "Converged"
OSCILLATING = "Oscillating"
MAX_ITERS = "MaxIters"


class SingularSystem(ArithmeticError):
    pass


class EmptyDomain(ValueError):
    pass


class NotAnEquilibrium(RuntimeError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


INITIAL_RULES = ("by_revenue", "spread")


def initial_profile(params: MarketParams, rule: str = "by_revenue") -> tuple:
    """Starting risks for the best-response iteration."""
    m, eb = params.m, params.eps_bar
    if rule == "spread":
        return tuple(i * eb / (i + 1) for i in range(1, m + 1))
    if rule == "by_revenue":
        rank = np.argsort(np.asarray(params.p), kind="stable")
        eps = np.empty(m)
        eps[rank] = np.linspace(0.0, eb, m)
        return tuple(float(e) for e in eps)
    raise ValueError(f"unknown initial rule {rule!r}")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the stage-1 search.

    ``eps_tol`` and ``gap_min`` default to ``1e-6 * eps_bar`` when left as
    None. ``initial_eps`` is an explicit risk vector or a rule name:
    ``"by_revenue"`` (default) spreads the SPs evenly over ``[0, eps_bar]``
    in increasing order of ``p``; ``"spread"`` puts SP ``i`` (1-based) at
    ``i * eps_bar / (i + 1)``. ``damping`` in ``[0, 1)`` blends each new
    best response with the previous risk; 0 disables it.
    """

    eps_tol: Optional[float] = None
    max_iters: int = 200
    br_grid: int = 512
    br_refine_tol: float = 1e-8
    cycle_window: int = 50
    gap_min: Optional[float] = None
    initial_eps: object = "by_revenue"
    damping: float = 0.0
    stop_on_cycle: bool = True

    def __post_init__(self):
        if self.max_iters < 1 or self.cycle_window < 1:
            raise ValueError("max_iters and cycle_window must be positive")
        if self.br_grid < 8:
            raise ValueError("br_grid must be at least 8")
        if not self.br_refine_tol > 0:
            raise ValueError("br_refine_tol must be positive")
        for name in ("eps_tol", "gap_min"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if isinstance(self.initial_eps, str):
            if self.initial_eps not in INITIAL_RULES:
                raise ValueError(f"unknown initial rule {self.initial_eps!r}")
        elif self.initial_eps is not None:
            object.__setattr__(self, "initial_eps", tuple(float(e) for e in self.initial_eps))

    def resolved(self, params: MarketParams) -> "SolverConfig":
        eps_tol = self.eps_tol if self.eps_tol is not None else 1e-6 * params.eps_bar
        gap_min = self.gap_min if self.gap_min is not None else params.gap_min
        initial = self.initial_eps
        if initial is None or isinstance(initial, str):
            initial = initial_profile(params, initial or "by_revenue")
        if len(initial) != params.m:
            raise ValueError(f"initial_eps has {len(initial)} entries for {params.m} SPs")
        return replace(self, eps_tol=eps_tol, gap_min=gap_min, initial_eps=initial)


@dataclass
class BestResponseTrace:
    """History of a best-response run; one entry per completed round."""

    eps: list = field(default_factory=list)
    v: list = field(default_factory=list)
    profits: list = field(default_factory=list)
    initial_eps: tuple = ()
    termination: str = MAX_ITERS
    cycle_length: Optional[int] = None

    def __len__(self):
        return len(self.eps)

    def eps_array(self) -> np.ndarray:
        return np.array(self.eps)

    def rank_swaps(self, a: int, b: int) -> int:
        """How many times SPs ``a`` and ``b`` exchange risk order across rounds."""
        e = np.vstack([self.initial_eps] + list(self.eps)) if self.initial_eps else self.eps_array()
        sign = np.sign(e[:, a] - e[:, b])
        sign = sign[sign != 0]
        return int(np.count_nonzero(np.diff(sign)))


class Stage2System(NamedTuple):
    """Tridiagonal QoS first-order system for one risk-sorted profile."""

    order: np.ndarray
    delta: np.ndarray
    y: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray


class Stage2Solution(NamedTuple):
    v: np.ndarray
    feasible: bool


def solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas algorithm, batched over leading axes.

    ``diag`` and ``rhs`` have shape ``(..., n)``; ``lower`` and ``upper``
    have shape ``(..., n - 1)`` (sub- and super-diagonal).
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = diag.shape[-1]
    cp = np.empty(diag.shape[:-1] + (max(n - 1, 0),))
    dp = np.empty_like(rhs)
    denom = diag[..., 0]
    if np.any(denom == 0):
        raise SingularSystem("zero pivot")
    if n > 1:
        cp[..., 0] = upper[..., 0] / denom
    dp[..., 0] = rhs[..., 0] / denom
    for k in range(1, n):
        denom = diag[..., k] - lower[..., k - 1] * cp[..., k - 1]
        if np.any(denom == 0):
            raise SingularSystem("zero pivot")
        if k < n - 1:
            cp[..., k] = upper[..., k] / denom
        dp[..., k] = (rhs[..., k] - lower[..., k - 1] * dp[..., k - 1]) / denom
    x = np.empty_like(dp)
    x[..., n - 1] = dp[..., n - 1]
    for k in range(n - 2, -1, -1):
        x[..., k] = dp[..., k] - cp[..., k] * x[..., k + 1]
    return x


def _system_arrays(params, dist, eps):
    """Sorted tridiagonal system for a batch ``(..., m)`` of identity-ordered risks."""
    eps = np.asarray(eps, dtype=float)
    c, t = params.c, params.t
    order = np.argsort(eps, axis=-1, kind="stable")
    es = np.take_along_axis(eps, order, axis=-1)
    ps = np.asarray(params.p)[order]
    xs = np.asarray(cdf(dist, es))
    base = (params.r - c * params.lam) * es + ps
    gaps = np.diff(es, axis=-1)
    with np.errstate(divide="ignore"):
        delta = 1.0 / (t * gaps)
    xe = xs * es

    m = es.shape[-1]
    y = np.empty_like(es)
    y[..., 0] = base[..., 0] - c * t * xe[..., 1] + c * t * xe[..., 0]
    y[..., -1] = (base[..., -1] - c * t * (1.0 - xs[..., -1]) * es[..., -1]
                  + c * t * (1.0 - xs[..., -2]) * es[..., -2])
    if m > 2:
        d_hi, d_lo = delta[..., 1:], delta[..., :-1]
        mid = base[..., 1:-1]
        y[..., 1:-1] = (d_hi * (mid + c * t * xe[..., 1:-1] - c * t * xe[..., 2:])
                        + d_lo * (mid - c * t * xe[..., :-2] + c * t * xe[..., 1:-1]))

    diag = np.full_like(es, 2.0 * c)
    lower = np.full_like(gaps, -c)
    upper = np.full_like(gaps, -c)
    if m > 2:
        diag[..., 1:-1] = 2.0 * c * (delta[..., 1:] + delta[..., :-1])
        lower[..., :-1] = -c * delta[..., :-1]
        upper[..., 1:] = -c * delta[..., 1:]
    return Stage2System(order, delta, y, lower, diag, upper), gaps


def stage2_system(params: MarketParams, dist: RiskDistribution, eps: Sequence[float]) -> Stage2System:
    """The QoS first-order system for risks ``eps`` (identity order)."""
    _check_dist(params, dist)
    sys_, gaps = _system_arrays(params, dist, np.asarray(eps, dtype=float))
    if np.any(gaps < params.gap_min):
        raise DegenerateDifferentiation(f"risks {list(eps)} are not separated by {params.gap_min:g}")
    return sys_


def _stage2_batch(params, dist, eps, gap_min):
    """QoS equilibria for a batch of risk profiles; NaN rows where degenerate."""
    sys_, gaps = _system_arrays(params, dist, eps)
    bad = np.any(gaps < gap_min, axis=-1)
    if np.any(bad):
        # keep the solve finite, results masked below
        sys_ = sys_._replace(
            lower=np.where(bad[..., None], -params.c, sys_.lower),
            upper=np.where(bad[..., None], -params.c, sys_.upper),
            diag=np.where(bad[..., None], 2.0 * params.c, sys_.diag),
            y=np.where(bad[..., None], 0.0, sys_.y),
        )
    v_sorted = solve_tridiagonal(sys_.lower, sys_.diag, sys_.upper, sys_.y)
    v = np.empty_like(v_sorted)
    np.put_along_axis(v, sys_.order, v_sorted, axis=-1)
    if np.any(bad):
        v = np.where(bad[..., None], np.nan, v)
    return v


def stage2_solve(params: MarketParams, dist: RiskDistribution, eps: Sequence[float]) -> Stage2Solution:
    """Equilibrium QoS for fixed risks.

    ``eps`` is in SP identity order and may be in any risk order; the
    returned ``v`` is in the same identity order. ``feasible`` is False when
    some QoS is negative.
    """
    sys_ = stage2_system(params, dist, eps)
    v_sorted = solve_tridiagonal(sys_.lower, sys_.diag, sys_.upper, sys_.y)
    if not np.all(np.isfinite(v_sorted)):
        raise SingularSystem("non-finite QoS solution")
    v = np.empty_like(v_sorted)
    v[sys_.order] = v_sorted
    return Stage2Solution(v, bool(np.all(v >= 0.0)))


def stage1_profits(params: MarketParams, dist: RiskDistribution, eps, gap_min=None):
    """Profits after stage-2 QoS re-equilibrates, for a batch ``(..., m)`` of risks.

    Returns ``(profits, v)``. Rows with a negative QoS get profit ``-inf``
    for every SP; degenerate rows give NaN.
    """
    gap_min = params.gap_min if gap_min is None else gap_min
    eps = np.asarray(eps, dtype=float)
    v = _stage2_batch(params, dist, eps, gap_min)
    _, margins, profits = evaluate_profiles(params, dist, eps, v)
    infeasible = np.any(v < 0.0, axis=-1)
    profits = np.where(infeasible[..., None], -np.inf, profits)
    return profits, v


def golden_section_max(f, a: float, b: float, tol: float = 1e-8, max_iter: int = 200):
    """Maximize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def best_response_eps(params: MarketParams, dist: RiskDistribution, i: int,
                      eps_others: Sequence[float], cfg: Optional[SolverConfig] = None,
                      return_profit: bool = False):
    """Profit-maximizing risk of SP ``i`` with the other risks held fixed.

    ``eps_others`` is a full length-m risk vector; entry ``i`` is ignored.
    Every candidate re-solves stage 2 for all SPs, and SP ``i`` may jump
    past its rivals.
    """
    _check_dist(params, dist)
    cfg = (cfg or SolverConfig()).resolved(params)
    base = np.array(eps_others, dtype=float)
    if base.shape != (params.m,):
        raise ValueError(f"expected {params.m} risks, got {base.shape}")
    others = np.delete(base, i)
    eb, gap = params.eps_bar, cfg.gap_min

    grid = np.linspace(0.0, eb, cfg.br_grid)
    keep = np.all(np.abs(grid[:, None] - others[None, :]) >= gap, axis=1)
    grid = grid[keep]
    if grid.size == 0:
        raise EmptyDomain("every candidate risk collides with a rival")

    batch = np.repeat(base[None, :], grid.size, axis=0)
    batch[:, i] = grid
    prof, _ = stage1_profits(params, dist, batch, gap)
    scores = np.nan_to_num(prof[:, i], nan=-np.inf)
    k = int(np.argmax(scores))
    best_x, best_f = float(grid[k]), float(scores[k])
    if not np.isfinite(best_f):
        return (best_x, best_f) if return_profit else best_x

    step = eb / (cfg.br_grid - 1)
    lo, hi = max(best_x - step, 0.0), min(best_x + step, eb)
    # stay on the same side of every rival as the grid winner
    for e in others:
        if e < best_x:
            lo = max(lo, e + gap)
        elif e > best_x:
            hi = min(hi, e - gap)

    def profit_at(x):
        row = base.copy()
        row[i] = x
        p, _ = stage1_profits(params, dist, row[None, :], gap)
        val = p[0, i]
        return val if np.isfinite(val) else -np.inf

    if hi - lo > cfg.br_refine_tol:
        x, fx = golden_section_max(profit_at, lo, hi, cfg.br_refine_tol)
        for cand in (lo, hi):
            fc = profit_at(cand)
            if fc > fx:
                x, fx = cand, fc
        if fx > best_f:
            best_x, best_f = float(x), float(fx)
    return (best_x, best_f) if return_profit else best_x


def _outcome(params, dist, eps, method, converged, iterations, warnings=(), trace=None):
    sol = stage2_solve(params, dist, eps)
    profile = StrategyProfile.from_arrays(eps, sol.v)
    shares, _, profits = evaluate_profiles(params, dist, profile.eps, profile.v)
    warnings = tuple(warnings)
    if not sol.feasible:
        warnings += ("negative stage-2 QoS at final profile",)
    return EquilibriumOutcome(
        profile=profile,
        shares=tuple(float(s) for s in shares),
        profits=tuple(float(p) for p in profits),
        thresholds=tuple(float(x) for x in market_thresholds(shares, profile.order())),
        method=method,
        converged=converged,
        iterations=iterations,
        warnings=warnings,
        trace=trace,
    )


def iterate_best_response(params: MarketParams, dist: RiskDistribution,
                          cfg: Optional[SolverConfig] = None):
    """Round-robin best responses in risk until a fixed point or a cycle.

    Returns ``(outcome, trace)``. A round updates SPs in index order, each
    against the latest risks of the others, then re-solves stage 2.
    """
    _check_dist(params, dist)
    cfg = (cfg or SolverConfig()).resolved(params)
    eps = np.array(cfg.initial_eps, dtype=float)
    trace = BestResponseTrace(initial_eps=tuple(eps))
    history = [eps.copy()]
    converged = False

    for it in range(1, cfg.max_iters + 1):
        prev = eps.copy()
        for i in range(params.m):
            target = best_response_eps(params, dist, i, eps, cfg)
            if cfg.damping:
                target = cfg.damping * eps[i] + (1.0 - cfg.damping) * target
            eps[i] = target
        sol = stage2_solve(params, dist, eps)
        _, _, profits = evaluate_profiles(params, dist, eps, sol.v)
        trace.eps.append(eps.copy())
        trace.v.append(sol.v.copy())
        trace.profits.append(profits.copy())

        if np.max(np.abs(eps - prev)) < cfg.eps_tol:
            converged = True
            trace.termination = CONVERGED
            break
        if trace.cycle_length is None:
            # skip the previous round: matching it is convergence, not a cycle
            window = history[-cfg.cycle_window:-1] if len(history) > 1 else []
            for back, old in enumerate(reversed(window), start=2):
                if np.max(np.abs(eps - old)) < cfg.eps_tol:
                    trace.cycle_length = back
                    log.debug("cycle of length %d detected at round %d", back, it)
                    break
            if trace.cycle_length is not None:
                trace.termination = OSCILLATING
                if cfg.stop_on_cycle:
                    break
        history.append(eps.copy())

    if not converged and trace.cycle_length is None:
        trace.termination = MAX_ITERS
    outcome = _outcome(params, dist, eps, "numeric", converged, len(trace), trace=trace)
    return outcome, trace


def solve_spne(params: MarketParams, dist: RiskDistribution,
               cfg: Optional[SolverConfig] = None, certify: bool = False,
               cert_grid=(400, 400), cert_tol: float = 1e-3) -> EquilibriumOutcome:
    """Equilibrium by the closed form where it applies, numerically otherwise.

    The closed form is used for two SPs, uniform tolerance and parameters
    meeting all sufficient conditions. With ``certify`` the result is checked
    against brute-force deviations and :class:`NotAnEquilibrium` is raised on
    failure.
    """
    _check_dist(params, dist)
    warnings = []
    feasibility = None
    outcome = None
    if params.m == 2 and dist.kind == "uniform":
        sol = closed_form.solve_theorem1(params)
        feasibility = sol.feasibility
        if feasibility.all_feasible:
            outcome = sol.to_outcome()
        else:
            warnings = [f"infeasible: {name} condition violated" for name in feasibility.failed()]
            log.warning("closed-form conditions fail (%s); solving numerically", ", ".join(feasibility.failed()))
    if outcome is None:
        outcome, _ = iterate_best_response(params, dist, cfg)
        outcome = replace(outcome, feasibility=feasibility, warnings=tuple(warnings) + outcome.warnings)

    if certify:
        from .oracle import certify as run_certify

        cert = run_certify(params, dist, outcome.profile, cert_grid, cert_tol)
        if not cert.certified:
            raise NotAnEquilibrium(
                f"profitable deviation of {max(cert.max_deviation):.3g} found", cert)
    return outcome
