"""Brute-force equilibrium checks built only on the market primitives.

A profile passes when no SP gains more than ``cert_tol`` from either
  * a QoS deviation with every risk and rival QoS held fixed, or
  * a risk deviation after which rivals replay the stage-2 (QoS)
    equilibrium of the new subgame, found here by iterated grid best
    responses, and the deviator picks its QoS from the grid.
Holding rival QoS fixed during a risk deviation would not test subgame
perfection: rivals re-optimize QoS once risks change.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .market import (
    DegenerateDifferentiation,
    MarketParams,
    RiskDistribution,
    SPStrategy,
    StrategyProfile,
    _check_dist,
    evaluate_profiles,
    qos_profit_curve,
)

__all__ = [
    "Certificate",
    "NonConvergence",
    "v_max",
    "make_grid",
    "grid_best_response",
    "brute_force_stage2",
    "certify",
]

DEFAULT_GRID = (400, 400)
DEFAULT_TOL = 1e-3
LOCAL_POINTS = 33


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class Certificate:
    profile: StrategyProfile
    grid: tuple
    max_deviation: tuple
    best_deviations: tuple
    cert_tol: float
    unsettled: tuple = ()

    @property
    def certified(self) -> bool:
        return all(d <= self.cert_tol for d in self.max_deviation)

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "grid": list(self.grid),
            "cert_tol": self.cert_tol,
            "unsettled": list(self.unsettled),
            "max_deviation": [float(d) for d in self.max_deviation],
            "best_deviations": [{"eps": s.eps, "v": s.v} for s in self.best_deviations],
        }


def v_max(params: MarketParams) -> float:
    """QoS above which no SP can earn a positive margin at any risk."""
    return (params.r * params.eps_bar + max(params.p)) / params.c


def make_grid(params: MarketParams, shape=DEFAULT_GRID):
    """``(eps_grid, v_grid)`` covering ``[0, eps_bar] x [0, v_max]``."""
    n_eps, n_v = shape
    return (np.linspace(0.0, params.eps_bar, int(n_eps)),
            np.linspace(0.0, v_max(params), int(n_v)))


def _as_grid(params, grid):
    if grid is None:
        return make_grid(params)
    if len(grid) == 2 and np.isscalar(grid[0]):
        return make_grid(params, grid)
    return np.atleast_1d(np.asarray(grid[0], float)), np.atleast_1d(np.asarray(grid[1], float))


def _best_qos(params, dist, i, eps, v, v_grid):
    """Grid best response in QoS of SP ``i``; ``v_grid`` is ``(k,)`` or per-row ``(n, k)``.

    Returns ``(v_i, profit)``. Ties go to the smallest QoS.
    """
    eps = np.asarray(eps, float)
    v = np.asarray(v, float)
    single = eps.ndim == 1
    e2, v2 = np.atleast_2d(eps), np.atleast_2d(v)
    own = np.nan_to_num(qos_profit_curve(params, dist, i, e2, v2, v_grid), nan=-np.inf)
    j = np.argmax(own, axis=-1)
    best = own[np.arange(own.shape[0]), j]
    grids = np.broadcast_to(v_grid, own.shape)
    v_star = grids[np.arange(own.shape[0]), j]
    if single:
        return v_star[0], best[0]
    return v_star, best


def _best_qos_local(params, dist, i, eps, v, grids):
    """Like :func:`_best_qos` with per-row grids centred on the current QoS; ties stay put."""
    own = np.nan_to_num(qos_profit_curve(params, dist, i, eps, v, grids), nan=-np.inf)
    rows = np.arange(own.shape[0])
    j = np.argmax(own, axis=-1)
    centre = grids.shape[-1] // 2
    j = np.where(own[:, centre] >= own[rows, j], centre, j)
    return grids[rows, j]


def _settle(params, dist, eps, v, grid_for, max_rounds):
    """Round-robin grid best responses on rows ``(n, m)`` until each row settles.

    Returns ``(v, settled)``. Only rows that moved last round are revisited;
    a row that returns to its state of two rounds ago is a 2-cycle and is
    dropped as unsettled.
    """
    n, m = eps.shape
    v = v.copy()
    active = np.arange(n)
    prev = np.full((n, m), np.nan)
    cycling = np.zeros(n, dtype=bool)
    for _ in range(max_rounds):
        if active.size == 0:
            break
        va, ea = v[active], eps[active]
        old = va.copy()
        for i in range(m):
            g = grid_for(i, va)
            if g.ndim == 1:
                va[:, i], _ = _best_qos(params, dist, i, ea, va, g)
            else:
                va[:, i] = _best_qos_local(params, dist, i, ea, va, g)
        v[active] = va
        moved = np.any(va != old, axis=-1)
        two_cycle = moved & np.all(va == prev[active], axis=-1)
        cycling[active[two_cycle]] = True
        prev[active] = old
        active = active[moved & ~two_cycle]
    settled = ~cycling
    settled[active] = False
    return v, settled


def _stage2_grid(params, dist, eps, v_grid, v0, max_rounds, refine):
    """Iterated grid best responses in QoS; returns ``(v, settled)`` per row."""
    shape = eps.shape
    m = shape[-1]
    e = eps.reshape(-1, m)
    if v0 is None:
        v = np.full(e.shape, v_grid[v_grid.size // 2])
    else:
        v = np.broadcast_to(np.asarray(v0, float), shape).reshape(-1, m).copy()

    v, ok = _settle(params, dist, e, v, lambda i, v: v_grid, max_rounds)
    spacing = (v_grid[-1] - v_grid[0]) / max(v_grid.size - 1, 1)
    for _ in range(refine):
        if not np.any(ok):
            break
        # next grid spans +-4 cells of the current one; odd size keeps the centre
        offsets = np.linspace(-4.0, 4.0, LOCAL_POINTS) * spacing
        spacing = 8.0 * spacing / (LOCAL_POINTS - 1)

        def local(i, v, offsets=offsets):
            return np.clip(v[:, i][:, None] + offsets, 0.0, None)

        v[ok], _ = _settle(params, dist, e[ok], v[ok], local, max_rounds)
    return v.reshape(shape), ok.reshape(shape[:-1])


def brute_force_stage2(params: MarketParams, dist: RiskDistribution, eps: Sequence[float],
                       v_grid=None, v0=None, max_rounds: int = 500, refine: int = 0):
    """Stage-2 QoS equilibrium by iterated grid best responses.

    ``eps`` may be a single risk vector or a batch ``(..., m)``. Each round
    every SP (in index order) moves to its best QoS on ``v_grid`` against
    the current rivals; the loop stops at a fixed point. ``refine > 0``
    repeats the search on successively finer local grids around the fixed
    point, each spanning eight cells of the previous one.
    Raises :class:`NonConvergence` if any row fails to settle.
    """
    _check_dist(params, dist)
    eps = np.asarray(eps, float)
    if v_grid is None:
        v_grid = make_grid(params)[1]
    v_grid = np.asarray(v_grid, float)
    if np.any(np.diff(np.sort(eps, axis=-1), axis=-1) < params.gap_min):
        raise DegenerateDifferentiation("risks are not separated")
    v, ok = _stage2_grid(params, dist, eps, v_grid, v0, max_rounds, refine)
    if not np.all(ok):
        raise NonConvergence(f"no stage-2 fixed point after {max_rounds} rounds")
    return v


def grid_best_response(params: MarketParams, dist: RiskDistribution, i: int,
                       profile: StrategyProfile, grid=None, refine: int = 4,
                       max_rounds: int = 40):
    """Best grid deviation ``(SPStrategy, profit)`` of SP ``i``.

    Candidates are every ``(eps, v)`` grid cell. At the profile's own risk
    the rivals keep their QoS; at any other risk they play the stage-2
    equilibrium of that subgame (brute-forced, ``refine`` zoom levels).
    Risks whose subgame never settles are skipped.
    """
    best, _ = _grid_best_response(params, dist, i, profile, grid, refine, max_rounds, False)
    return best


def _grid_best_response(params, dist, i, profile, grid, refine, max_rounds, own_risk):
    _check_dist(params, dist)
    eps_grid, v_grid = _as_grid(params, grid)
    eps0, v0 = profile.eps, profile.v
    others = np.delete(eps0, i)

    best = (None, -np.inf)
    skipped = 0
    # QoS-only deviation at the claimed risk, which need not lie on the grid
    if own_risk and v_grid.size:
        v_star, val = _best_qos(params, dist, i, eps0, v0, v_grid)
        best = (SPStrategy(float(eps0[i]), float(v_star)), float(val))

    cand = eps_grid[np.all(np.abs(eps_grid[:, None] - others[None, :]) >= params.gap_min, axis=1)]
    if own_risk:
        cand = cand[cand != eps0[i]]
    if cand.size:
        batch = np.repeat(eps0[None, :], cand.size, axis=0)
        batch[:, i] = cand
        v_eq, ok = _stage2_grid(params, dist, batch, v_grid, v0, max_rounds, refine)
        v_dev, val = _best_qos(params, dist, i, batch, v_eq, v_grid)
        # subgames without a pure QoS fixed point (Edgeworth-type cycles when
        # risks nearly coincide) have no stage-2 equilibrium to continue with
        val = np.where(ok, val, -np.inf)
        skipped = int(np.count_nonzero(~ok))
        j = int(np.argmax(val))
        if val[j] > best[1]:
            best = (SPStrategy(float(cand[j]), float(v_dev[j])), float(val[j]))
    return best, skipped


def certify(params: MarketParams, dist: RiskDistribution, profile: StrategyProfile,
            grid=DEFAULT_GRID, cert_tol: float = DEFAULT_TOL, refine: int = 4,
            max_rounds: int = 40) -> Certificate:
    """Check a claimed equilibrium against every grid deviation of every SP.

    Besides the grid cells, each SP may also change only its QoS (on the
    grid's QoS axis) at its claimed risk.

    ``Certificate.unsettled`` counts, per SP, the risk deviations skipped
    because rival QoS kept cycling instead of reaching a grid fixed point.
    """
    _check_dist(params, dist)
    if not profile.is_separated(params.gap_min):
        raise DegenerateDifferentiation(f"risks {profile.eps} are not separated")
    eps_grid, v_grid = _as_grid(params, grid)
    _, _, claimed = evaluate_profiles(params, dist, profile.eps, profile.v)
    devs, gains, skipped = [], [], []
    for i in range(len(profile)):
        (s, val), n_skip = _grid_best_response(params, dist, i, profile, (eps_grid, v_grid),
                                               refine, max_rounds, True)
        devs.append(s)
        gains.append(max(val - float(claimed[i]), 0.0))
        skipped.append(n_skip)
    return Certificate(profile, (eps_grid.size, v_grid.size), tuple(gains), tuple(devs),
                       cert_tol, tuple(skipped))
