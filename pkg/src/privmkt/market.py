"""Model primitives for the privacy-differentiated free-services market.

Service providers (SPs) advertise a privacy risk ``eps`` and a quality of
service ``v``. Consumers are spread over normalized locations
``x = F(eps) in [0, 1]`` where ``F`` is the CDF of their privacy-risk
tolerance, and pick the SP maximizing ``v_i + t (x - x_i) eps_i``.

Everything here is a pure function of immutable inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

__all__ = [
    "DegenerateDifferentiation",
    "MarketParams",
    "RiskDistribution",
    "SPStrategy",
    "StrategyProfile",
    "FeasibilityReport",
    "EquilibriumOutcome",
    "cdf",
    "inverse_cdf",
    "consumer_utility",
    "indifference_threshold",
    "market_shares",
    "market_thresholds",
    "sp_margin",
    "sp_profit",
    "evaluate_profiles",
    "qos_profit_curve",
]

GAP_MIN_FRACTION = 1e-6


class DegenerateDifferentiation(ValueError):
    """Two SPs advertise (almost) the same privacy risk."""


@dataclass(frozen=True)
class MarketParams:
    """Scalar model constants.

    c        cost per unit QoS
    lam      QoS-equivalent cost per unit privacy risk
    r        revenue per unit privacy risk
    t        consumer QoS-per-risk gain factor
    eps_bar  maximum consumer privacy-risk tolerance
    p        privacy-independent revenue of each SP
    """

    c: float
    lam: float
    r: float
    t: float
    eps_bar: float
    p: tuple = (0.4, 0.8)

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        for name in ("c", "lam", "r", "t", "eps_bar"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val!r}")
        if self.c <= 0 or self.t <= 0 or self.eps_bar <= 0:
            raise ValueError("c, t and eps_bar must be positive")
        if self.lam < 0 or self.r < 0:
            raise ValueError("lam and r must be non-negative")
        if len(self.p) < 2:
            raise ValueError("need at least two SPs")
        if any(not math.isfinite(x) or x < 0 for x in self.p):
            raise ValueError("every p_i must be finite and non-negative")

    @classmethod
    def table1(cls, t: float = 0.7, eps_bar: float = 5.0, p=(0.4, 0.8)) -> "MarketParams":
        """The reference parameter set (c=0.5, lam=0.75, r=0.7, p=(0.4, 0.8))."""
        return cls(c=0.5, lam=0.75, r=0.7, t=t, eps_bar=eps_bar, p=p)

    @property
    def m(self) -> int:
        return len(self.p)

    @property
    def alpha(self) -> float:
        """Net profit per unit privacy risk relative to unit-QoS cost."""
        return self.r / self.c - self.lam

    @property
    def c_tilde(self) -> float:
        """Cost of compensating the maximal privacy-risk mismatch."""
        return self.c * self.t * self.eps_bar

    @property
    def gap_min(self) -> float:
        return GAP_MIN_FRACTION * self.eps_bar

    def replace(self, **changes) -> "MarketParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class RiskDistribution:
    """Consumer privacy-risk tolerance law on ``[0, eps_bar]``.

    ``kind`` is ``"uniform"`` or ``"truncnorm"``; the truncated normal is
    centred at ``eps_bar / 2`` with standard deviation ``sigma``.
    """

    kind: str
    eps_bar: float
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "truncnorm"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not (self.eps_bar > 0 and math.isfinite(self.eps_bar)):
            raise ValueError("eps_bar must be positive")
        if self.kind == "truncnorm":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("truncated normal needs sigma > 0")

    @classmethod
    def uniform(cls, eps_bar: float) -> "RiskDistribution":
        return cls("uniform", float(eps_bar))

    @classmethod
    def truncated_normal(cls, eps_bar: float, sigma: float = 1.0) -> "RiskDistribution":
        return cls("truncnorm", float(eps_bar), float(sigma))

    def with_eps_bar(self, eps_bar: float) -> "RiskDistribution":
        return replace(self, eps_bar=float(eps_bar))


@dataclass(frozen=True)
class SPStrategy:
    eps: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.eps) and math.isfinite(self.v)):
            raise ValueError("strategy components must be finite")


@dataclass(frozen=True)
class StrategyProfile:
    """Per-SP strategies indexed by SP identity (not by risk order)."""

    strategies: tuple

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))

    @classmethod
    def from_arrays(cls, eps: Sequence[float], v: Sequence[float]) -> "StrategyProfile":
        if len(eps) != len(v):
            raise ValueError("eps and v must have the same length")
        return cls(tuple(SPStrategy(float(e), float(q)) for e, q in zip(eps, v)))

    def __len__(self):
        return len(self.strategies)

    def __getitem__(self, i):
        return self.strategies[i]

    @property
    def eps(self) -> np.ndarray:
        return np.array([s.eps for s in self.strategies])

    @property
    def v(self) -> np.ndarray:
        return np.array([s.v for s in self.strategies])

    def order(self) -> np.ndarray:
        """SP indices sorted by advertised risk; ties keep identity order."""
        return np.argsort(self.eps, kind="stable")

    def is_separated(self, gap_min: float) -> bool:
        e = np.sort(self.eps)
        return bool(np.all(np.diff(e) >= gap_min))

    def with_strategy(self, i: int, s: SPStrategy) -> "StrategyProfile":
        items = list(self.strategies)
        items[i] = s
        return StrategyProfile(tuple(items))


@dataclass(frozen=True)
class FeasibilityReport:
    """Sufficient conditions for the two-SP closed-form equilibrium.

    ``share_margin`` is the distance of the share ratio inside ``[-1, 1]``
    (negative when outside). ``eps_margins`` are (lower, upper) distances
    of the same ratio to the risk band. ``coverage_margin`` is LHS - RHS of
    the coverage inequality.
    """

    ratio: float
    cond_share: bool
    share_margin: float
    cond_eps: bool
    eps_margins: tuple
    eps_band: tuple
    cond_coverage: bool
    coverage_margin: float
    coverage_lhs: float
    coverage_rhs: float

    @property
    def all_feasible(self) -> bool:
        return self.cond_share and self.cond_eps and self.cond_coverage

    def failed(self) -> list:
        names = []
        if not self.cond_share:
            names.append("share")
        if not self.cond_eps:
            names.append("eps")
        if not self.cond_coverage:
            names.append("coverage")
        return names

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "cond_share": self.cond_share,
            "share_margin": self.share_margin,
            "cond_eps": self.cond_eps,
            "eps_margins": list(self.eps_margins),
            "eps_band": list(self.eps_band),
            "cond_coverage": self.cond_coverage,
            "coverage_margin": self.coverage_margin,
            "coverage_lhs": self.coverage_lhs,
            "coverage_rhs": self.coverage_rhs,
            "all_feasible": self.all_feasible,
        }


@dataclass(frozen=True)
class EquilibriumOutcome:
    profile: StrategyProfile
    shares: tuple
    profits: tuple
    thresholds: tuple
    method: str
    converged: bool
    iterations: int = 0
    feasibility: Optional[FeasibilityReport] = None
    warnings: tuple = ()
    trace: Optional[object] = field(default=None, compare=False, repr=False)

    @property
    def eps(self) -> np.ndarray:
        return self.profile.eps

    @property
    def v(self) -> np.ndarray:
        return self.profile.v

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "eps": [float(x) for x in self.profile.eps],
            "v": [float(x) for x in self.profile.v],
            "shares": [float(x) for x in self.shares],
            "profits": [float(x) for x in self.profits],
            "thresholds": [float(x) for x in self.thresholds],
            "warnings": list(self.warnings),
        }
        if self.feasibility is not None:
            out["feasibility"] = self.feasibility.to_dict()
        return out


def _check_dist(params: MarketParams, dist: RiskDistribution):
    if abs(params.eps_bar - dist.eps_bar) > 1e-12 * params.eps_bar:
        raise ValueError(
            f"distribution support {dist.eps_bar} does not match eps_bar {params.eps_bar}")


def cdf(dist: RiskDistribution, eps):
    """Normalized location ``F(eps)``; clamps to 0 below the support and 1 above."""
    e = np.asarray(eps, dtype=float)
    if dist.kind == "uniform":
        x = np.clip(e / dist.eps_bar, 0.0, 1.0)
    else:
        half = dist.eps_bar / 2.0
        lo = special.ndtr(-half / dist.sigma)
        hi = special.ndtr(half / dist.sigma)
        x = (special.ndtr((e - half) / dist.sigma) - lo) / (hi - lo)
        x = np.where(e <= 0.0, 0.0, np.where(e >= dist.eps_bar, 1.0, x))
        x = np.clip(x, 0.0, 1.0)
    return float(x) if x.ndim == 0 else x


def inverse_cdf(dist: RiskDistribution, q: float) -> float:
    """Risk tolerance of the consumer at normalized location ``q``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    if dist.kind == "uniform":
        return q * dist.eps_bar
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return dist.eps_bar
    return optimize.brentq(lambda e: cdf(dist, e) - q, 0.0, dist.eps_bar,
                           xtol=1e-15 * dist.eps_bar, rtol=4 * np.finfo(float).eps,
                           maxiter=200)


def consumer_utility(params: MarketParams, dist: RiskDistribution, s: SPStrategy, x: float) -> float:
    """Perceived utility of SP strategy ``s`` for the consumer at location ``x``.

    Negative values mean the privacy-risk violation outweighs the QoS.
    """
    xi = cdf(dist, s.eps)
    return s.v + params.t * (x - xi) * s.eps


def _raw_threshold(t, eps_lo, x_lo, v_lo, eps_hi, x_hi, v_hi):
    return (v_lo - v_hi + t * (x_hi * eps_hi - x_lo * eps_lo)) / (t * (eps_hi - eps_lo))


def indifference_threshold(params: MarketParams, dist: RiskDistribution,
                           s_low: SPStrategy, s_high: SPStrategy):
    """Location where consumers are indifferent between two SPs.

    Returns ``(x_tau, clamped)``; ``clamped`` is True when the raw value fell
    outside ``[0, 1]`` (one SP takes the whole market).
    """
    _check_dist(params, dist)
    if s_high.eps - s_low.eps < params.gap_min:
        raise DegenerateDifferentiation(
            f"risks {s_low.eps!r} and {s_high.eps!r} are closer than {params.gap_min:g}"
            " or out of order")
    x_lo = cdf(dist, s_low.eps)
    x_hi = cdf(dist, s_high.eps)
    raw = _raw_threshold(params.t, s_low.eps, x_lo, s_low.v, s_high.eps, x_hi, s_high.v)
    x = min(max(raw, 0.0), 1.0)
    return x, x != raw


def _interval_shares(params, dist, eps, v):
    """Shares from the upper envelope of the consumers' utility lines.

    ``eps`` and ``v`` have shape ``(..., m)`` in identity order. SP ``i``
    wins on ``[lower_i, upper_i]``: above every crossing with a lower-risk
    rival and below every crossing with a higher-risk one. For neighbours
    only competing with neighbours this is the consecutive-threshold rule.
    Pairs closer than ``gap_min`` give NaN rows.
    """
    x = np.asarray(cdf(dist, eps))
    t = params.t
    e_i, e_j = eps[..., :, None], eps[..., None, :]
    x_i, x_j = x[..., :, None], x[..., None, :]
    v_i, v_j = v[..., :, None], v[..., None, :]
    diff = e_i - e_j
    degenerate = np.abs(diff) < params.gap_min
    eye = np.eye(eps.shape[-1], dtype=bool)
    degenerate = degenerate & ~eye
    with np.errstate(divide="ignore", invalid="ignore"):
        # u_i(x) >= u_j(x)  <=>  x (e_i - e_j) t >= (v_j - v_i) + t (x_i e_i - x_j e_j)
        cross = (v_j - v_i + t * (x_i * e_i - x_j * e_j)) / (t * diff)
    lower = np.where(diff > 0, cross, -np.inf)
    upper = np.where(diff < 0, cross, np.inf)
    lo = np.clip(lower.max(axis=-1), 0.0, 1.0)
    hi = np.clip(upper.min(axis=-1), 0.0, 1.0)
    shares = np.maximum(hi - lo, 0.0)
    bad = degenerate.any(axis=(-2, -1))
    if np.any(bad):
        shares = np.where(bad[..., None], np.nan, shares)
    return shares


def evaluate_profiles(params: MarketParams, dist: RiskDistribution, eps, v):
    """Vectorized shares, margins and profits for a batch of profiles.

    Inputs have shape ``(..., m)`` indexed by SP identity. Profiles with two
    risks closer than ``gap_min`` produce NaN shares and profits.
    """
    eps = np.asarray(eps, dtype=float)
    v = np.asarray(v, dtype=float)
    p = np.asarray(params.p)
    margins = params.r * eps + p - params.c * v - params.c * params.lam * eps
    shares = _interval_shares(params, dist, eps, v)
    return shares, margins, margins * shares


def market_shares(params: MarketParams, dist: RiskDistribution, profile: StrategyProfile) -> np.ndarray:
    """Fraction of consumers choosing each SP, in identity order."""
    _check_dist(params, dist)
    if len(profile) != params.m:
        raise ValueError(f"profile has {len(profile)} SPs, params has {params.m}")
    if not profile.is_separated(params.gap_min):
        raise DegenerateDifferentiation(f"risks {profile.eps} are not separated by {params.gap_min:g}")
    shares, _, _ = evaluate_profiles(params, dist, profile.eps, profile.v)
    return shares


def market_thresholds(shares, order) -> np.ndarray:
    """Boundaries between consecutive SPs in risk order (length m - 1)."""
    s = np.asarray(shares)[np.asarray(order)]
    return np.clip(np.cumsum(s)[:-1], 0.0, 1.0)


def sp_margin(params: MarketParams, i: int, s: SPStrategy) -> float:
    """Per-consumer profit ``R(eps) - C(v; eps)`` of SP ``i``."""
    return params.r * s.eps + params.p[i] - params.c * s.v - params.c * params.lam * s.eps


def sp_profit(params: MarketParams, dist: RiskDistribution, profile: StrategyProfile, i: int) -> float:
    return sp_margin(params, i, profile[i]) * float(market_shares(params, dist, profile)[i])


def qos_profit_curve(params: MarketParams, dist: RiskDistribution, i: int, eps, v, v_own):
    """Profit of SP ``i`` for each own-QoS candidate, everything else fixed.

    ``eps`` and ``v`` are ``(n, m)`` batches; ``v_own`` is ``(k,)`` or
    ``(n, k)``. Returns ``(n, k)``. Same envelope rule as
    :func:`evaluate_profiles` but only the ``m - 1`` crossings that bound
    SP ``i``; rows with unseparated risks give NaN.
    """
    eps = np.asarray(eps, dtype=float)
    v = np.asarray(v, dtype=float)
    v_own = np.asarray(v_own, dtype=float)
    if v_own.ndim == 1:
        v_own = v_own[None, :]
    t = params.t
    x = np.asarray(cdf(dist, eps))
    rivals = [j for j in range(eps.shape[-1]) if j != i]
    e_i, x_i = eps[:, i, None, None], x[:, i, None, None]
    e_j, x_j, v_j = (a[:, None, rivals] for a in (eps, x, v))
    diff = e_i - e_j
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (v_j - v_own[..., None] + t * (x_i * e_i - x_j * e_j)) / (t * diff)
    lo = np.clip(np.where(diff > 0, cross, -np.inf).max(axis=-1), 0.0, 1.0)
    hi = np.clip(np.where(diff < 0, cross, np.inf).min(axis=-1), 0.0, 1.0)
    share = np.maximum(hi - lo, 0.0)
    margin = (params.r - params.c * params.lam) * eps[:, i, None] + params.p[i] - params.c * v_own
    srt = np.sort(eps, axis=-1)
    bad = np.any(np.diff(srt, axis=-1) < params.gap_min, axis=-1)
    out = margin * share
    if np.any(bad):
        out = np.where(bad[:, None], np.nan, out)
    return out
