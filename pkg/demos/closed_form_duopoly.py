#!/usr/bin/env python3
"""Two services, uniform privacy tolerance: the closed-form equilibrium.

Solves the reference market (c=0.5, lam=0.75, r=0.7, p=(0.4, 0.8)), checks it against the market primitives, and
shows how the outcome moves as the tolerance range eps_bar grows.
"""
import numpy as np

from privmkt import MarketParams, RiskDistribution, market_shares, solve_theorem1, sp_profit

params = MarketParams.table1(t=0.7, eps_bar=5.0)
sol = solve_theorem1(params)

print("reference market, t=0.7, eps_bar=5")
print(f"  risks   eps1={sol.eps1:.4f}  eps2={sol.eps2:.4f}  (gap {sol.eps2 - sol.eps1:.4f})")
print(f"  QoS     v1={sol.v1:.4f}    v2={sol.v2:.4f}")
print(f"  share of SP1 x_tau={sol.x_tau:.4f}")
print(f"  profits pi1={sol.pi1:.4f}  pi2={sol.pi2:.4f}")
print(f"  closed-form conditions hold: {sol.feasibility.all_feasible}")

# the same numbers from first principles: who picks which service, and what it earns
dist = RiskDistribution.uniform(params.eps_bar)
shares = market_shares(params, dist, sol.profile)
print("\nrecomputed from consumer choice:")
print(f"  shares  {np.round(shares, 6)}")
print(f"  profits {[round(sp_profit(params, dist, sol.profile, i), 6) for i in range(2)]}")

# widening the tolerance range scales every strategy linearly
print("\neps_bar   eps1     eps2     v1       v2       pi1      pi2")
for eb in np.linspace(3.0, 5.0, 5):
    s = solve_theorem1(params.replace(eps_bar=eb))
    flag = "" if s.feasibility.all_feasible else "   (conditions fail: " + ",".join(s.feasibility.failed()) + ")"
    print(f"{eb:7.2f} {s.eps1:8.4f} {s.eps2:8.4f} {s.v1:8.4f} {s.v2:8.4f} {s.pi1:8.4f} {s.pi2:8.4f}{flag}")

# a lower QoS/risk scale t breaks the interior solution
low = solve_theorem1(params.replace(t=0.5))
print(f"\nt=0.5: conditions hold={low.feasibility.all_feasible}, failing={low.feasibility.failed()}")
