#!/usr/bin/env python3
"""Privacy tolerance concentrated near eps_bar (truncated normal).

There is no closed form here, so the numeric solver iterates best responses
in risk, solving the QoS subgame exactly at every candidate. The high-revenue
service ends up at the largest admissible risk, and it wins a smaller share
than it does under a uniform tolerance.
"""
from privmkt import MarketParams, RiskDistribution, solve_spne

print(" eps_bar    t   | TN eps1  TN eps2  TN n2  | U n2")
for eb in (3.0, 4.0, 5.0):
    for t in (0.59, 0.7, 0.85):
        params = MarketParams.table1(t=t, eps_bar=eb)
        tn = solve_spne(params, RiskDistribution.truncated_normal(eb, 1.0))
        un = solve_spne(params, RiskDistribution.uniform(eb))
        print(f"{eb:7.1f} {t:6.2f}  | {tn.eps[0]:7.4f} {tn.eps[1]:8.4f} {tn.shares[1]:6.4f} "
              f"| {un.shares[1]:6.4f}  ({tn.method}, {tn.iterations} rounds)")

# narrower tolerance spread pushes the low-risk service further up as well
params = MarketParams.table1(t=0.7, eps_bar=5.0)
for sigma in (0.5, 1.0, 2.0, 4.0):
    out = solve_spne(params, RiskDistribution.truncated_normal(5.0, sigma))
    print(f"sigma={sigma:3.1f}: eps={out.eps.round(4)}, shares={tuple(round(s, 4) for s in out.shares)}")
