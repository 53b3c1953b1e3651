#!/usr/bin/env python3
"""Brute-force check of a claimed equilibrium.

The oracle tries every (risk, QoS) cell on a 400x400 grid for each service.
When a service moves its risk the rivals re-optimise their QoS, so a
deviation is judged by the profit it earns in the new QoS subgame.
"""
from privmkt import MarketParams, RiskDistribution, StrategyProfile, certify, solve_theorem1

params = MarketParams.table1(t=0.7, eps_bar=5.0)
dist = RiskDistribution.uniform(5.0)
sol = solve_theorem1(params)

cert = certify(params, dist, sol.profile)
print(f"closed-form profile certified: {cert.certified}")
print(f"  best gain per SP {[f'{d:.2e}' for d in cert.max_deviation]} (tolerance {cert.cert_tol})")

bad = StrategyProfile.from_arrays([sol.eps1, sol.eps2], [sol.v1 + 0.5, sol.v2])
cert = certify(params, dist, bad)
print(f"\nSP1 QoS raised by 0.5: certified {cert.certified}")
print(f"  SP1 could gain {cert.max_deviation[0]:.4f} by moving to {cert.best_deviations[0]}")

# a wide price gap: SP2 profits by crowding SP1 out of the market
wide = MarketParams(c=0.5, lam=0.75, r=0.7, t=0.514, eps_bar=4.545, p=(0.3865, 0.9368))
s = solve_theorem1(wide)
cert = certify(wide, RiskDistribution.uniform(wide.eps_bar), s.profile)
print(f"\nwide gap (x_tau={s.x_tau:.3f}), closed-form conditions hold: {s.feasibility.all_feasible}")
print(f"  certified {cert.certified}; SP2 gain {cert.max_deviation[1]:.4f} at {cert.best_deviations[1]}")
