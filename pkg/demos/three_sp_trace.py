#!/usr/bin/env python3
"""Three services: iterated best responses in risk may never settle.

Runs the round-robin best-response dynamics from the spread start
eps_i = i eps_bar / (i + 1) for three revenue levels of the middle service,
and prints the per-round risks so the leapfrogging can be followed by eye.
"""
import numpy as np

from privmkt import MarketParams, RiskDistribution, SolverConfig, iterate_best_response

dist = RiskDistribution.uniform(5.0)
cfg = SolverConfig(initial_eps="spread", max_iters=100, stop_on_cycle=False)

for p2 in (0.75, 0.6, 0.45):
    params = MarketParams.table1(t=0.7, eps_bar=5.0, p=(0.4, p2, 0.8))
    out, trace = iterate_best_response(params, dist, cfg)
    eps = trace.eps_array()
    print(f"\np = (0.4, {p2}, 0.8): {trace.termination} after {len(trace)} rounds"
          + (f", cycle length {trace.cycle_length}" if trace.cycle_length else ""))
    print(f"  mean risk per SP {eps.mean(axis=0).round(3)}")
    print(f"  SP1/SP2 rank swaps {trace.rank_swaps(0, 1)}")
    for k in range(min(6, len(trace))):
        print(f"  round {k + 1:3d}: eps={np.round(trace.eps[k], 3)}  profit={np.round(trace.profits[k], 4)}")
