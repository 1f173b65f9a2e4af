"""Short preview of the 100-agent benchmark.

Full benchmark: 100 agents, 8 parameters, sparse one-coordinate regressors,
Gaussian noise, a random pairwise graph, one million steps. Here we run a
slice of it and print how the network average creeps toward the target.

Worth knowing before you wait on the full run: with 100 agents and only
12 or 13 of them sensing each coordinate, the averaged correction enters
the estimate scaled by roughly 0.12/k per step. Summed over a million
steps that is about 0.9 of movement per coordinate from a zero start,
while the largest target entry is above 5. The long transient is a
property of this recursion at this scale, not a tuning accident.

Usage: python3 demos/benchmark_preview.py [seed] [steps]
"""

import sys

import numpy as np

from binident import graded_theta_star, preset_v, run_experiment


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    steps = int(sys.argv[2]) if len(sys.argv) > 2 else 50_000

    cfg = preset_v(seed=seed, steps=steps, stride=max(1, steps // 10))
    res = run_experiment(cfg)

    star = graded_theta_star(8)
    m = res.metrics
    print(f"seed {seed}, {steps} steps, {cfg.n_agents} agents")
    print()
    print("network-average estimate by coordinate (last row = final step):")
    header = "      k " + "".join(f"   tb_{j}" for j in range(1, 9))
    print(header)
    for r in range(m.n_rows):
        row = "".join(f" {v:6.3f}" for v in m.theta_bar[r])
        print(f"{m.k[r]:>7}{row}")
    print(f"  truth {''.join(f' {v:6.3f}' for v in star)}")
    print()
    fin = res.summary["final"]
    print(f"relative mean error: {fin['relative_mean_error']:.4f}")
    print(f"consensus gap: {fin['consensus_gap']:.2e} (peak {fin['peak_consensus_gap']:.2e})")
    print(f"truncation resets: {fin['truncation_events']}, wall time {res.summary['wall_time_s']:.1f}s")
    print()
    print("note how agreement across agents is reached long before the shared")
    print("average has finished traveling; consensus is the fast part.")


if __name__ == "__main__":
    main()
