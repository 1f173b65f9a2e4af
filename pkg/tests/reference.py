"""Slow loop-by-loop re-derivations used as oracles for the fast paths.

Everything here is written straight from the update rules with plain
Python loops, dicts, and math.sqrt -- no shared helpers, no vectorised
shortcuts -- so a bug in the optimised code cannot hide in its mirror.
"""

import math

import numpy as np


def reference_step(theta, sigma, w, phi_rows, y, a_k):
    """One synchronous round for all agents, agent by agent.

    theta: list of per-agent estimate lists; sigma: list of counters;
    w: row-stochastic weight matrix (entry > 0 marks an in-neighbor);
    phi_rows: per-agent regressor rows; y: per-agent true outputs.
    Returns (theta_next, sigma_next, n_truncated).
    """
    n = len(theta)
    l = len(theta[0])
    theta_next = []
    sigma_next = []
    truncated = 0
    for i in range(n):
        nbrs = [j for j in range(n) if w[i][j] > 0.0]
        shat = max(sigma[j] for j in nbrs)
        cand = [0.0] * l
        if sigma[i] == shat:
            for j in nbrs:
                if sigma[j] == shat:
                    for m in range(l):
                        cand[m] += w[i][j] * theta[j][m]
            c = sum(phi_rows[i][m] * theta[i][m] for m in range(l))
            z = 1 if y[i] < c else 0
            for m in range(l):
                cand[m] += a_k * phi_rows[i][m] * (1 - 2 * z)
        if math.sqrt(sum(v * v for v in cand)) > shat:
            theta_next.append([0.0] * l)
            sigma_next.append(shat + 1)
            truncated += 1
        else:
            theta_next.append(cand)
            sigma_next.append(shat)
    return theta_next, sigma_next, truncated


def reference_strongly_connected(n, edges):
    """Reachability both ways from agent 1 via breadth-first search."""

    def reach(adj):
        seen = {1}
        frontier = [1]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj.get(u, ()):
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return seen

    fwd = {}
    bwd = {}
    for j, i in edges:
        fwd.setdefault(j, []).append(i)
        bwd.setdefault(i, []).append(j)
    everyone = set(range(1, n + 1))
    return reach(fwd) == everyone and reach(bwd) == everyone


def reference_backward_product(mats):
    """Ordered product W(k) ... W(s) given [W(s), ..., W(k)] in time order."""
    n = len(mats[0])
    prod = [[1.0 if r == c else 0.0 for c in range(n)] for r in range(n)]
    for w in mats:  # prod <- w @ prod
        out = [[0.0] * n for _ in range(n)]
        for r in range(n):
            for c in range(n):
                acc = 0.0
                for t in range(n):
                    acc += w[r][t] * prod[t][c]
                out[r][c] = acc
        prod = out
    return prod


def reference_consensus_gap(theta):
    """Root of the summed squared distances from the plain average."""
    n = len(theta)
    l = len(theta[0])
    mean = [sum(theta[i][m] for i in range(n)) / n for m in range(l)]
    total = 0.0
    for i in range(n):
        for m in range(l):
            total += (theta[i][m] - mean[m]) ** 2
    return math.sqrt(total)


class ScriptedStreams:
    """Hand-fed draws so step traces are exact (duck-types ModelStreams)."""

    def __init__(self, l, phi_rows, noises):
        from binident import PhiBatch

        self._batch = PhiBatch
        self.l = l
        self.phi = [np.asarray(p, dtype=np.float64).reshape(-1, l) for p in phi_rows]
        self.noise = [np.atleast_1d(np.asarray(d, dtype=np.float64)) for d in noises]
        self._i = 0

    def phi_step(self, k):
        return self._batch(l=self.l, dense=self.phi[self._i])

    def noise_step(self):
        d = self.noise[self._i]
        self._i += 1
        return d
