"""Distributed identification with expanding truncations.

Each agent maintains an estimate ``theta_i`` and a truncation counter
``sigma_i``.  One step: adopt the largest counter in the in-neighborhood,
average the estimates of neighbors holding that counter, nudge along the
one-bit innovation with gain 1/k, and reset to zero (bumping the counter)
whenever the candidate leaves the ball of radius equal to the adopted
counter.  The expanding radii make the scheme self-stabilising without any
prior bound on the true parameter.

:func:`generic_dsaawet_step` is the same recursion written for an arbitrary
root guess ``x_star``, gain, bound sequence, and user-supplied observation
rows; the identification step is its specialisation (zero root guess, gain
1/k, bounds M(m) = m, one-bit innovations) and the two are kept
operation-for-operation parallel so results agree to the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .plant import SystemModel
from .streams import ModelStreams
from .topology import TopologySchedule, WeightMatrix


# ---------------------------------------------------------------------------
# state containers

@dataclass(frozen=True)
class AgentState:
    """One agent's estimate and truncation counter (read-only view)."""

    theta: np.ndarray
    sigma: int


class TruncationLedger:
    """First-hit times of truncation levels.

    ``first_hit[m]`` is the first step at which any agent's counter equalled
    m; ``first_hit_agent[(i, m)]`` the first step agent i's counter equalled
    m (absent if the agent skipped the level).  Ledgers are treated as
    immutable; :meth:`record` returns a new ledger (or self when nothing
    changed), so snapshots can share them.
    """

    __slots__ = ("first_hit", "first_hit_agent", "sigma_max", "truncation_events", "last_change")

    def __init__(self, first_hit, first_hit_agent, sigma_max, truncation_events, last_change):
        self.first_hit = first_hit
        self.first_hit_agent = first_hit_agent
        self.sigma_max = sigma_max
        self.truncation_events = truncation_events
        self.last_change = last_change

    @classmethod
    def initial(cls, n_agents: int, k0: int = 1) -> "TruncationLedger":
        return cls(
            first_hit={0: k0},
            first_hit_agent={(i, 0): k0 for i in range(1, n_agents + 1)},
            sigma_max=0,
            truncation_events=0,
            last_change=k0,
        )

    def record(self, k_new: int, old_sigma: np.ndarray, new_sigma: np.ndarray,
               n_truncated: int) -> "TruncationLedger":
        if new_sigma is old_sigma:
            return self
        changed = np.nonzero(new_sigma != old_sigma)[0]
        if changed.size == 0:
            return self
        first_hit = dict(self.first_hit)
        first_hit_agent = dict(self.first_hit_agent)
        for idx in changed:
            m = int(new_sigma[idx])
            first_hit.setdefault(m, k_new)
            first_hit_agent.setdefault((int(idx) + 1, m), k_new)
        return TruncationLedger(
            first_hit=first_hit,
            first_hit_agent=first_hit_agent,
            sigma_max=max(self.sigma_max, int(new_sigma[changed].max())),
            truncation_events=self.truncation_events + int(n_truncated),
            last_change=k_new,
        )


@dataclass(frozen=True, eq=False)
class NetworkSnapshot:
    """All agents' estimates and counters after step k's update.

    Arrays are owned by the snapshot and frozen; ``theta`` has shape
    ``(n_agents, l)`` and ``sigma`` shape ``(n_agents,)``.
    """

    k: int
    theta: np.ndarray
    sigma: np.ndarray
    ledger: TruncationLedger

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("step index k starts at 1")
        theta = np.asarray(self.theta, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.int64)
        if theta.ndim != 2 or theta.size == 0:
            raise ValueError("theta must be a nonempty (n_agents, l) array")
        if sigma.shape != (theta.shape[0],):
            raise ValueError("sigma must have one entry per agent")
        if sigma.min() < 0:
            raise ValueError("truncation counters cannot be negative")
        theta.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "sigma_uniform", bool((sigma == sigma[0]).all()))

    @classmethod
    def initial(cls, n_agents: int, l: int, k: int = 1) -> "NetworkSnapshot":
        """All-zero starting state (the recursion's canonical origin)."""
        return cls(
            k=k,
            theta=np.zeros((n_agents, l)),
            sigma=np.zeros(n_agents, dtype=np.int64),
            ledger=TruncationLedger.initial(n_agents, k),
        )

    @property
    def n_agents(self) -> int:
        return self.theta.shape[0]

    @property
    def l(self) -> int:
        return self.theta.shape[1]

    @property
    def agents(self) -> tuple[AgentState, ...]:
        """Per-agent views (built on demand; not for hot loops)."""
        return tuple(
            AgentState(self.theta[i], int(self.sigma[i])) for i in range(self.n_agents)
        )


# ---------------------------------------------------------------------------
# single-step updates

def innovation(phi: np.ndarray, z: int) -> np.ndarray:
    """Correction direction ``phi * (1 - 2 z)`` for a one-bit reading z."""
    z = int(z)
    if z not in (0, 1):
        raise ValueError("binary reading z must be 0 or 1")
    return np.asarray(phi, dtype=np.float64) * float(1 - 2 * z)


def dsaawet_identification_step(
    s: NetworkSnapshot,
    weights: WeightMatrix,
    model: SystemModel,
    streams: ModelStreams,
) -> NetworkSnapshot:
    """Advance every agent one step against fresh regressor/noise draws.

    Sensor bit: ``z_i = 1 if y_i < phi_i' theta_i else 0`` with the true
    output ``y_i = phi_i' theta_star + d_i``.  Candidate:

        theta'_i = [ sum_j w_ij theta_j 1{sigma_j = shat_i}
                     + (1/k) phi_i (1 - 2 z_i) ] * 1{sigma_i = shat_i}

    with ``shat_i = max_{j in N_i} sigma_j``; the candidate is kept iff
    ``||theta'_i|| <= shat_i``, otherwise the agent resets to zero and its
    counter becomes ``shat_i + 1``.
    """
    theta, sigma = s.theta, s.sigma
    k = s.k
    a_k = 1.0 / k

    phi = streams.phi_step(k)
    d = streams.noise_step()

    c = phi.thresholds(theta)
    y = phi.outputs(model.theta_star, d)
    z = y < c
    signs = 1.0 - 2.0 * z

    if s.sigma_uniform:
        sig_hat = sigma
        theta_prime = weights.w @ theta
    else:
        sig_hat = np.where(weights.support, sigma[None, :], -1).max(axis=1)
        eq = sigma[None, :] == sig_hat[:, None]
        theta_prime = (weights.w * eq) @ theta

    phi.add_innovation(theta_prime, a_k, signs)

    if not s.sigma_uniform:
        keep = sigma == sig_hat
        theta_prime = np.where(keep[:, None], theta_prime, 0.0)

    norms_sq = np.einsum("ij,ij->i", theta_prime, theta_prime)
    bound = sig_hat.astype(np.float64)
    exceeded = norms_sq > bound * bound

    if exceeded.any():
        theta_next = np.where(exceeded[:, None], 0.0, theta_prime)
        sigma_next = sig_hat + exceeded
        n_trunc = int(exceeded.sum())
    else:
        theta_next = theta_prime
        sigma_next = sig_hat
        n_trunc = 0

    ledger = s.ledger.record(k + 1, sigma, sigma_next, n_trunc)
    return NetworkSnapshot(k=k + 1, theta=theta_next, sigma=sigma_next, ledger=ledger)


@dataclass(frozen=True, eq=False)
class EngineState:
    """State of the generic truncated recursion: iterates plus counters."""

    x: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.int64)
        if x.ndim != 2 or sigma.shape != (x.shape[0],):
            raise ValueError("x must be (n, l) with one counter per row")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "sigma_uniform", bool((sigma == sigma[0]).all()))

    @classmethod
    def initial(cls, n: int, l: int, x_star: np.ndarray | None = None) -> "EngineState":
        x = np.zeros((n, l)) if x_star is None else np.tile(np.asarray(x_star, float), (n, 1))
        return cls(x=x, sigma=np.zeros(n, dtype=np.int64))


def _bounds_at(bounds, levels: np.ndarray) -> np.ndarray:
    if bounds is None:
        return levels.astype(np.float64)
    if callable(bounds):
        return np.array([float(bounds(int(m))) for m in levels])
    return np.asarray(bounds, dtype=np.float64)[levels]


def generic_dsaawet_step(
    state: EngineState,
    weights: WeightMatrix,
    observations: np.ndarray,
    a_k: float,
    bounds: Callable[[int], float] | Sequence[float] | None = None,
    x_star: np.ndarray | None = None,
) -> EngineState:
    """One step of the general truncated recursion.

    ``observations`` holds each agent's raw correction row O_i (shape
    (n, l)); ``bounds`` maps a counter level m to the truncation radius M_m
    (default: M_m = m, callable or lookup table otherwise; the sequence must
    be positive for m >= 1, nondecreasing and unbounded for the convergence
    guarantees to apply); ``x_star`` is the reset/substitution point
    (default: the origin).  Agents behind the neighborhood-max counter
    contribute ``x_star`` in place of their iterate, and truncation resets
    to ``x_star``:

        x~_i = sum_j w_ij [ x_j 1{sigma_j = shat_i} + x* 1{sigma_j < shat_i} ]
               + a_k O_i
        x'_i = x~_i 1{sigma_i = shat_i} + x* 1{sigma_i < shat_i}
        x_i  <- x'_i if ||x'_i|| <= M_shat_i else x*,   with counter bump.

    With the defaults this reproduces :func:`dsaawet_identification_step`
    exactly (bit for bit) when fed the same weights and observation rows.
    """
    x, sigma = state.x, state.sigma
    n, l = x.shape
    obs = np.asarray(observations, dtype=np.float64)
    if obs.shape != (n, l):
        raise ValueError(f"observations shape {obs.shape} != ({n}, {l})")
    zero_center = x_star is None or not np.any(np.asarray(x_star))
    center = None if zero_center else np.asarray(x_star, dtype=np.float64)

    if state.sigma_uniform:
        sig_hat = sigma
        x_prime = weights.w @ x
    else:
        sig_hat = np.where(weights.support, sigma[None, :], -1).max(axis=1)
        eq = sigma[None, :] == sig_hat[:, None]
        x_prime = (weights.w * eq) @ x
        if not zero_center:
            lagging = (weights.w * (sigma[None, :] < sig_hat[:, None])).sum(axis=1)
            x_prime += lagging[:, None] * center[None, :]

    x_prime += obs * a_k

    if not state.sigma_uniform:
        keep = sigma == sig_hat
        if zero_center:
            x_prime = np.where(keep[:, None], x_prime, 0.0)
        else:
            x_prime = np.where(keep[:, None], x_prime, center[None, :])

    norms_sq = np.einsum("ij,ij->i", x_prime, x_prime)
    bound = _bounds_at(bounds, sig_hat)
    exceeded = norms_sq > bound * bound

    if exceeded.any():
        reset_to = 0.0 if zero_center else center[None, :]
        x_next = np.where(exceeded[:, None], reset_to, x_prime)
        sigma_next = sig_hat + exceeded
    else:
        x_next = x_prime
        sigma_next = sig_hat
    return EngineState(x=x_next, sigma=sigma_next)


# ---------------------------------------------------------------------------
# multi-step driver

def run(
    model: SystemModel,
    schedule: TopologySchedule,
    steps: int,
    *,
    init: NetworkSnapshot | None = None,
    streams: ModelStreams | None = None,
    seed: int | None = None,
    sinks: Sequence[Callable] = (),
) -> NetworkSnapshot:
    """Iterate the identification step ``steps`` times.

    Draws come from ``streams`` (or a fresh :class:`ModelStreams` built from
    ``seed``), so results are reproducible per seed.  Each sink is invoked
    as ``sink(previous, new)`` after every step; sinks observe, they cannot
    alter the run.
    """
    if streams is None:
        if seed is None:
            raise ValueError("provide streams= or seed=")
        streams = ModelStreams(model, seed)
    if schedule.n_agents != model.n_agents:
        raise ValueError("schedule and model disagree on the number of agents")
    snap = init if init is not None else NetworkSnapshot.initial(model.n_agents, model.l)
    sinks = tuple(sinks)
    for _ in range(steps):
        weights = schedule[snap.k][1]
        new = dsaawet_identification_step(snap, weights, model, streams)
        for sink in sinks:
            sink(snap, new)
        snap = new
    return snap


# ---------------------------------------------------------------------------
# invariant monitoring

class InvariantMonitor:
    """Run sink checking per-step invariants of the recursion.

    Violations are collected rather than raised so a long run reports all
    breakage at the end: counters never decrease, any agent whose counter
    rose holds an exactly-zero estimate, and every estimate satisfies
    ``||theta_i|| <= sigma_i`` (truncated rows are zero, kept rows passed
    exactly this comparison inside the step).
    """

    def __init__(self, max_recorded: int = 10):
        self.violations: list[str] = []
        self.count = 0
        self.steps = 0
        self._cap = max_recorded

    def _record(self, msg: str) -> None:
        self.count += 1
        if len(self.violations) < self._cap:
            self.violations.append(msg)

    def __call__(self, prev: NetworkSnapshot, new: NetworkSnapshot) -> None:
        self.steps += 1
        if new.sigma is not prev.sigma:
            if np.any(new.sigma < prev.sigma):
                self._record(f"k={new.k}: a truncation counter decreased")
            rose = new.sigma > prev.sigma
            if np.any(rose) and new.theta[rose].any():
                self._record(f"k={new.k}: nonzero estimate right after a counter bump")
        norms_sq = np.einsum("ij,ij->i", new.theta, new.theta)
        radii = new.sigma.astype(np.float64)
        if np.any(norms_sq > radii * radii):
            self._record(f"k={new.k}: estimate outside its truncation ball")

    @property
    def ok(self) -> bool:
        return self.count == 0


def sigma_settled(final: NetworkSnapshot, total_steps: int, fraction: float = 0.5) -> bool:
    """True if counters are common and unchanged over the trailing fraction."""
    cutoff = final.k - int(fraction * total_steps)
    return bool(final.sigma_uniform and final.ledger.last_change <= cutoff)


def truncation_spread_violations(
    ledger: TruncationLedger, B: int, n_agents: int, final_k: int
) -> list[tuple[int, int, int]]:
    """Check that truncation levels propagate through the network quickly.

    Once some agent first reaches level m at step t_m, every other agent
    must either reach m itself, or the network must move past m (someone
    reaches m + 1), within B (n_agents - 1) further steps.  Levels whose
    deadline falls beyond the end of the run are skipped (not enough data
    to judge).  Returns (level, agent, deadline) triples that failed.
    """
    out: list[tuple[int, int, int]] = []
    for m, t_m in sorted(ledger.first_hit.items()):
        if m == 0:
            continue
        deadline = t_m + B * (n_agents - 1)
        if deadline >= final_k:
            continue
        next_hit = ledger.first_hit.get(m + 1, math.inf)
        for a in range(1, n_agents + 1):
            own = ledger.first_hit_agent.get((a, m), math.inf)
            if min(own, next_hit) > deadline:
                out.append((m, a, deadline))
    return out
