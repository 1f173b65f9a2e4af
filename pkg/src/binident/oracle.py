"""Independent reference routes to the true parameter.

None of these use the distributed recursion's consensus machinery: the
centralized baseline fuses every agent's bit into one estimator, the root
solver finds the zero of the averaged correction field by damped Newton,
and the identifiability probe runs a single agent in isolation to show
which coordinates its own excitation can and cannot pin down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import RegressionContext, regression_function, regression_jacobian
from .identifier import run
from .plant import (
    CustomBoundedRegressors,
    DenseUniformRegressors,
    SparseUniformRegressors,
    SystemModel,
)
from .streams import ModelStreams
from .topology import TopologySchedule, complete_graph, metropolis_weights


def centralized_baseline(model: SystemModel, steps: int, seed, record_every: int = 1) -> np.ndarray:
    """All-bits-in-one-place estimator with the same expanding truncations.

    One fused node sees every agent's binary reading each step and applies
    the pooled innovation ``(1/k) sum_i phi_i (1 - 2 z_i)``, truncating
    against the same expanding radii.  Because nothing is diluted through
    averaging, this is the natural upper reference for any distributed run
    on the same model and seed streams.

    Returns the trajectory as an array of estimates: the initial zero row,
    every ``record_every``-th step, and the final step.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    streams = seed if isinstance(seed, ModelStreams) else ModelStreams(model, seed)
    l = model.l
    theta = np.zeros(l)
    sigma = 0
    traj = [theta.copy()]
    for k in range(1, steps + 1):
        phi = streams.phi_step(k)
        d = streams.noise_step()
        c = phi.thresholds_common(theta)
        y = phi.outputs(model.theta_star, d)
        signs = 1.0 - 2.0 * (y < c)
        if phi.is_sparse:
            pooled = np.bincount(phi.support, weights=phi.eta * signs, minlength=l)
        else:
            pooled = phi.dense.T @ signs
        cand = theta + pooled * (1.0 / k)
        if float(cand @ cand) > float(sigma) ** 2:
            theta = np.zeros(l)
            sigma += 1
        else:
            theta = cand
        if k % record_every == 0 or k == steps:
            traj.append(theta.copy())
    return np.array(traj)


class RootSolveError(RuntimeError):
    """Newton iteration failed; carries the last iterate and residual."""

    def __init__(self, message: str, theta: np.ndarray, residual_norm: float):
        super().__init__(f"{message} (residual {residual_norm:.3e})")
        self.theta = theta
        self.residual_norm = residual_norm


def solve_root(
    ctx: RegressionContext,
    theta_init,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Zero of the averaged correction field by damped Newton.

    Needs the sparse regressor kind, where f decouples per coordinate and
    the curvature is diagonal, so the half-step backtracking accepts each
    coordinate separately once its own ``|f_m|`` strictly decreased.  That
    matters far from the root: f_m saturates with a polynomial tail, so any
    overshoot deeper into saturation strictly increases ``|f_m|`` and gets
    halved away instead of dragging the iterate where the density
    quadrature underflows.  Raises :class:`RootSolveError` after
    ``max_iter`` iterations or a stalled line search.
    """
    theta = np.array(theta_init, dtype=np.float64)
    fval = regression_function(ctx, theta)
    for _ in range(max_iter):
        fnorm = float(np.linalg.norm(fval))
        if fnorm <= tol:
            return theta
        jac = regression_jacobian(ctx, theta)
        try:
            step = np.linalg.solve(jac, fval)
        except np.linalg.LinAlgError:
            raise RootSolveError("singular curvature", theta, fnorm) from None
        fabs = np.abs(fval)
        scales = np.ones_like(step)
        for _ in range(120):
            cand = theta + scales * step
            fcand = regression_function(ctx, cand)
            bad = (np.abs(fcand) >= fabs) & (step != 0.0)
            if not bad.any():
                break
            scales[bad] *= 0.5
            moved = np.abs(scales[bad] * step[bad])
            if np.all(moved < 1e-17 * np.maximum(1.0, np.abs(theta[bad]))):
                raise RootSolveError("line search stalled", theta, fnorm)
        else:
            raise RootSolveError("line search stalled", theta, fnorm)
        theta, fval = cand, fcand
    fnorm = float(np.linalg.norm(fval))
    if fnorm <= tol:
        return theta
    raise RootSolveError(f"no convergence in {max_iter} iterations", theta, fnorm)


@dataclass(frozen=True)
class ProbeReport:
    """What a single agent can identify from its own stream alone."""

    agent: int
    steps: int
    threshold: float
    final_theta: np.ndarray
    errors: np.ndarray
    identifiable: tuple[int, ...]
    stalled: tuple[int, ...]
    touched: tuple[int, ...]
    truncation_events: int

    def rows(self) -> list[dict]:
        """One dict per coordinate, ready for JSON-lines output."""
        out = []
        for m in range(1, self.errors.size + 1):
            out.append(
                {
                    "coordinate": m,
                    "estimate": float(self.final_theta[m - 1]),
                    "error": float(self.errors[m - 1]),
                    "identifiable": m in self.identifiable,
                    "stalled": m in self.stalled,
                }
            )
        return out


def identifiability_probe(
    model: SystemModel,
    agent: int,
    steps: int,
    seed,
    threshold: float = 0.1,
) -> ProbeReport:
    """Run one agent in isolation and classify coordinates.

    The agent keeps its own regressor stream (for the sparse kind that
    means its own support coordinate) but hears nobody.  Coordinates whose
    final absolute error is below ``threshold`` are reported identifiable;
    coordinates whose estimate never left the zero initial value are
    reported stalled - with one-coordinate excitation those are exactly the
    coordinates other agents would have to supply through the network.
    """
    if not 1 <= agent <= model.n_agents:
        raise ValueError(f"agent must lie in 1..{model.n_agents}")
    base = model.regressor_for(agent)
    if isinstance(base, SparseUniformRegressors):
        sub_gen: object = SparseUniformRegressors(
            base.l, support=(base.support_coordinate(agent),)
        )
    elif isinstance(base, DenseUniformRegressors):
        sub_gen = base
    else:
        sub_gen = CustomBoundedRegressors(
            base.l, base.bound, lambda _a, k, g: base.sample(agent, k, g)
        )
    submodel = SystemModel(model.theta_star, sub_gen, model.noise_for(agent), 1)
    g = complete_graph(1)
    schedule = TopologySchedule.static(g, metropolis_weights(g))

    touched = np.zeros(model.l, dtype=bool)

    def watch(_prev, new):
        np.logical_or(touched, new.theta[0] != 0.0, out=touched)

    final = run(submodel, schedule, steps, streams=ModelStreams(submodel, seed), sinks=(watch,))
    errors = np.abs(final.theta[0] - model.theta_star)
    identifiable = tuple(int(m) for m in range(1, model.l + 1) if errors[m - 1] < threshold)
    stalled = tuple(int(m) for m in range(1, model.l + 1) if not touched[m - 1])
    touched_t = tuple(int(m) for m in range(1, model.l + 1) if touched[m - 1])
    return ProbeReport(
        agent=agent,
        steps=steps,
        threshold=threshold,
        final_theta=final.theta[0].copy(),
        errors=errors,
        identifiable=identifiable,
        stalled=stalled,
        touched=touched_t,
        truncation_events=final.ledger.truncation_events,
    )
