"""Linear plant with binary-valued sensors.

Each agent i observes the scalar output ``y = phi_i' theta_star + d_i``
only through a one-bit comparison against a threshold of its own choosing.
This module holds the true system (parameter, regressor processes, noise
models) and the sensor arithmetic; nothing here knows about the network or
the identification recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr


# ---------------------------------------------------------------------------
# noise models

class NoiseModel:
    """Zero-median sensor noise with a known smooth distribution.

    Concrete models expose the CDF and density (both vectorised), direct
    sampling, and a ``kind`` tag used by config files.  All built-in models
    are symmetric about zero, so ``cdf(0) == 0.5`` holds exactly.
    """

    kind = "abstract"

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianNoise(NoiseModel):
    sigma2: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def cdf(self, x):
        return ndtr(np.asarray(x, dtype=np.float64) / self.sigma)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-0.5 * (x / self.sigma) ** 2) / (self.sigma * math.sqrt(2.0 * math.pi))

    def sample(self, rng, size=None):
        return rng.normal(0.0, self.sigma, size)

    def params(self):
        return {"sigma2": self.sigma2}


@dataclass(frozen=True)
class LaplaceNoise(NoiseModel):
    scale: float = 1.0
    kind = "laplace"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < 0, 0.5 * np.exp(x / self.scale), 1.0 - 0.5 * np.exp(-x / self.scale))

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-np.abs(x) / self.scale) / (2.0 * self.scale)

    def sample(self, rng, size=None):
        return rng.laplace(0.0, self.scale, size)

    def params(self):
        return {"scale": self.scale}


@dataclass(frozen=True)
class UniformNoise(NoiseModel):
    half_width: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.clip((x + self.half_width) / (2.0 * self.half_width), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(np.abs(x) <= self.half_width, 1.0 / (2.0 * self.half_width), 0.0)

    def sample(self, rng, size=None):
        return rng.uniform(-self.half_width, self.half_width, size)

    def params(self):
        return {"half_width": self.half_width}


_NOISE_KINDS = {"gaussian": GaussianNoise, "laplace": LaplaceNoise, "uniform": UniformNoise}


def make_noise(kind: str, **params) -> NoiseModel:
    """Build a noise model from its config tag and parameters."""
    try:
        cls = _NOISE_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown noise kind {kind!r}; one of {sorted(_NOISE_KINDS)}") from None
    return cls(**params)


# ---------------------------------------------------------------------------
# regressor generators

class RegressorGenerator:
    """Bounded stationary regressor process for one or more agents."""

    kind = "abstract"
    l: int
    bound: float

    def sample(self, agent: int, k: int, rng: np.random.Generator) -> np.ndarray:
        """Draw phi_{agent,k}: an ``(l,)`` vector with ``||phi|| <= bound``."""
        raise NotImplementedError


@dataclass(frozen=True)
class SparseUniformRegressors(RegressorGenerator):
    """One active coordinate per agent with uniform amplitude on [-1, 1].

    Agent i excites coordinate ``((i - 1) mod l) + 1`` unless an explicit
    per-agent ``support`` tuple overrides the rule.  The norm bound is 1.
    """

    l: int
    support: tuple[int, ...] | None = None
    kind = "sparse-uniform"

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("l must be >= 1")
        if self.support is not None:
            sup = tuple(int(m) for m in self.support)
            if any(not 1 <= m <= self.l for m in sup):
                raise ValueError("support coordinates must lie in 1..l")
            object.__setattr__(self, "support", sup)

    @property
    def bound(self) -> float:
        return 1.0

    def support_coordinate(self, agent: int) -> int:
        """1-based coordinate excited by this agent."""
        if self.support is not None:
            return self.support[agent - 1]
        return (agent - 1) % self.l + 1

    def coverage(self, n_agents: int) -> set[int]:
        """Coordinates excited by at least one of agents 1..n_agents."""
        return {self.support_coordinate(i) for i in range(1, n_agents + 1)}

    def sample(self, agent, k, rng):
        phi = np.zeros(self.l)
        phi[self.support_coordinate(agent) - 1] = rng.uniform(-1.0, 1.0)
        return phi


@dataclass(frozen=True)
class DenseUniformRegressors(RegressorGenerator):
    """All coordinates iid uniform, scaled so that ``||phi|| <= bound``."""

    l: int
    bound: float = 1.0
    kind = "dense-uniform"

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("l must be >= 1")
        if not self.bound > 0:
            raise ValueError("bound must be positive")

    def sample(self, agent, k, rng):
        return rng.uniform(-1.0, 1.0, self.l) * (self.bound / math.sqrt(self.l))


@dataclass(frozen=True)
class CustomBoundedRegressors(RegressorGenerator):
    """User-supplied sampler hook, e.g. for dependent (mixing) processes.

    ``sampler(agent, k, rng)`` must return an ``(l,)`` vector; the norm
    bound is enforced on every draw.
    """

    l: int
    bound: float
    sampler: Callable[[int, int, np.random.Generator], np.ndarray]
    kind = "custom-bounded"

    def sample(self, agent, k, rng):
        phi = np.asarray(self.sampler(agent, k, rng), dtype=np.float64)
        if phi.shape != (self.l,):
            raise ValueError(f"sampler returned shape {phi.shape}, expected ({self.l},)")
        if float(phi @ phi) > self.bound**2 * (1.0 + 1e-12):
            raise ValueError("sampler exceeded the declared norm bound")
        return phi


def sample_regressor(gen: RegressorGenerator, agent: int, k: int, rng) -> np.ndarray:
    return gen.sample(agent, k, rng)


# ---------------------------------------------------------------------------
# per-step batches

@dataclass
class PhiBatch:
    """Regressor draws for every agent at one step.

    Sparse layout stores just the amplitude and active coordinate per agent;
    dense layout stores full rows.  All engine arithmetic that touches the
    regressors goes through these methods, so the sparse fast path and the
    dense path cannot drift apart.
    """

    l: int
    eta: np.ndarray | None = None       # (n,) sparse amplitudes
    support: np.ndarray | None = None   # (n,) 0-based active coordinate
    dense: np.ndarray | None = None     # (n, l) full rows
    rows_idx: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        sparse = self.eta is not None and self.support is not None
        if sparse == (self.dense is not None):
            raise ValueError("need either (eta, support) or dense, not both")
        if sparse and self.rows_idx is None:
            self.rows_idx = np.arange(len(self.eta))

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    @property
    def n(self) -> int:
        return len(self.eta) if self.is_sparse else self.dense.shape[0]

    def thresholds(self, theta: np.ndarray) -> np.ndarray:
        """phi_i' theta_i for every agent; theta has shape (n, l)."""
        if self.is_sparse:
            return self.eta * theta[self.rows_idx, self.support]
        return np.einsum("ij,ij->i", self.dense, theta)

    def thresholds_common(self, theta: np.ndarray) -> np.ndarray:
        """phi_i' theta against one shared ``(l,)`` parameter vector."""
        if self.is_sparse:
            return self.eta * theta[self.support]
        return self.dense @ theta

    def outputs(self, theta_star: np.ndarray, d: np.ndarray) -> np.ndarray:
        """True plant outputs phi_i' theta_star + d_i."""
        if self.is_sparse:
            return self.eta * theta_star[self.support] + d
        return self.dense @ theta_star + d

    def add_innovation(self, target: np.ndarray, a_k: float, signs: np.ndarray) -> None:
        """In-place ``target += a_k * phi_i * signs_i`` row by row.

        Sparse rows touch one distinct (row, coordinate) slot each, so plain
        fancy-index assignment is safe.
        """
        if self.is_sparse:
            target[self.rows_idx, self.support] += (self.eta * signs) * a_k
        else:
            target += (self.dense * signs[:, None]) * a_k

    def rows(self) -> np.ndarray:
        """Materialise the full (n, l) matrix (reference/diagnostic use)."""
        if not self.is_sparse:
            return self.dense.copy()
        out = np.zeros((self.n, self.l))
        out[self.rows_idx, self.support] = self.eta
        return out


# ---------------------------------------------------------------------------
# sensor arithmetic

def output(phi: np.ndarray, theta_star: np.ndarray, noise: float) -> float:
    """Scalar plant output ``phi' theta_star + noise``."""
    phi = np.asarray(phi, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if phi.shape != theta_star.shape:
        raise ValueError(f"shape mismatch: {phi.shape} vs {theta_star.shape}")
    return float(phi @ theta_star) + float(noise)

def binary_observe(y: float, threshold: float) -> int:
    """One-bit sensor reading: 1 if ``y < threshold`` else 0 (ties give 0)."""
    return int(y < threshold)

def sign_pm(x):
    """Sign with the sensor's tie convention: +1 for x >= 0, -1 otherwise.

    Matches ``1 - 2 * binary_observe(y, c)`` applied to ``x = y - c``.
    """
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# the system under identification

@dataclass(frozen=True, eq=False)
class SystemModel:
    """True parameter plus per-agent regressor and noise processes.

    ``regressors`` and ``noises`` may be single shared objects or sequences
    with one entry per agent (1-based agent ids index into them).
    """

    theta_star: np.ndarray
    regressors: RegressorGenerator | Sequence[RegressorGenerator]
    noises: NoiseModel | Sequence[NoiseModel]
    n_agents: int

    def __post_init__(self):
        theta = np.array(self.theta_star, dtype=np.float64)
        if theta.ndim != 1 or theta.size == 0:
            raise ValueError("theta_star must be a nonempty vector")
        theta.flags.writeable = False
        object.__setattr__(self, "theta_star", theta)
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        for name in ("regressors", "noises"):
            val = getattr(self, name)
            if not isinstance(val, (RegressorGenerator, NoiseModel)):
                val = tuple(val)
                if len(val) != self.n_agents:
                    raise ValueError(f"{name}: expected {self.n_agents} entries, got {len(val)}")
                object.__setattr__(self, name, val)
        for i in range(1, self.n_agents + 1):
            if self.regressor_for(i).l != self.l:
                raise ValueError("regressor dimension does not match theta_star")

    @property
    def l(self) -> int:
        return self.theta_star.shape[0]

    def regressor_for(self, agent: int) -> RegressorGenerator:
        if isinstance(self.regressors, RegressorGenerator):
            return self.regressors
        return self.regressors[agent - 1]

    def noise_for(self, agent: int) -> NoiseModel:
        if isinstance(self.noises, NoiseModel):
            return self.noises
        return self.noises[agent - 1]

    def uniform_regressor_kind(self) -> str | None:
        """The common regressor kind, or None if agents mix kinds."""
        kinds = {self.regressor_for(i).kind for i in range(1, self.n_agents + 1)}
        return kinds.pop() if len(kinds) == 1 else None


def graded_theta_star(l: int) -> np.ndarray:
    """Benchmark parameter vector with entries ``(1 + 0.1 j) sqrt(j)``."""
    j = np.arange(1, l + 1, dtype=np.float64)
    return (1.0 + 0.1 * j) * np.sqrt(j)
