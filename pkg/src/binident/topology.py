"""Time-varying communication topology.

Directed graphs with mandatory self-loops, weight matrix constructions
(Metropolis and uniform-by-degree), schedules over steps, validation of the
standing network assumptions (per-step double stochasticity, a positive
entry floor, and windowed joint strong connectivity), and backward products
of the weight matrices whose deviation from the averaging matrix decays
geometrically on validated schedules.

Agent ids are 1-based in the public API.  An edge ``(j, i)`` means agent i
receives from agent j; matrices are indexed ``w[i-1, j-1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .streams import as_generator

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# graphs

@dataclass(frozen=True)
class Digraph:
    """Directed communication graph on agents 1..n with all self-loops."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        edges = frozenset((int(j), int(i)) for j, i in self.edges)
        object.__setattr__(self, "edges", edges)
        for j, i in edges:
            if not (1 <= j <= self.n and 1 <= i <= self.n):
                raise ValueError(f"edge ({j}, {i}) out of range 1..{self.n}")
        missing = [i for i in range(1, self.n + 1) if (i, i) not in edges]
        if missing:
            raise ValueError(f"missing self-loops for agents {missing}")

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        """Agents j (including i itself) whose values agent i receives."""
        return tuple(sorted(j for j, t in self.edges if t == i))

    def neighbor_count(self, i: int) -> int:
        """|N_i|: in-neighbors including the agent itself."""
        return sum(1 for j, t in self.edges if t == i)

    @property
    def is_symmetric(self) -> bool:
        return all((i, j) in self.edges for j, i in self.edges)

    def adjacency(self) -> np.ndarray:
        """Boolean (n, n) matrix, ``adj[i-1, j-1]`` true iff i receives from j."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        for j, i in self.edges:
            adj[i - 1, j - 1] = True
        return adj

    def union(self, other: "Digraph") -> "Digraph":
        if other.n != self.n:
            raise ValueError("cannot union graphs of different sizes")
        return Digraph(self.n, self.edges | other.edges)


def _with_self_loops(n: int, pairs: Iterable[tuple[int, int]]) -> frozenset:
    edges = {(i, i) for i in range(1, n + 1)}
    edges.update((int(j), int(i)) for j, i in pairs)
    return frozenset(edges)


def from_undirected_pairs(n: int, pairs: Iterable[tuple[int, int]]) -> Digraph:
    """Graph with self-loops plus both directions of each given pair."""
    both = []
    for a, b in pairs:
        both.append((a, b))
        both.append((b, a))
    return Digraph(n, _with_self_loops(n, both))


def from_directed_pairs(n: int, pairs: Iterable[tuple[int, int]]) -> Digraph:
    """Graph with self-loops plus the given directed edges (j, i)."""
    return Digraph(n, _with_self_loops(n, pairs))


def complete_graph(n: int) -> Digraph:
    return from_undirected_pairs(n, [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)])


def ring_graph(n: int) -> Digraph:
    """Undirected cycle 1-2-...-n-1 (n >= 2; n = 1 is just the self-loop)."""
    if n == 1:
        return from_undirected_pairs(1, [])
    return from_undirected_pairs(n, [(i, i % n + 1) for i in range(1, n + 1)])


def generate_poisson_graph(n: int, p: float, rng) -> Digraph:
    """Random undirected graph: each pair linked independently with prob p.

    Self-loops are always present.  ``rng`` may be a seed or Generator.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    gen = as_generator(rng)
    iu, ju = np.triu_indices(n, k=1)
    hit = gen.random(iu.size) < p
    pairs = [(int(a) + 1, int(b) + 1) for a, b in zip(iu[hit], ju[hit])]
    return from_undirected_pairs(n, pairs)


# ---------------------------------------------------------------------------
# weight matrices

@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Nonnegative weights whose support equals the graph's edge set."""

    graph: Digraph
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        n = self.graph.n
        if w.shape != (n, n):
            raise ValueError(f"weight matrix shape {w.shape} != ({n}, {n})")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        support = w > 0
        adj = self.graph.adjacency()
        if not np.array_equal(support, adj):
            raise ValueError("weight support does not match the graph's edges")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        support.flags.writeable = False
        object.__setattr__(self, "support", support)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def min_positive_entry(self) -> float:
        return float(self.w[self.support].min())


def is_doubly_stochastic(w, tol: float = 1e-9) -> bool:
    """True if rows and columns all sum to 1 (within tol) and entries are >= 0."""
    mat = w.w if isinstance(w, WeightMatrix) else np.asarray(w, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("expected a square matrix")
    if np.any(mat < 0):
        return False
    return bool(
        np.all(np.abs(mat.sum(axis=0) - 1.0) <= tol)
        and np.all(np.abs(mat.sum(axis=1) - 1.0) <= tol)
    )


def metropolis_weights(g: Digraph) -> WeightMatrix:
    """Doubly stochastic weights for a symmetric graph.

    Off-diagonal: ``1 / (1 + max(d_i, d_j))`` with d the self-loop-free
    degree; the diagonal absorbs the remainder.  Symmetry of the graph is
    required; the result is symmetric, hence doubly stochastic.
    """
    if not g.is_symmetric:
        raise ValueError("Metropolis weights need a symmetric graph")
    adj = g.adjacency()
    off = adj.copy()
    np.fill_diagonal(off, False)
    deg = off.sum(axis=1)
    pair_max = np.maximum(deg[:, None], deg[None, :])
    with np.errstate(divide="ignore"):
        w = np.where(off, 1.0 / (1.0 + pair_max), 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return WeightMatrix(g, w)


def degree_weights(g: Digraph, tol: float = 1e-9) -> tuple[WeightMatrix, bool]:
    """Uniform weights ``1/|N_i|`` over each agent's in-neighborhood.

    Always row stochastic; returns ``(weights, doubly_stochastic)`` because
    on most graphs the columns do not sum to one, which callers may need to
    surface (the averaging guarantees assume double stochasticity).
    """
    adj = g.adjacency()
    w = adj / adj.sum(axis=1, keepdims=True)
    wm = WeightMatrix(g, w)
    flag = is_doubly_stochastic(wm, tol)
    if not flag:
        logger.warning("degree weights are not doubly stochastic on this graph")
    return wm, flag


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True, eq=False)
class TopologySchedule:
    """Assignment of a (graph, weights) pair to every step k >= 1.

    ``mode`` is one of ``static``, ``periodic-list``, ``regenerated-per-step``.
    ``B`` is the connectivity window length the schedule claims: the union
    graph over any B consecutive steps should be strongly connected (checked
    by :func:`validate_c4`, not assumed).
    """

    mode: str
    B: int
    pairs: tuple[tuple[Digraph, WeightMatrix], ...] = ()
    factory: Callable[[int], tuple[Digraph, WeightMatrix]] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.mode in ("static", "periodic-list"):
            if not self.pairs:
                raise ValueError(f"{self.mode} schedule needs at least one pair")
            if self.mode == "static" and len(self.pairs) != 1:
                raise ValueError("static schedule takes exactly one pair")
            sizes = {g.n for g, _ in self.pairs}
            if len(sizes) != 1:
                raise ValueError("all graphs in a schedule must have the same size")
            for g, w in self.pairs:
                if w.graph is not g and w.graph != g:
                    raise ValueError("weight matrix paired with a different graph")
        elif self.mode == "regenerated-per-step":
            if self.factory is None:
                raise ValueError("regenerated schedule needs a factory")
        else:
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def static(cls, graph: Digraph, weights: WeightMatrix, B: int = 1) -> "TopologySchedule":
        return cls(mode="static", B=B, pairs=((graph, weights),))

    @classmethod
    def periodic(cls, pairs: Sequence[tuple[Digraph, WeightMatrix]], B: int) -> "TopologySchedule":
        return cls(mode="periodic-list", B=B, pairs=tuple(pairs))

    @classmethod
    def regenerated(cls, factory: Callable[[int], tuple[Digraph, WeightMatrix]], B: int) -> "TopologySchedule":
        return cls(mode="regenerated-per-step", B=B, factory=factory)

    @property
    def n_agents(self) -> int:
        if self.pairs:
            return self.pairs[0][0].n
        return self.factory(1)[0].n

    @property
    def period(self) -> int | None:
        """Cycle length for static/periodic schedules, None if regenerated."""
        return len(self.pairs) if self.pairs else None

    def __getitem__(self, k: int) -> tuple[Digraph, WeightMatrix]:
        if k < 1:
            raise IndexError("steps are numbered from 1")
        if self.mode == "static":
            return self.pairs[0]
        if self.mode == "periodic-list":
            return self.pairs[(k - 1) % len(self.pairs)]
        return self.factory(k)

    def materialize(self, steps: int) -> "TopologySchedule":
        """Freeze the first ``steps`` pairs into a periodic-list schedule.

        Intended for serialising finite runs of regenerated schedules; the
        result repeats after ``steps``.
        """
        return TopologySchedule.periodic([self[k] for k in range(1, steps + 1)], self.B)


def partitioned_ring_schedule(
    n: int,
    period: int,
    weight_fn: Callable[[Digraph], WeightMatrix] = metropolis_weights,
) -> TopologySchedule:
    """Ring split into ``period`` sparse phases; union over any window = ring.

    Phase r (1-based) carries the undirected ring edges (i, i mod n + 1)
    with i = r - 1 (mod period), so every window of ``period`` consecutive
    steps sees the whole ring and B = period.
    """
    if not 1 <= period <= n:
        raise ValueError("period must lie in 1..n")
    pairs = []
    for r in range(period):
        links = [(i, i % n + 1) for i in range(1, n + 1) if (i - 1) % period == r]
        g = from_undirected_pairs(n, links)
        pairs.append((g, weight_fn(g)))
    if period == 1:
        return TopologySchedule.static(*pairs[0])
    return TopologySchedule.periodic(pairs, B=period)


# ---------------------------------------------------------------------------
# validation

def _strongly_connected(adj: np.ndarray) -> bool:
    ncomp, _ = connected_components(csr_matrix(adj), directed=True, connection="strong")
    return int(ncomp) == 1


@dataclass
class ValidationReport:
    """Outcome of the standing-assumption checks on a schedule."""

    steps_checked: int
    stochasticity_failures: list[tuple[int, float]]   # (step, worst row/col deviation)
    kappa: float
    min_entry: float
    entry_floor_failures: list[int]
    windows_checked: int
    failed_windows: list[int]

    @property
    def stochasticity_ok(self) -> bool:
        return not self.stochasticity_failures

    @property
    def entry_floor_ok(self) -> bool:
        return not self.entry_floor_failures

    @property
    def connectivity_ok(self) -> bool:
        return not self.failed_windows

    @property
    def passed(self) -> bool:
        return self.stochasticity_ok and self.entry_floor_ok and self.connectivity_ok

    def summary(self) -> str:
        bits = [
            f"steps checked: {self.steps_checked}",
            f"doubly stochastic: {'ok' if self.stochasticity_ok else f'failed at steps {[s for s, _ in self.stochasticity_failures]}'}",
            f"entry floor {self.kappa:g}: {'ok' if self.entry_floor_ok else f'failed at steps {self.entry_floor_failures}'} (min entry {self.min_entry:g})",
            f"connectivity over {self.windows_checked} windows: {'ok' if self.connectivity_ok else f'failed starts {self.failed_windows}'}",
        ]
        return "; ".join(bits)


def validate_c4(
    schedule: TopologySchedule,
    kappa: float | None = None,
    horizon: int | None = None,
    tol: float = 1e-9,
) -> ValidationReport:
    """Check the standing network assumptions over a schedule.

    Verifies, per examined step, that the weight matrix is doubly
    stochastic (within ``tol``) with positive entries no smaller than
    ``kappa`` (defaults to the smallest positive entry seen, reported), and
    that the union graph over every window of B consecutive steps is
    strongly connected.

    Static schedules examine one step; periodic schedules examine one full
    period with wrap-around windows (the schedule is infinite); regenerated
    schedules require an explicit ``horizon``.
    """
    if schedule.mode == "regenerated-per-step":
        if horizon is None:
            raise ValueError("regenerated schedules need an explicit horizon")
        steps = list(range(1, horizon + 1))
        window_starts = list(range(1, max(horizon - schedule.B + 1, 0) + 1))
        wrap = None
    else:
        period = schedule.period
        steps = list(range(1, period + 1))
        window_starts = steps
        wrap = period

    pairs = {k: schedule[k] for k in steps}

    stoch_failures: list[tuple[int, float]] = []
    min_entry = np.inf
    for k in steps:
        _, wm = pairs[k]
        dev_rows = np.abs(wm.w.sum(axis=1) - 1.0).max()
        dev_cols = np.abs(wm.w.sum(axis=0) - 1.0).max()
        worst = float(max(dev_rows, dev_cols))
        if worst > tol:
            stoch_failures.append((k, worst))
        min_entry = min(min_entry, wm.min_positive_entry)

    if kappa is None:
        kappa = float(min_entry)
        floor_failures: list[int] = []
    else:
        floor_failures = [
            k for k in steps if pairs[k][1].min_positive_entry < kappa - 1e-15
        ]

    failed_windows: list[int] = []
    for start in window_starts:
        union = None
        for t in range(schedule.B):
            k = start + t
            if wrap is not None:
                k = (k - 1) % wrap + 1
            g = pairs[k][0] if k in pairs else schedule[k][0]
            union = g if union is None else union.union(g)
        if not _strongly_connected(union.adjacency()):
            failed_windows.append(start)

    return ValidationReport(
        steps_checked=len(steps),
        stochasticity_failures=stoch_failures,
        kappa=float(kappa),
        min_entry=float(min_entry),
        entry_floor_failures=floor_failures,
        windows_checked=len(window_starts),
        failed_windows=failed_windows,
    )


# ---------------------------------------------------------------------------
# backward products

def backward_product_deviation(schedule: TopologySchedule, k: int, s: int) -> float:
    """Spectral-norm distance of W(k)...W(s) from uniform averaging.

    Returns ``||W(k) W(k-1) ... W(s) - (1/n) 11'||_2``; the empty product
    (k = s - 1) is the identity.  On schedules passing validation this
    decays geometrically in k - s.
    """
    if s < 1 or k < s - 1:
        raise ValueError("need s >= 1 and k >= s - 1")
    n = schedule.n_agents
    prod = np.eye(n)
    for t in range(s, k + 1):
        prod = schedule[t][1].w @ prod
    return float(np.linalg.norm(prod - np.full((n, n), 1.0 / n), 2))


def deviation_profile(schedule: TopologySchedule, s: int, max_lag: int) -> np.ndarray:
    """Deviations of the backward products for lags k - s = 0..max_lag."""
    n = schedule.n_agents
    avg = np.full((n, n), 1.0 / n)
    out = np.empty(max_lag + 1)
    prod = np.eye(n)
    for lag in range(max_lag + 1):
        prod = schedule[s + lag][1].w @ prod
        out[lag] = np.linalg.norm(prod - avg, 2)
    return out


@dataclass(frozen=True)
class GeometricFit:
    """Dominating envelope ``c * rho**lag`` fitted to a deviation profile."""

    c: float
    rho: float
    r_squared: float
    lags_used: int

    def envelope(self, lags) -> np.ndarray:
        return self.c * self.rho ** np.asarray(lags, dtype=np.float64)


def fit_geometric_envelope(deviations: np.ndarray, floor: float = 1e-13) -> GeometricFit:
    """Least-squares geometric fit to a deviation profile.

    Fits ``log dev = log c + lag log rho`` over entries above ``floor``
    (below that, float rounding dominates), then scales c up so the
    envelope dominates every fitted entry.
    """
    dev = np.asarray(deviations, dtype=np.float64)
    lags = np.arange(dev.size)
    keep = dev > floor
    if keep.sum() < 2:
        raise ValueError("not enough resolvable deviations to fit")
    x, y = lags[keep], np.log(dev[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid**2).sum()) / ss_tot
    rho = float(np.exp(slope))
    c = float(np.exp(intercept + resid.max()))  # shift up to dominate
    return GeometricFit(c=c, rho=rho, r_squared=r2, lags_used=int(keep.sum()))


# ---------------------------------------------------------------------------
# serialization

def dump_schedule(schedule: TopologySchedule, path) -> None:
    """Write a schedule as text: header ``n B mode``, then per-step blocks.

    Each block is a ``step <k>`` line followed by one ``j i w`` triple per
    positive weight (receiver i takes weight w from sender j).  Weights are
    written with repr so loading reproduces them bit for bit.  Regenerated
    schedules have no finite description; materialize() them first.
    """
    if schedule.mode == "regenerated-per-step":
        raise ValueError("cannot serialise a regenerated schedule; use materialize(steps)")
    lines = [f"{schedule.n_agents} {schedule.B} {schedule.mode}"]
    for idx, (g, wm) in enumerate(schedule.pairs, start=1):
        lines.append(f"step {idx}")
        for j, i in sorted(g.edges):
            lines.append(f"{j} {i} {float(wm.w[i - 1, j - 1])!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_schedule(path) -> TopologySchedule:
    """Inverse of :func:`dump_schedule`."""
    with open(path, encoding="utf-8") as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw:
        raise ValueError("empty schedule file")
    head = raw[0].split()
    if len(head) != 3:
        raise ValueError(f"bad header {raw[0]!r}; expected 'n B mode'")
    n, B, mode = int(head[0]), int(head[1]), head[2]

    blocks: list[list[tuple[int, int, float]]] = []
    for ln in raw[1:]:
        if ln.startswith("step "):
            blocks.append([])
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"bad triple line {ln!r}")
        if not blocks:
            raise ValueError("triple before any 'step' line")
        blocks[-1].append((int(parts[0]), int(parts[1]), float(parts[2])))

    pairs = []
    for triples in blocks:
        w = np.zeros((n, n))
        edges = []
        for j, i, wv in triples:
            w[i - 1, j - 1] = wv
            edges.append((j, i))
        g = Digraph(n, frozenset(edges))
        pairs.append((g, WeightMatrix(g, w)))

    if mode == "static":
        if len(pairs) != 1:
            raise ValueError("static schedule must contain exactly one block")
        return TopologySchedule.static(pairs[0][0], pairs[0][1], B=B)
    if mode == "periodic-list":
        return TopologySchedule.periodic(pairs, B=B)
    raise ValueError(f"unknown mode {mode!r} in schedule file")
