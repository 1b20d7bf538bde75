"""Communication topologies, row-stochastic weights, and the privacy-augmented
mixing matrix.

The augmented matrix couples each agent's shared component to a hidden one
through its private scalar pi_i:

    W~ = [[W - eps*Pi, eps*Pi ],
          [eps*Pi,     I - eps*Pi]],      V = [[Pi], [I - Pi]],

which keeps every row summing to 1 and, for doubly stochastic W, every
column as well. (The bottom-right block follows the componentwise update
beta <- (1 - eps*pi_i) beta + eps*pi_i alpha; a variant with (1-eps)*Pi
there would break the unit row sums.)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import eigenvalues

__all__ = [
    "CommGraph",
    "StochasticMatrix",
    "PrivacyWeights",
    "AugmentedWeights",
    "build_weights",
    "build_augmented",
    "second_eigenvalue",
    "augmented_pair_eigenvalues",
    "directed_cycle",
    "complete_graph",
]

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class CommGraph:
    """Agent topology as per-agent neighbor sets; j in neighbors[i] means
    agent i receives values from agent j. Every agent is its own neighbor."""

    neighbor_sets: tuple[frozenset, ...]

    def __init__(self, neighbors):
        sets = []
        n = len(neighbors)
        for i, ns in enumerate(neighbors):
            s = frozenset(int(j) for j in ns) | {i}
            for j in s:
                if not 0 <= j < n:
                    raise ValueError(f"agent {i}: neighbor index {j} out of range [0, {n})")
            sets.append(s)
        object.__setattr__(self, "neighbor_sets", tuple(sets))

    @property
    def agent_count(self) -> int:
        return len(self.neighbor_sets)

    def is_undirected(self) -> bool:
        return all(
            (i in self.neighbor_sets[j]) == (j in self.neighbor_sets[i])
            for i in range(self.agent_count)
            for j in range(self.agent_count)
        )

    def is_connected(self) -> bool:
        """Connectivity of the underlying undirected support."""
        n = self.agent_count
        adj = [set() for _ in range(n)]
        for i in range(n):
            for j in self.neighbor_sets[i]:
                adj[i].add(j)
                adj[j].add(i)
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n


def directed_cycle(n: int) -> CommGraph:
    """Directed circle 0 -> 1 -> ... -> n-1 -> 0 with self-loops: agent i
    receives from its predecessor."""
    return CommGraph([[i, (i - 1) % n] for i in range(n)])


def complete_graph(n: int) -> CommGraph:
    return CommGraph([list(range(n)) for _ in range(n)])


@dataclass(frozen=True)
class StochasticMatrix:
    """Row-stochastic neighbor-weight matrix consistent with a CommGraph."""

    w: np.ndarray
    graph: CommGraph

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        n = self.graph.agent_count
        if w.shape != (n, n):
            raise ValueError(f"weight shape {w.shape} does not match {n} agents")
        rows = w.sum(axis=1)
        if np.abs(rows - 1.0).max() > _ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1, got {rows}")
        for i in range(n):
            for j in range(n):
                inside = j in self.graph.neighbor_sets[i]
                if inside and w[i, j] <= 0:
                    raise ValueError(f"w[{i},{j}] must be positive for neighbor {j}")
                if not inside and w[i, j] != 0:
                    raise ValueError(f"w[{i},{j}] must be zero (not a neighbor)")
        object.__setattr__(self, "w", w)

    @property
    def agent_count(self) -> int:
        return self.graph.agent_count

    def is_doubly_stochastic(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.w.sum(axis=0) - 1.0).max() <= tol)


def build_weights(g: CommGraph, rule: str = "uniform") -> StochasticMatrix:
    """Build neighbor weights: `uniform` puts 1/|N_i| on each neighbor;
    `metropolis` (undirected graphs only) yields a symmetric doubly
    stochastic matrix."""
    n = g.agent_count
    if not g.is_connected():
        warnings.warn(
            "graph is disconnected; the fusion-step theorems assume an undirected "
            "connected topology",
            stacklevel=2,
        )
    if rule == "uniform":
        if not g.is_undirected():
            warnings.warn(
                "directed graph: theorem hypotheses assume an undirected topology; "
                "bounds use the largest non-unit eigenvalue magnitude",
                stacklevel=2,
            )
        w = np.zeros((n, n))
        for i, ns in enumerate(g.neighbor_sets):
            w[i, sorted(ns)] = 1.0 / len(ns)
    elif rule == "metropolis":
        if not g.is_undirected():
            raise ValueError("metropolis weights require an undirected graph")
        deg = [len(ns) - 1 for ns in g.neighbor_sets]  # excluding self
        w = np.zeros((n, n))
        for i, ns in enumerate(g.neighbor_sets):
            for j in ns:
                if j != i:
                    w[i, j] = 1.0 / (1 + max(deg[i], deg[j]))
            w[i, i] = 1.0 - w[i].sum()
    else:
        raise ValueError(f"unknown weight rule {rule!r}")
    return StochasticMatrix(w=w, graph=g)


@dataclass(frozen=True)
class PrivacyWeights:
    """Decomposition parameters: the public coupling scalar eps in (0, 2/3)
    and each agent's private pi_i in (0, 1)."""

    epsilon: float
    pi: tuple

    def __post_init__(self):
        if not 0.0 < self.epsilon < 2.0 / 3.0:
            raise ValueError(f"epsilon must lie in (0, 2/3), got {self.epsilon}")
        pi = tuple(float(p) for p in self.pi)
        for i, p in enumerate(pi):
            if not 0.0 < p < 1.0:
                raise ValueError(f"pi[{i}] must lie in (0, 1), got {p}")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def random(cls, epsilon: float, n: int, seed: int, lo: float = 0.1, hi: float = 0.9):
        """Seeded pi_i uniform on [lo, hi]; the margin keeps decompositions
        away from the degenerate interval ends."""
        rng = np.random.default_rng(seed)
        return cls(epsilon=epsilon, pi=tuple(rng.uniform(lo, hi, n)))


@dataclass(frozen=True)
class AugmentedWeights:
    """The 2N x 2N privacy mixing matrix and the 2N x N split selector."""

    w_tilde: np.ndarray
    v: np.ndarray
    doubly_stochastic: bool = field(default=False)

    def __post_init__(self):
        wt = np.asarray(self.w_tilde, dtype=float)
        rows = wt.sum(axis=1)
        if np.abs(rows - 1.0).max() > 1e-11:
            raise ValueError("augmented matrix rows must sum to 1")
        object.__setattr__(self, "w_tilde", wt)
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(
            self, "doubly_stochastic", bool(np.abs(wt.sum(axis=0) - 1.0).max() <= 1e-11)
        )

    @property
    def agent_count(self) -> int:
        return self.v.shape[1]


def build_augmented(w: StochasticMatrix, pw: PrivacyWeights) -> AugmentedWeights:
    """Assemble W~ and V from the base weights and decomposition parameters."""
    n = w.agent_count
    if len(pw.pi) != n:
        raise ValueError(f"{len(pw.pi)} pi values for {n} agents")
    pi = np.diag(pw.pi)
    e = pw.epsilon
    wt = np.block([[w.w - e * pi, e * pi], [e * pi, np.eye(n) - e * pi]])
    v = np.vstack([pi, np.eye(n) - pi])
    return AugmentedWeights(w_tilde=wt, v=v)


def second_eigenvalue(w) -> float:
    """Largest eigenvalue magnitude after removing one simple eigenvalue 1.

    Accepts a StochasticMatrix, AugmentedWeights, or a raw array. Raises if
    no eigenvalue equals 1 or if 1 is not simple (effectively disconnected
    topology).
    """
    if isinstance(w, StochasticMatrix):
        m = w.w
    elif isinstance(w, AugmentedWeights):
        m = w.w_tilde
    else:
        m = np.asarray(w, dtype=float)
    ev = eigenvalues(m).eigenvalues
    unit = np.abs(ev - 1.0) < 1e-8
    if not unit.any():
        raise ValueError("matrix has no eigenvalue 1; not row-stochastic?")
    if unit.sum() > 1:
        raise ValueError("eigenvalue 1 has multiplicity > 1 (disconnected topology)")
    rest = ev[~unit]
    if rest.size == 0:
        return 0.0
    lam = float(np.abs(rest).max())
    # rank-one mixing can leave a tiny numerical residue
    return 0.0 if lam < 1e-12 else lam


def augmented_pair_eigenvalues(lam: complex, eps: float) -> tuple[complex, complex]:
    """Eigenvalue pair of the augmented matrix branch for a base eigenvalue
    `lam` when every pi_i = 1:  (1 + lam +- sqrt((1-lam)^2 + 4 eps^2))/2 - eps."""
    root = np.sqrt(complex((1 - lam) ** 2 + 4 * eps**2))
    return (
        (1 + lam + root) / 2 - eps,
        (1 + lam - root) / 2 - eps,
    )
