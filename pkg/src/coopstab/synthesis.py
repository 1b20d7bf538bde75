"""Distributed gain synthesis (the predesign phase).

Each agent fuses its neighbors' shared Gramian components until the shared
part settles, recombines shared + hidden into a fused estimate of the
network Gramian, and solves its local Riccati equations:

    K^i = -(B^i)' [I + Gb' P_K Gb]^-1 Gb' P_K A       (Gb ~ sum_j B^j B^j')
    L^i = A P_L Gc [I + Gc P_L Gc]^-1 (C^i)'          (Gc ~ sum_j C^j' C^j)

With exact fused Gramians these make A + sum B^i K^i and A - sum L^i C^i
Schur stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericFailure
from .graph import AugmentedWeights, PrivacyWeights, StochasticMatrix, build_augmented
from .linalg import solve_dare
from .plant import PlantModel

__all__ = [
    "FusionResult",
    "fuse_gramian",
    "compute_control_gain",
    "compute_observer_gain",
    "AgentGains",
    "KappaBounds",
    "derive_kappa_bounds",
    "SynthesisResult",
    "synthesize_gains",
]


@dataclass
class FusionResult:
    """Outcome of one decomposed-consensus run.

    bar_history[h][i] / hat_history[h][i] hold agent i's shared and hidden
    components after round h (round 0 = initialization). share_log lists
    every transmitted shared matrix as (round, sender, receiver, value).
    """

    fused: list
    rounds_used: int
    converged: bool
    bar_history: list
    hat_history: list
    w: StochasticMatrix
    pw: PrivacyWeights

    @property
    def share_log(self):
        records = []
        nbrs = self.w.graph.neighbor_sets
        n = self.w.agent_count
        for h in range(self.rounds_used):
            for recv in range(n):
                for sender in sorted(nbrs[recv]):
                    if sender != recv:
                        records.append((h, sender, recv, self.bar_history[h][sender]))
        return records


def fuse_gramian(
    init_per_agent,
    w: StochasticMatrix,
    pw: PrivacyWeights,
    delta: float,
    max_rounds: int = 10_000,
) -> FusionResult:
    """Run the decomposed consensus on per-agent init matrices G_i.

    Shared parts start at pi_i * G_i, hidden parts at (1 - pi_i) * G_i; each
    round every agent averages neighbors' shared parts and exchanges mass
    with its own hidden part at rate eps * pi_i. Terminates when every
    agent's shared-part increment has 2-norm <= delta.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = w.agent_count
    if len(init_per_agent) != n:
        raise ValueError(f"{len(init_per_agent)} inits for {n} agents")
    inits = np.stack([np.atleast_2d(np.asarray(g, dtype=float)) for g in init_per_agent])
    pis = np.asarray(pw.pi, dtype=float).reshape(n, 1, 1)
    eps = pw.epsilon

    bars = pis * inits
    hats = (1.0 - pis) * inits
    bar_history = [list(bars)]
    hat_history = [list(hats)]
    converged = False
    rounds = 0
    wmat = w.w
    for h in range(1, max_rounds + 1):
        mixed = np.einsum("ij,jkl->ikl", wmat, bars)
        corr = eps * pis * (bars - hats)
        new_bars = mixed - corr
        new_hats = hats + corr
        inc = max(np.linalg.norm(new_bars[i] - bars[i], 2) for i in range(n))
        bars, hats = new_bars, new_hats
        bar_history.append(list(bars))
        hat_history.append(list(hats))
        rounds = h
        if inc <= delta:
            converged = True
            break
    if not converged:
        raise NumericFailure(
            f"gramian fusion did not meet delta={delta} within {max_rounds} rounds "
            "(slow mixing)"
        )
    fused = [bars[i] + hats[i] for i in range(n)]
    return FusionResult(
        fused=fused,
        rounds_used=rounds,
        converged=converged,
        bar_history=bar_history,
        hat_history=hat_history,
        w=w,
        pw=pw,
    )


def compute_control_gain(a, b_local, fused_b, p_k=None):
    """Local feedback gain from the fused input Gramian; returns (K^i, P_K)."""
    a = np.asarray(a, dtype=float)
    b_local = np.atleast_2d(np.asarray(b_local, dtype=float))
    g = 0.5 * (np.asarray(fused_b, dtype=float) + np.asarray(fused_b, dtype=float).T)
    if p_k is None:
        p_k = solve_dare(a, g)
    n = a.shape[0]
    k = -b_local.T @ np.linalg.solve(np.eye(n) + g.T @ p_k @ g, g.T @ p_k @ a)
    return k, p_k


def compute_observer_gain(a, c_local, fused_c, p_l=None):
    """Local estimator gain from the fused output Gramian; returns (L^i, P_L).

    Dual of the control gain: P_L solves the Riccati equation with (A', Gc).
    """
    a = np.asarray(a, dtype=float)
    c_local = np.atleast_2d(np.asarray(c_local, dtype=float))
    g = 0.5 * (np.asarray(fused_c, dtype=float) + np.asarray(fused_c, dtype=float).T)
    if p_l is None:
        p_l = solve_dare(a.T, g)
    n = a.shape[0]
    l = a @ p_l @ g @ np.linalg.solve(np.eye(n) + g @ p_l @ g, c_local.T)
    return l, p_l


@dataclass(frozen=True)
class AgentGains:
    k_gain: np.ndarray  # r_i x n
    l_gain: np.ndarray  # n x m_i
    fused_b: np.ndarray
    fused_c: np.ndarray


@dataclass(frozen=True)
class KappaBounds:
    """Norm bounds each agent can obtain without central coordination."""

    kappa_a: float
    kappa_b: float
    kappa_c: float
    kappa_k: float
    kappa_l: float
    kappa_p: float
    kappa_q: float


def _max_consensus(values, graph, rounds=None) -> float:
    """Every agent repeatedly takes the max over its in-neighbors; after at
    most N rounds all agents hold the global max on a connected graph."""
    vals = list(map(float, values))
    n = len(vals)
    for _ in range(rounds if rounds is not None else n):
        vals = [max(vals[j] for j in graph.neighbor_sets[i]) for i in range(n)]
    return max(vals)


def derive_kappa_bounds(a, fused_b, fused_c, gains, cert_p, cert_q, graph) -> KappaBounds:
    """Assemble the norm-bound set from fused Gramians and a max-consensus
    sweep over local gain norms."""
    kappa_a = float(np.linalg.norm(np.asarray(a, dtype=float), 2))
    kappa_b = float(np.sqrt(np.linalg.norm(np.asarray(fused_b, dtype=float), 2)))
    kappa_c = float(np.sqrt(np.linalg.norm(np.asarray(fused_c, dtype=float), 2)))
    kappa_k = _max_consensus((np.linalg.norm(g.k_gain, 2) for g in gains), graph)
    kappa_l = _max_consensus((np.linalg.norm(g.l_gain, 2) for g in gains), graph)
    kappa_p = float(np.linalg.norm(cert_p, 2))
    kappa_q = float(np.linalg.eigvalsh(cert_q)[0])
    return KappaBounds(
        kappa_a=kappa_a,
        kappa_b=kappa_b,
        kappa_c=kappa_c,
        kappa_k=kappa_k,
        kappa_l=kappa_l,
        kappa_p=kappa_p,
        kappa_q=kappa_q,
    )


@dataclass
class SynthesisResult:
    gains: list
    b_fusion: FusionResult
    c_fusion: FusionResult
    aug: AugmentedWeights
    p_k: list = field(default_factory=list)
    p_l: list = field(default_factory=list)

    @property
    def k_gains(self):
        return [g.k_gain for g in self.gains]

    @property
    def l_gains(self):
        return [g.l_gain for g in self.gains]


def synthesize_gains(
    plant: PlantModel,
    w: StochasticMatrix,
    pw: PrivacyWeights,
    delta: float = 1e-3,
    max_rounds: int = 10_000,
) -> SynthesisResult:
    """Full predesign phase: fuse both Gramians, then solve each agent's
    local Riccati equations against its own fused values."""
    n_agents = plant.agent_count
    b_inits = [n_agents * ch.b @ ch.b.T for ch in plant.channels]
    c_inits = [n_agents * ch.c.T @ ch.c for ch in plant.channels]
    b_fusion = fuse_gramian(b_inits, w, pw, delta, max_rounds)
    c_fusion = fuse_gramian(c_inits, w, pw, delta, max_rounds)

    gains = []
    p_ks = []
    p_ls = []
    for i, ch in enumerate(plant.channels):
        k, p_k = compute_control_gain(plant.a, ch.b, b_fusion.fused[i])
        l, p_l = compute_observer_gain(plant.a, ch.c, c_fusion.fused[i])
        gains.append(
            AgentGains(k_gain=k, l_gain=l, fused_b=b_fusion.fused[i], fused_c=c_fusion.fused[i])
        )
        p_ks.append(p_k)
        p_ls.append(p_l)
    return SynthesisResult(
        gains=gains,
        b_fusion=b_fusion,
        c_fusion=c_fusion,
        aug=build_augmented(w, pw),
        p_k=p_ks,
        p_l=p_ls,
    )
