"""The online estimation/control loop primitives.

Per control step every agent forms a local innovation

    x^i = A z^i + N B^i u^i + N L^i (y^i - C^i z^i),

then the network fuses innovations for a fixed number of rounds, either
plainly (each round averages neighbors' values with W) or privately (each
value is split into a shared alpha and hidden beta component; only alpha is
transmitted). The closed loop admits an exact augmented-matrix form, built
here for certificate checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import AugmentedWeights, StochasticMatrix
from .plant import PlantModel
from .synthesis import AgentGains

__all__ = [
    "AgentRuntime",
    "local_innovation",
    "control",
    "fuse_plain",
    "fuse_private",
    "PrivateFusionRecord",
    "build_closed_loop_matrix",
    "noise_input_matrix",
    "error_selector",
]


@dataclass
class AgentRuntime:
    """One agent's online state. The private scalar pi never leaves this
    object; shared messages carry alpha values only."""

    index: int
    pi: float
    gains: AgentGains
    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1)


def control(agent: AgentRuntime) -> np.ndarray:
    """u^i = K^i z^i."""
    return agent.gains.k_gain @ agent.z


def local_innovation(agent: AgentRuntime, plant: PlantModel, u_i, y_i) -> np.ndarray:
    """x^i = A z^i + N B^i u^i + N L^i (y^i - C^i z^i).

    The caller passes the measurement y^i it actually took (possibly noisy).
    """
    ch = plant.channels[agent.index]
    n_agents = plant.agent_count
    u_i = np.asarray(u_i, dtype=float).reshape(-1)
    y_i = np.asarray(y_i, dtype=float).reshape(-1)
    return (
        plant.a @ agent.z
        + n_agents * (ch.b @ u_i)
        + n_agents * (agent.gains.l_gain @ (y_i - ch.c @ agent.z))
    )


def fuse_plain(innovations, w: StochasticMatrix, m1: int) -> np.ndarray:
    """m1 rounds of plain neighbor averaging on stacked innovations (N x n)."""
    if m1 < 0:
        raise ValueError("fusion step count must be nonnegative")
    x = np.asarray(innovations, dtype=float)
    for _ in range(m1):
        x = w.w @ x
    return x


@dataclass
class PrivateFusionRecord:
    """Round-by-round record of one private fusion: alphas[l] is the N x n
    stack after round l (l = 0 is the initialization)."""

    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)


def fuse_private(
    innovations,
    aug: AugmentedWeights,
    pis,
    m2: int,
    record: PrivateFusionRecord | None = None,
) -> np.ndarray:
    """m2 rounds of decomposed fusion; returns the recombined estimates.

    alpha_0 = pi_i * x_i and beta_0 = (1 - pi_i) * x_i; each round

        alpha_i <- sum_j w_ij alpha_j - eps pi_i (alpha_i - beta_i)
        beta_i  <- beta_i + eps pi_i (alpha_i - beta_i)

    and the estimate is alpha + beta after the last round. Requires at
    least one round; with zero rounds agents would never couple.
    """
    if m2 < 1:
        raise ValueError("the private estimator requires at least one fusion round")
    x = np.asarray(innovations, dtype=float)
    n_agents = x.shape[0]
    pis = np.asarray(pis, dtype=float).reshape(n_agents, 1)
    wt = aug.w_tilde
    w_base = wt[:n_agents, :n_agents] + wt[:n_agents, n_agents:]  # = W rows
    eps_pi = np.diag(wt[:n_agents, n_agents:]).reshape(n_agents, 1)  # eps * pi_i
    alpha = pis * x
    beta = (1.0 - pis) * x
    if record is not None:
        record.alphas.append(alpha.copy())
        record.betas.append(beta.copy())
    for _ in range(m2):
        corr = eps_pi * (alpha - beta)
        alpha, beta = w_base @ alpha - corr, beta + corr
        if record is not None:
            record.alphas.append(alpha.copy())
            record.betas.append(beta.copy())
    return alpha + beta


def _stacked_operators(plant: PlantModel, gains):
    """Block operators over the agent stack: diagonal gain/actuation blocks
    and the innovation map."""
    n = plant.n
    n_agents = plant.agent_count
    r = plant.input_dim
    m = plant.output_dim
    kbar = np.zeros((r, n_agents * n))
    lbar = np.zeros((n_agents * n, m))
    bbar = np.zeros((n_agents * n, r))
    cbar = np.zeros((m, n_agents * n))
    ro = co = 0
    for i, (ch, g) in enumerate(zip(plant.channels, gains)):
        ri = ch.b.shape[1]
        mi = ch.c.shape[0]
        kbar[ro : ro + ri, i * n : (i + 1) * n] = g.k_gain
        bbar[i * n : (i + 1) * n, ro : ro + ri] = ch.b
        lbar[i * n : (i + 1) * n, co : co + mi] = g.l_gain
        cbar[co : co + mi, i * n : (i + 1) * n] = ch.c
        ro += ri
        co += mi
    acal = np.kron(np.eye(n_agents), plant.a) - n_agents * (lbar @ cbar) + n_agents * (bbar @ kbar)
    return kbar, lbar, bbar, cbar, acal


def build_closed_loop_matrix(plant: PlantModel, gains, mixing, m: int, private: bool) -> np.ndarray:
    """Assemble the augmented one-step matrix of the deterministic closed loop.

    Plain mode (state [s; z], (N+1)n square):

        [[A,                     calB Kbar          ],
         [N (W^m x I) Lbar calC, (W^m x I) Acal     ]]

    Private mode (state [s; alpha; beta], (2N+1)n square): W^m is replaced
    by W~^m V and Acal acts on alpha + beta through [I I].
    """
    if m < 0:
        raise ValueError("fusion step count must be nonnegative")
    n = plant.n
    n_agents = plant.agent_count
    kbar, lbar, _, _, acal = _stacked_operators(plant, gains)
    bcal = plant.b_stacked()
    cstack = plant.c_stacked()
    if private:
        if not isinstance(mixing, AugmentedWeights):
            raise TypeError("private closed loop needs AugmentedWeights")
        mix = np.linalg.matrix_power(mixing.w_tilde, m) @ mixing.v
        recomb = np.hstack([np.eye(n_agents * n), np.eye(n_agents * n)])
    else:
        wmat = mixing.w if isinstance(mixing, StochasticMatrix) else np.asarray(mixing)
        mix = np.linalg.matrix_power(wmat, m)
        recomb = np.eye(n_agents * n)
    mix_big = np.kron(mix, np.eye(n))
    top = np.hstack([plant.a, bcal @ kbar @ recomb])
    bottom = np.hstack([n_agents * mix_big @ lbar @ cstack, mix_big @ acal @ recomb])
    return np.vstack([top, bottom])


def noise_input_matrix(plant: PlantModel, gains, aug: AugmentedWeights, m2: int) -> np.ndarray:
    """Input matrix of the noisy private closed loop, acting on stacked
    [process noise; measurement noise]: blkdiag(I_n, N (W~^m2 V x I) Lbar)."""
    n = plant.n
    n_agents = plant.agent_count
    m = plant.output_dim
    _, lbar, _, _, _ = _stacked_operators(plant, gains)
    mix_big = np.kron(np.linalg.matrix_power(aug.w_tilde, m2) @ aug.v, np.eye(n))
    fw = np.zeros((n + 2 * n_agents * n, n + m))
    fw[:n, :n] = np.eye(n)
    fw[n:, n:] = n_agents * mix_big @ lbar
    return fw


def error_selector(plant: PlantModel) -> np.ndarray:
    """Selector turning the private augmented state into stacked estimation
    errors: e = (alpha + beta) - ones x s."""
    n = plant.n
    n_agents = plant.agent_count
    return np.hstack(
        [
            -np.kron(np.ones((n_agents, 1)), np.eye(n)),
            np.eye(n_agents * n),
            np.eye(n_agents * n),
        ]
    )
