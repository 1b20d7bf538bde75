"""The multi-channel LTI plant.

One state equation driven through per-agent input columns, with each agent
measuring its own output rows:

    s_{k+1} = A s_k + sum_i B^i u^i_k (+ w_k),      y^i_k = C^i s_k (+ v^i_k).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Channel",
    "PlantModel",
    "PlantState",
    "NoiseSpec",
    "NoiseStream",
    "step",
    "measure",
    "check_joint_assumptions",
    "add_channel",
]


@dataclass(frozen=True)
class Channel:
    """One agent's actuation column block and measurement row block."""

    b: np.ndarray  # n x r_i
    c: np.ndarray  # m_i x n

    def __post_init__(self):
        object.__setattr__(self, "b", np.atleast_2d(np.asarray(self.b, dtype=float)))
        object.__setattr__(self, "c", np.atleast_2d(np.asarray(self.c, dtype=float)))


@dataclass(frozen=True)
class PlantModel:
    a: np.ndarray
    channels: tuple

    def __init__(self, a, channels):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"a must be square, got {a.shape}")
        chans = tuple(ch if isinstance(ch, Channel) else Channel(*ch) for ch in channels)
        n = a.shape[0]
        for i, ch in enumerate(chans):
            if ch.b.shape[0] != n:
                raise ValueError(f"channel {i}: b has {ch.b.shape[0]} rows, expected {n}")
            if ch.c.shape[1] != n:
                raise ValueError(f"channel {i}: c has {ch.c.shape[1]} cols, expected {n}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "channels", chans)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def agent_count(self) -> int:
        return len(self.channels)

    @property
    def input_dims(self) -> tuple:
        return tuple(ch.b.shape[1] for ch in self.channels)

    @property
    def output_dims(self) -> tuple:
        return tuple(ch.c.shape[0] for ch in self.channels)

    @property
    def input_dim(self) -> int:
        return sum(self.input_dims)

    @property
    def output_dim(self) -> int:
        return sum(self.output_dims)

    def b_stacked(self) -> np.ndarray:
        """[B^1, ..., B^N], n x r."""
        return np.hstack([ch.b for ch in self.channels])

    def c_stacked(self) -> np.ndarray:
        """[C^1; ...; C^N], m x n."""
        return np.vstack([ch.c for ch in self.channels])

    def input_gramian(self) -> np.ndarray:
        """sum_i B^i (B^i)' = (stacked B)(stacked B)'."""
        b = self.b_stacked()
        return b @ b.T

    def output_gramian(self) -> np.ndarray:
        """sum_i (C^i)' C^i = (stacked C)'(stacked C)."""
        c = self.c_stacked()
        return c.T @ c


@dataclass(frozen=True)
class PlantState:
    s: np.ndarray
    k: int = 0

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if not np.isfinite(s).all():
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class NoiseSpec:
    """Std deviations of process and per-channel measurement noise; zero
    means the exact deterministic model."""

    sigma_w: float = 0.0
    sigma_v: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_w < 0 or self.sigma_v < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.sigma_w == 0.0 and self.sigma_v == 0.0


class NoiseStream:
    """Seeded Gaussian draws for one rollout. Draw order is part of the
    reproducibility contract: measurements for channels 0..N-1, then the
    process disturbance, once per step."""

    def __init__(self, spec: NoiseSpec):
        self.spec = spec
        self._rng = np.random.default_rng(spec.seed)

    def process(self, n: int) -> np.ndarray:
        if self.spec.sigma_w == 0.0:
            return np.zeros(n)
        return self._rng.normal(0.0, self.spec.sigma_w, n)

    def measurement(self, m_i: int) -> np.ndarray:
        if self.spec.sigma_v == 0.0:
            return np.zeros(m_i)
        return self._rng.normal(0.0, self.spec.sigma_v, m_i)


def step(p: PlantModel, st: PlantState, inputs, noise: NoiseStream | None = None) -> PlantState:
    """Advance one step: s_{k+1} = A s_k + sum_i B^i u^i (+ process noise)."""
    if len(inputs) != p.agent_count:
        raise ValueError(f"{len(inputs)} inputs for {p.agent_count} channels")
    s_next = p.a @ st.s
    for ch, u in zip(p.channels, inputs):
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.shape[0] != ch.b.shape[1]:
            raise ValueError(f"input dim {u.shape[0]} does not match channel width {ch.b.shape[1]}")
        s_next = s_next + ch.b @ u
    if noise is not None:
        s_next = s_next + noise.process(p.n)
    return PlantState(s=s_next, k=st.k + 1)


def measure(p: PlantModel, st: PlantState, i: int, noise: NoiseStream | None = None) -> np.ndarray:
    """Channel i's output y^i = C^i s (+ measurement noise)."""
    if not 0 <= i < p.agent_count:
        raise IndexError(f"channel index {i} out of range [0, {p.agent_count})")
    y = p.channels[i].c @ st.s
    if noise is not None:
        y = y + noise.measurement(y.shape[0])
    return y


@dataclass(frozen=True)
class JointAssumptions:
    stabilizable: bool
    detectable: bool


def check_joint_assumptions(p: PlantModel, tol: float = 1e-9) -> JointAssumptions:
    """PBH rank tests at every eigenvalue of A with magnitude >= 1.

    Stabilizable: rank [lam I - A, B] = n; detectable: rank [lam I - A; C] = n.
    Singular values below tol * sigma_max count as zero.
    """
    a = p.a
    n = p.n
    b = p.b_stacked()
    c = p.c_stacked()
    stab = det = True
    for lam in np.linalg.eigvals(a):
        if abs(lam) < 1.0 - 1e-9:
            continue
        m_stab = np.hstack([lam * np.eye(n) - a, b])
        m_det = np.vstack([lam * np.eye(n) - a, c])
        for mat, which in ((m_stab, "stab"), (m_det, "det")):
            sv = np.linalg.svd(mat, compute_uv=False)
            rank = int((sv > tol * sv[0]).sum()) if sv[0] > 0 else 0
            if rank < n:
                if which == "stab":
                    stab = False
                else:
                    det = False
    return JointAssumptions(stabilizable=stab, detectable=det)


def add_channel(p: PlantModel, b_new, c_new=None) -> PlantModel:
    """Return a new plant with one extra channel; existing channels are
    untouched. A missing c_new means a zero measurement row."""
    b_new = np.atleast_2d(np.asarray(b_new, dtype=float))
    if b_new.shape[0] == 1 and b_new.shape[1] == p.n:
        b_new = b_new.T  # accept a flat vector as a column
    if b_new.shape[0] != p.n:
        raise ValueError(f"b_new has {b_new.shape[0]} rows, expected {p.n}")
    if c_new is None:
        c_new = np.zeros((1, p.n))
    return PlantModel(a=p.a, channels=p.channels + (Channel(b=b_new, c=c_new),))
