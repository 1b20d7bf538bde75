"""Executable non-identifiability audit.

An honest-but-curious neighbor `zeta` records everything agent `i` transmits
(shared Gramian components during predesign, shared alpha components online)
and knows the weight matrix. The audit constructs, for any alternative
private scalar pi', a counterfactual world whose transmitted streams are
*identical* to the reference: the change is absorbed into agent i's hidden
components and into the transmitted stream of a neighbor p of i that zeta
never hears from. Both worlds are replayed in exact rational arithmetic so
stream equality is bit-level on a canonical serialization.

The construction needs such a p to exist (the topology condition) and, to
leave every zeta-visible stream untouched, p may transmit only to i.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import CommGraph, PrivacyWeights, StochasticMatrix

__all__ = [
    "check_topology_condition",
    "absorbing_neighbor",
    "AdversaryView",
    "CounterfactualWorld",
    "ReferenceWorld",
    "construct_counterfactual",
    "adversary_infer_angle",
    "InconsistentHypothesis",
    "AuditReport",
    "run_audit",
]


class InconsistentHypothesis(ValueError):
    """The assumed private scalar cannot explain the observed message."""


# ---------------------------------------------------------------------------
# exact rational matrices (lists of lists of Fraction)


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(float(x))


def _fmat(arr) -> list:
    a = np.atleast_2d(np.asarray(arr, dtype=float))
    return [[Fraction(float(v)) for v in row] for row in a]


def _fscale(c: Fraction, m: list) -> list:
    return [[c * v for v in row] for row in m]


def _fadd(a: list, b: list) -> list:
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def _fsub(a: list, b: list) -> list:
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def _fzeros_like(m: list) -> list:
    return [[Fraction(0) for _ in row] for row in m]


def _ffloat(m: list) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in m])


def _serialize(m: list) -> str:
    return ";".join(",".join(str(v) for v in row) for row in m)


# ---------------------------------------------------------------------------
# topology conditions


def check_topology_condition(g: CommGraph, i: int, zeta: int) -> bool:
    """True iff agent i has a neighbor the adversary does not have.

    Requires that zeta actually receives from i (otherwise there is nothing
    to audit)."""
    if i == zeta:
        raise ValueError("adversary and target must differ")
    if i not in g.neighbor_sets[zeta]:
        raise ValueError(f"agent {zeta} does not receive from agent {i}; nothing observed")
    return not g.neighbor_sets[i] <= g.neighbor_sets[zeta]


def absorbing_neighbor(g: CommGraph, i: int, zeta: int):
    """A neighbor p of i, unseen by zeta, whose transmissions reach only i.

    Such a p can absorb arbitrary corrections without perturbing any stream
    zeta observes. Returns None when no such agent exists."""
    candidates = sorted(g.neighbor_sets[i] - g.neighbor_sets[zeta] - {i})
    for p in candidates:
        receivers = {q for q in range(g.agent_count) if p in g.neighbor_sets[q]}
        if receivers <= {i, p}:
            return p
    return None


# ---------------------------------------------------------------------------
# exact replay of decomposed-consensus streams


@dataclass
class DecomposedReplay:
    """Exact round-by-round record of one decomposed consensus run:
    bars[h][j], hats[h][j] for rounds h = 0..rounds."""

    bars: list
    hats: list
    rounds: int


def replay_decomposed(w_frac, eps: Fraction, pis, inits, rounds: int) -> DecomposedReplay:
    """Run the shared/hidden recursion exactly from rational inits."""
    n = len(inits)
    bars = [[_fscale(pis[j], inits[j]) for j in range(n)]]
    hats = [[_fscale(1 - pis[j], inits[j]) for j in range(n)]]
    for _ in range(rounds):
        prev_b, prev_h = bars[-1], hats[-1]
        new_b, new_h = [], []
        for j in range(n):
            acc = _fzeros_like(prev_b[j])
            for q in range(n):
                if w_frac[j][q] != 0:
                    acc = _fadd(acc, _fscale(w_frac[j][q], prev_b[q]))
            corr = _fscale(eps * pis[j], _fsub(prev_b[j], prev_h[j]))
            new_b.append(_fsub(acc, corr))
            new_h.append(_fadd(prev_h[j], corr))
        bars.append(new_b)
        hats.append(new_h)
    return DecomposedReplay(bars=bars, hats=hats, rounds=rounds)


@dataclass
class ReferenceWorld:
    """Exact view of one protocol execution: graph, rational weights, the
    private scalars, and the replayed streams (predesign Gramian exchanges
    plus a window of online innovation fusions)."""

    graph: CommGraph
    w_frac: list
    eps: Fraction
    pis: list
    b_stream: DecomposedReplay
    c_stream: DecomposedReplay
    alpha_streams: list  # one DecomposedReplay per audited time step
    b_inits: list  # rational N * B^i (B^i)' per agent

    @classmethod
    def build(cls, plant, w: StochasticMatrix, pw: PrivacyWeights, gramian_rounds, m2, innovations):
        """innovations: iterable over time steps of (N, n) float arrays."""
        n_agents = plant.agent_count
        w_frac = _fmat(w.w)
        eps = _frac(pw.epsilon)
        pis = [_frac(p) for p in pw.pi]
        b_inits = [_fmat(n_agents * ch.b @ ch.b.T) for ch in plant.channels]
        c_inits = [_fmat(n_agents * ch.c.T @ ch.c) for ch in plant.channels]
        rounds_b, rounds_c = gramian_rounds
        alpha_streams = [
            replay_decomposed(w_frac, eps, pis, [_fmat(x[j].reshape(-1, 1)) for j in range(n_agents)], m2)
            for x in innovations
        ]
        return cls(
            graph=w.graph,
            w_frac=w_frac,
            eps=eps,
            pis=pis,
            b_stream=replay_decomposed(w_frac, eps, pis, b_inits, rounds_b),
            c_stream=replay_decomposed(w_frac, eps, pis, c_inits, rounds_c),
            alpha_streams=alpha_streams,
            b_inits=b_inits,
        )


@dataclass
class AdversaryView:
    """Everything zeta receives from agent i, canonically serialized.

    Contains only shared components; no hidden values and no private
    scalars ever appear here."""

    target: int
    adversary: int
    lines: list

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines:
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


def _view_lines(tag: str, bars, i: int, rounds: int) -> list:
    # transmissions happen at rounds 0..rounds-1
    return [f"{tag}|h={h}|from={i}|" + _serialize(bars[h][i]) for h in range(rounds)]


def adversary_view(world: ReferenceWorld, i: int, zeta: int) -> AdversaryView:
    lines = _view_lines("B", world.b_stream.bars, i, world.b_stream.rounds)
    lines += _view_lines("C", world.c_stream.bars, i, world.c_stream.rounds)
    for t, stream in enumerate(world.alpha_streams):
        lines += [
            f"alpha|t={t}|l={l}|from={i}|" + _serialize(stream.bars[l][i])
            for l in range(stream.rounds)
        ]
    return AdversaryView(target=i, adversary=zeta, lines=lines)


@dataclass
class CounterfactualWorld:
    """An alternative assignment of agent i's private data (pi, implied
    actuation Gramian, hidden components) and of the absorbing neighbor's
    transmitted stream that reproduces the reference transmissions."""

    alt_pi: Fraction
    absorber: int
    view: AdversaryView
    implied_b_gramian: np.ndarray
    b_scale: float  # norm ratio of the implied actuation column


def _absorb_stream(
    world: ReferenceWorld, replay: DecomposedReplay, i: int, p: int, alt_pi: Fraction
) -> list:
    """Recompute agent i's transmitted stream in the alternative world.

    Hidden components of i restart from the alt split; the residual of each
    of i's update equations is pushed into p's transmitted values; all other
    agents' transmissions are reused untouched. Returns the alt stream of i,
    which must equal the reference exactly.
    """
    eps = world.eps
    pi_ref = world.pis[i]
    w_row = world.w_frac[i]
    bars = replay.bars
    hats = replay.hats
    rounds = replay.rounds

    # alternative hidden trajectory of agent i
    hat_alt = [_fscale((1 - alt_pi) / alt_pi, bars[0][i])]
    for h in range(rounds):
        d_alt = _fsub(bars[h][i], hat_alt[h])
        hat_alt.append(_fadd(hat_alt[h], _fscale(eps * alt_pi, d_alt)))

    # absorbing neighbor's alternative transmissions
    bar_p_alt = []
    for h in range(rounds):
        d_alt = _fsub(bars[h][i], hat_alt[h])
        d_ref = _fsub(bars[h][i], hats[h][i])
        resid = _fsub(_fscale(alt_pi, d_alt), _fscale(pi_ref, d_ref))
        bar_p_alt.append(_fadd(bars[h][p], _fscale(eps / w_row[p], resid)))

    # replay agent i's update law in the alternative world
    alt_stream = [bars[0][i]]
    for h in range(1, rounds + 1):
        acc = _fzeros_like(bars[0][i])
        for q in world.graph.neighbor_sets[i]:
            source = bar_p_alt[h - 1] if q == p else bars[h - 1][q]
            acc = _fadd(acc, _fscale(w_row[q], source))
        d_alt = _fsub(bars[h - 1][i], hat_alt[h - 1])
        alt_stream.append(_fsub(acc, _fscale(eps * alt_pi, d_alt)))
    return alt_stream


def construct_counterfactual(
    world: ReferenceWorld, i: int, zeta: int, alt_pi_i: float
) -> CounterfactualWorld:
    """Build and verify an alternative world for a different private scalar.

    Raises if the topology condition fails (matching the impossibility
    hypothesis) or if no absorbing neighbor exists for this graph."""
    if not 0.0 < float(alt_pi_i) < 1.0:
        raise ValueError(f"alt pi must lie in (0, 1), got {alt_pi_i}")
    if not check_topology_condition(world.graph, i, zeta):
        raise ValueError(
            "topology condition violated: every neighbor of the target is visible "
            "to the adversary, construction refused"
        )
    p = absorbing_neighbor(world.graph, i, zeta)
    if p is None:
        raise ValueError(
            "no absorbing neighbor: the unseen neighbors transmit to agents other "
            "than the target; this constructor does not cover such topologies"
        )
    alt_pi = _frac(alt_pi_i)

    lines = []
    for tag, replay in (("B", world.b_stream), ("C", world.c_stream)):
        alt_stream = _absorb_stream(world, replay, i, p, alt_pi)
        for h in range(replay.rounds):
            if alt_stream[h] != replay.bars[h][i]:
                raise AssertionError(f"{tag} stream deviates at round {h}")
            lines.append(f"{tag}|h={h}|from={i}|" + _serialize(alt_stream[h]))
    for t, stream in enumerate(world.alpha_streams):
        alt_stream = _absorb_stream(world, stream, i, p, alt_pi)
        for l in range(stream.rounds):
            if alt_stream[l] != stream.bars[l][i]:
                raise AssertionError(f"alpha stream deviates at t={t}, l={l}")
            lines.append(f"alpha|t={t}|l={l}|from={i}|" + _serialize(alt_stream[l]))

    implied = _fscale(1 / alt_pi, world.b_stream.bars[0][i])  # = N B'B'^T in the alt world
    n_agents = world.graph.agent_count
    return CounterfactualWorld(
        alt_pi=alt_pi,
        absorber=p,
        view=AdversaryView(target=i, adversary=zeta, lines=lines),
        implied_b_gramian=_ffloat(implied) / n_agents,
        b_scale=float(np.sqrt(float(world.pis[i] / alt_pi))),
    )


# ---------------------------------------------------------------------------
# the inference experiment


@dataclass(frozen=True)
class ForceAngleParametrization:
    """Actuation columns of the form (1/inertia) [0, .., cos t, sin t]';
    axis gives the row index of the cosine component."""

    inertia: float = 5.0
    axis: int = 2


def adversary_infer_angle(
    first_b_message,
    assumed_pi: float,
    n_agents: int,
    param: ForceAngleParametrization = ForceAngleParametrization(),
) -> float:
    """Invert the first shared Gramian message under an assumed pi.

    The h=0 message equals pi N B B'; assuming pi-hat, the implied squared
    cosine is entry (axis, axis) * inertia^2 / (pi-hat * N). Values above 1
    mean the hypothesis cannot produce any angle."""
    if not 0.0 < assumed_pi < 1.0:
        raise ValueError("assumed pi must lie in (0, 1)")
    msg = np.atleast_2d(np.asarray(first_b_message, dtype=float))
    cos2 = float(msg[param.axis, param.axis]) * param.inertia**2 / (assumed_pi * n_agents)
    if cos2 > 1.0 + 1e-12:
        raise InconsistentHypothesis(
            f"assumed pi={assumed_pi} implies cos^2 = {cos2:.4f} > 1"
        )
    return float(np.arccos(np.sqrt(min(max(cos2, 0.0), 1.0))))


# ---------------------------------------------------------------------------
# report assembly


@dataclass
class AuditReport:
    target: int
    adversary: int
    topology_ok: bool
    reference_digest: str
    worlds: list = field(default_factory=list)
    inference: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "adversary": self.adversary,
            "topology_condition": self.topology_ok,
            "reference_stream_sha256": self.reference_digest,
            "counterfactual_worlds": self.worlds,
            "inference_table": self.inference,
        }


def run_audit(
    world: ReferenceWorld,
    i: int,
    zeta: int,
    alt_pis,
    inference_pis=(),
    param: ForceAngleParametrization = ForceAngleParametrization(),
) -> AuditReport:
    """Full audit: counterfactual worlds for each alternative scalar plus the
    angle-inference table."""
    topo = check_topology_condition(world.graph, i, zeta)
    ref_view = adversary_view(world, i, zeta)
    report = AuditReport(
        target=i, adversary=zeta, topology_ok=topo, reference_digest=ref_view.digest()
    )
    for alt in alt_pis:
        cf = construct_counterfactual(world, i, zeta, alt)
        report.worlds.append(
            {
                "alt_pi": float(alt),
                "absorber": cf.absorber,
                "stream_sha256": cf.view.digest(),
                "identical": cf.view.digest() == ref_view.digest(),
                "b_norm_scale": cf.b_scale,
            }
        )
    first_msg = _ffloat(world.b_stream.bars[0][i])
    for pi_hat in inference_pis:
        try:
            theta = adversary_infer_angle(first_msg, pi_hat, world.graph.agent_count, param)
            report.inference.append({"assumed_pi": float(pi_hat), "theta_hat": theta})
        except InconsistentHypothesis as exc:
            report.inference.append({"assumed_pi": float(pi_hat), "error": str(exc)})
    return report
