"""End-to-end orchestration: gain synthesis, certificates, the closed-loop
rollout, trace/report persistence.

The per-step loop is the honest agent protocol: compute local inputs,
measure, form innovations, advance the plant, fuse estimates. Fusion uses
round-by-round message passing for modest step counts and the precomputed
mixing power for large ones (the same map; the equivalence is covered by
the oracle tests).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import agents as ag
from .analysis import (
    BoundReport,
    NoiseCertificate,
    bound_report,
    build_lyapunov_certificate,
    noise_bound,
    nominal_closed_loop,
)
from .errors import NumericFailure
from .graph import build_augmented, build_weights
from .linalg import spectral_radius
from .plant import NoiseStream, PlantState, measure, step
from .scenario import Scenario
from .synthesis import SynthesisResult, derive_kappa_bounds, synthesize_gains

__all__ = ["SimTrace", "RunResult", "run", "write_trace_csv", "write_plot_csv"]

_DIVERGENCE_NORM = 1e9
_ROUND_ENGINE_LIMIT = 64


@dataclass
class SimTrace:
    """Time-indexed rollout record. Row k holds the state at step k, the
    estimation/control quantities computed at that step, and the tracking
    error over the configured components."""

    states: np.ndarray  # (horizon+1, n)
    estimates: np.ndarray  # (horizon+1, N, n)
    inputs: np.ndarray  # (horizon+1, r)
    errors: np.ndarray  # (horizon+1,)
    diverged: bool
    diverged_at: int | None
    innovations_window: np.ndarray  # (audit_steps, N, n) innovations for the audit

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def final_window_error(self, fraction: float = 0.1) -> float:
        tail = max(1, int(self.horizon * fraction))
        window = self.errors[-tail:]
        finite = window[np.isfinite(window)]
        return float(finite.mean()) if finite.size else float("inf")


@dataclass
class RunResult:
    scenario: Scenario
    trace: SimTrace
    synthesis: SynthesisResult
    bounds: BoundReport
    noise_cert: NoiseCertificate | None
    rho_f: float
    m_used: int
    privacy: bool
    stabilized: bool
    pi_used: tuple

    @property
    def exit_code(self) -> int:
        return 0 if self.stabilized else 2

    def report_dict(self) -> dict:
        d = {
            "scenario": self.scenario.name,
            "privacy": self.privacy,
            "fusion_steps": self.m_used,
            "rho_closed_loop": self.rho_f,
            "stabilized": self.stabilized,
            "diverged": self.trace.diverged,
            "final_window_error": self.trace.final_window_error(),
            "stabilization_threshold": self.scenario.stabilization_threshold,
            "gramian_rounds": [
                self.synthesis.b_fusion.rounds_used,
                self.synthesis.c_fusion.rounds_used,
            ],
            "bounds": self.bounds.to_dict(),
            "pi": list(self.pi_used),
        }
        if self.noise_cert is not None:
            d["noise_certificate"] = self.noise_cert.to_dict()
        return d


def _resolve_m(setting, bar: float, vacuous: bool, minimum: int) -> int:
    if setting == "auto":
        if vacuous:
            return max(1, minimum)
        return max(minimum, int(np.ceil(bar)) + 1)
    return int(setting)


@dataclass
class Prepared:
    """Everything the offline phase yields: weights, gains, certificates."""

    w: object
    pw: object
    synthesis: SynthesisResult
    bounds: BoundReport

    @property
    def gains(self):
        return self.synthesis.gains

    @property
    def aug(self):
        return self.synthesis.aug


def prepare(sc: Scenario) -> Prepared:
    """Offline phase only: weights, Gramian fusion, gains, bound report."""
    plant = sc.plant
    w = build_weights(sc.graph, sc.weight_rule)
    pw = sc.privacy_weights()
    synthesis = synthesize_gains(plant, w, pw, sc.gramian_delta)
    cert = build_lyapunov_certificate(nominal_closed_loop(plant, synthesis.gains))
    kappa = derive_kappa_bounds(
        plant.a,
        synthesis.b_fusion.fused[0],
        synthesis.c_fusion.fused[0],
        synthesis.gains,
        cert.p,
        cert.q,
        sc.graph,
    )
    bounds = bound_report(cert, plant, synthesis.gains, w, synthesis.aug, kappa)
    return Prepared(w=w, pw=pw, synthesis=synthesis, bounds=bounds)


def run(sc: Scenario, privacy: bool = True, m_override=None, prepared: Prepared | None = None
        ) -> RunResult:
    """Execute the full pipeline on one scenario.

    privacy selects the decomposed estimator (fusion count m2) versus the
    plain one (m1); m_override replaces the scenario's count ("auto" allowed).
    Deterministic given the scenario seed.
    """
    plant = sc.plant
    prep = prepared if prepared is not None else prepare(sc)
    w, pw, synthesis, bounds = prep.w, prep.pw, prep.synthesis, prep.bounds
    gains = synthesis.gains
    aug = synthesis.aug

    m_setting = m_override if m_override is not None else (sc.m2 if privacy else sc.m1)
    if privacy:
        m_used = _resolve_m(m_setting, bounds.m2_bar, bounds.m2_vacuous, minimum=1)
    else:
        m_used = _resolve_m(m_setting, bounds.m1_bar, bounds.m1_vacuous, minimum=1)

    f_closed = ag.build_closed_loop_matrix(
        plant, gains, aug if privacy else w, m_used, private=privacy
    )
    rho_f = spectral_radius(f_closed)

    trace = _rollout(sc, plant, w, aug, gains, pw, m_used, privacy)
    stabilized = (not trace.diverged) and trace.final_window_error() < sc.stabilization_threshold

    noise_cert = None
    if privacy and not sc.noise.is_zero:
        try:
            noise_cert = noise_bound(plant, gains, aug, m_used, sc.noise)
        except NumericFailure:
            noise_cert = None  # unstable loop: the bound is undefined

    return RunResult(
        scenario=sc,
        trace=trace,
        synthesis=synthesis,
        bounds=bounds,
        noise_cert=noise_cert,
        rho_f=rho_f,
        m_used=m_used,
        privacy=privacy,
        stabilized=stabilized,
        pi_used=pw.pi,
    )


def _rollout(sc, plant, w, aug, gains, pw, m_used, privacy) -> SimTrace:
    n = plant.n
    n_agents = plant.agent_count
    horizon = sc.horizon
    comps = list(sc.error_components)
    s = PlantState(s=sc.error_state(sc.initial_state), k=0)
    runtimes = [
        ag.AgentRuntime(index=i, pi=pw.pi[i], gains=gains[i], z=np.zeros(n))
        for i in range(n_agents)
    ]
    noise = NoiseStream(sc.noise) if not sc.noise.is_zero else None
    pis = np.asarray(pw.pi)

    use_rounds = m_used <= _ROUND_ENGINE_LIMIT
    if not use_rounds:
        if privacy:
            mix = np.linalg.matrix_power(aug.w_tilde, m_used) @ aug.v
            fuse_matrix = mix[:n_agents] + mix[n_agents:]
        else:
            fuse_matrix = np.linalg.matrix_power(w.w, m_used)

    states = np.empty((horizon + 1, n))
    estimates = np.empty((horizon + 1, n_agents, n))
    inputs = np.empty((horizon + 1, plant.input_dim))
    errors = np.empty(horizon + 1)
    audit_steps = min(sc.audit_steps, horizon)
    innovations_window = np.empty((audit_steps, n_agents, n))
    diverged_at = None

    with np.errstate(all="ignore"):
        for k in range(horizon + 1):
            states[k] = s.s
            errors[k] = float(np.linalg.norm(s.s[comps]))
            for i, rt in enumerate(runtimes):
                estimates[k, i] = rt.z
            us = [ag.control(rt) for rt in runtimes]
            inputs[k] = np.concatenate([np.atleast_1d(u) for u in us])
            if diverged_at is None and not (
                np.isfinite(s.s).all() and np.abs(s.s).max() < _DIVERGENCE_NORM
            ):
                diverged_at = k
            if k == horizon:
                break
            ys = [measure(plant, s, i, noise) for i in range(n_agents)]
            innov = np.stack(
                [ag.local_innovation(rt, plant, us[i], ys[i]) for i, rt in enumerate(runtimes)]
            )
            if k < audit_steps:
                innovations_window[k] = innov
            s = step(plant, s, us, noise) if noise is not None else step(plant, s, us)
            if use_rounds:
                if privacy:
                    z_next = ag.fuse_private(innov, aug, pis, m_used)
                else:
                    z_next = ag.fuse_plain(innov, w, m_used)
            else:
                z_next = fuse_matrix @ innov
            for i, rt in enumerate(runtimes):
                rt.z = z_next[i]

    return SimTrace(
        states=states,
        estimates=estimates,
        inputs=inputs,
        errors=errors,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
        innovations_window=innovations_window,
    )


def write_trace_csv(trace: SimTrace, path) -> None:
    """Wide CSV, one row per step, shortest exact float rendering."""
    n = trace.states.shape[1]
    n_agents = trace.estimates.shape[1]
    r = trace.inputs.shape[1]
    header = (
        ["k"]
        + [f"s{j}" for j in range(n)]
        + ["err"]
        + [f"u{j}" for j in range(r)]
        + [f"z{i}_{j}" for i in range(n_agents) for j in range(n)]
        + ["diverged"]
    )
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k in range(trace.states.shape[0]):
            flag = int(trace.diverged_at is not None and k >= trace.diverged_at)
            row = (
                [k]
                + [repr(float(v)) for v in trace.states[k]]
                + [repr(float(trace.errors[k]))]
                + [repr(float(v)) for v in trace.inputs[k]]
                + [repr(float(v)) for v in trace.estimates[k].ravel()]
                + [flag]
            )
            wr.writerow(row)


def write_share_log_csv(fusion, path) -> None:
    """Transmitted shared-component log of one Gramian fusion:
    (round, sender, receiver, row-major entries)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["round", "sender", "receiver", "entries"])
        for h, sender, receiver, value in fusion.share_log:
            wr.writerow([h, sender, receiver, " ".join(repr(float(v)) for v in value.ravel())])


def write_plot_csv(trace: SimTrace, path) -> None:
    """Long-format (step, series, value) export for external plotting."""
    n = trace.states.shape[1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "series", "value"])
        for k in range(trace.states.shape[0]):
            for j in range(n):
                wr.writerow([k, f"s{j}", repr(float(trace.states[k, j]))])
            wr.writerow([k, "err", repr(float(trace.errors[k]))])


def write_report_json(result: RunResult, path) -> None:
    Path(path).write_text(json.dumps(result.report_dict(), indent=2, default=float) + "\n")
