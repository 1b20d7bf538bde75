"""Closed-form certificates: fusion-step bounds, privacy-cost comparison,
noise-robustness bounds, and the LQR channel-addition analysis.

The central object is a scaled Lyapunov pair for the nominal closed loop

    F = [[A1, sum B^i K^i], [0, A2]],      (1 + theta) F'PF - P + Q = 0,

from which a sufficient fusion-step count follows:

    M > (1/2) log_lam { theta^2 lam_min(Q) / (2 (1+theta)^2 psi^2 lam_max(P)) },

with lam the mixing matrix's largest non-unit eigenvalue magnitude and psi
a coupling constant assembled from the stacked agent operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .agents import _stacked_operators, build_closed_loop_matrix, noise_input_matrix
from .errors import NumericFailure
from .graph import (
    AugmentedWeights,
    StochasticMatrix,
    augmented_pair_eigenvalues,
    second_eigenvalue,
)
from .linalg import (
    is_schur_stable,
    riccati_iterates,
    solve_dare,
    solve_discrete_lyapunov,
    spectral_radius,
)
from .plant import NoiseSpec, PlantModel, add_channel

__all__ = [
    "LyapunovCertificate",
    "build_lyapunov_certificate",
    "nominal_closed_loop",
    "BoundReport",
    "compute_m1_bar",
    "compute_m2_bar",
    "bound_report",
    "optimize_epsilon",
    "NoiseCertificate",
    "noise_bound",
    "error_covariance_recursion",
    "LqrReport",
    "lqr_value",
    "compare_channel_addition",
]


@dataclass(frozen=True)
class LyapunovCertificate:
    theta: float
    p: np.ndarray
    q: np.ndarray
    f: np.ndarray

    @property
    def lam_min_q(self) -> float:
        return float(np.linalg.eigvalsh(self.q)[0])

    @property
    def lam_max_p(self) -> float:
        return float(np.linalg.eigvalsh(self.p)[-1])

    def residual(self) -> float:
        r = (1 + self.theta) * self.f.T @ self.p @ self.f - self.p + self.q
        return float(np.linalg.norm(r, 2))


def nominal_closed_loop(plant: PlantModel, gains) -> np.ndarray:
    """F = [[A1, sum B^i K^i], [0, A2]] with A1 = A + sum B^i K^i and
    A2 = A - sum L^i C^i."""
    a = plant.a
    n = plant.n
    bk = sum(ch.b @ g.k_gain for ch, g in zip(plant.channels, gains))
    lc = sum(g.l_gain @ ch.c for ch, g in zip(plant.channels, gains))
    return np.block([[a + bk, bk], [np.zeros((n, n)), a - lc]])


def build_lyapunov_certificate(f, q0=None, theta: float | None = None) -> LyapunovCertificate:
    """Solve F'P0F - P0 + Q0 = 0 and rescale into the (1+theta) form.

    theta defaults to c/(1-c) with c = lam_min(Q0) / (2 lam_max(P0)), which
    keeps Q = Q0 - theta/(1+theta) P0 positive definite with a factor-2
    margin. Larger theta values tighten the fusion-step bounds; callers may
    override as long as Q stays PD.
    """
    f = np.asarray(f, dtype=float)
    if q0 is None:
        q0 = np.eye(f.shape[0])
    q0 = np.asarray(q0, dtype=float)
    p0 = solve_discrete_lyapunov(f, q0)
    lam_min_q0 = float(np.linalg.eigvalsh(q0)[0])
    lam_max_p0 = float(np.linalg.eigvalsh(p0)[-1])
    if theta is None:
        c = 0.5 * lam_min_q0 / lam_max_p0
        theta = c / (1.0 - c)
    p = p0 / (1.0 + theta)
    q = q0 - theta / (1.0 + theta) * p0
    if np.linalg.eigvalsh(q)[0] <= 0:
        raise NumericFailure(f"theta={theta} too large: Q = Q0 - theta/(1+theta) P0 is not PD")
    cert = LyapunovCertificate(theta=float(theta), p=p, q=q, f=f)
    if cert.residual() > 1e-8 * np.linalg.norm(p, 2):
        raise NumericFailure("scaled Lyapunov identity residual too large")
    return cert


def _psi_terms(plant: PlantModel, gains):
    """The three norm groups entering psi, from the stacked operators."""
    n_agents = plant.agent_count
    kbar, lbar, bbar, cbar, acal = _stacked_operators(plant, gains)
    nbk = n_agents * bbar @ kbar
    nlc = n_agents * lbar @ cbar
    t_ctrl = np.linalg.norm(nbk, 2) ** 2 + np.linalg.norm(acal - nbk, 2) ** 2
    t_est = np.linalg.norm(acal + nlc, 2) ** 2 + np.linalg.norm(acal, 2) ** 2
    return float(t_ctrl), float(t_est)


def _log_bound(lam: float, cert: LyapunovCertificate, psi: float, half: bool) -> tuple[float, bool]:
    """Evaluate the log_lam bound; returns (value, vacuous flag)."""
    arg = (
        cert.theta**2
        * cert.lam_min_q
        / (2.0 * (1.0 + cert.theta) ** 2 * psi**2 * cert.lam_max_p)
    )
    if lam <= 0.0:
        return 1.0, False  # rank-one mixing: a single round is already exact
    if arg >= 1.0:
        return 0.0, True  # brace exceeds 1: the condition holds for any M
    value = math.log(arg) / math.log(lam)
    return (0.5 * value if half else value), False


def compute_m1_bar(
    cert: LyapunovCertificate,
    plant: PlantModel,
    gains,
    w: StochasticMatrix,
    form: str = "exact",
    kappa=None,
):
    """Sufficient plain-fusion step count (real-valued); returns (m1_bar, vacuous).

    form="exact" uses psi = max{1, t_ctrl, t_est}; form="kappa" uses the
    norm-bound relaxation psi1 = max{1, 5 kA^2 + 5 N^2 kB^2 kK^2 + 3 N^2 kL^2 kC^2}
    and the (kQ, kP) pair, which is always at least as conservative.
    """
    lam = second_eigenvalue(w)
    if form == "exact":
        t_ctrl, t_est = _psi_terms(plant, gains)
        psi = max(1.0, t_ctrl, t_est)
        return _log_bound(lam, cert, psi, half=True)
    if form == "kappa":
        if kappa is None:
            raise ValueError("kappa form needs KappaBounds")
        n_agents = plant.agent_count
        psi1 = max(
            1.0,
            5 * kappa.kappa_a**2
            + 5 * n_agents**2 * kappa.kappa_b**2 * kappa.kappa_k**2
            + 3 * n_agents**2 * kappa.kappa_l**2 * kappa.kappa_c**2,
        )
        return _kappa_log_bound(lam, cert.theta, psi1, kappa)
    raise ValueError(f"unknown form {form!r}")


def _kappa_log_bound(lam: float, theta: float, psi_k: float, kappa) -> tuple[float, bool]:
    arg = math.sqrt(2.0) * theta / (2.0 * (1.0 + theta) * psi_k) * math.sqrt(
        kappa.kappa_q / kappa.kappa_p
    )
    if lam <= 0.0:
        return 1.0, False
    if arg >= 1.0:
        return 0.0, True
    return math.log(arg) / math.log(lam), False


def compute_m2_bar(
    cert: LyapunovCertificate,
    plant: PlantModel,
    gains,
    aug: AugmentedWeights,
    form: str = "exact",
    kappa=None,
):
    """Sufficient private-fusion step count; returns (m2_bar, vacuous).

    form="exact" doubles the estimator coupling term by 2 ||V||^2;
    form="relaxed" replaces that factor by 2 (valid since ||V||_2 < 1);
    form="kappa" uses psi2 = max{1, 10 kA^2 + 10 N^2 kB^2 kK^2 + 6 N^2 kL^2 kC^2}.
    """
    lam_tilde = second_eigenvalue(aug)
    if form in ("exact", "relaxed"):
        t_ctrl, t_est = _psi_terms(plant, gains)
        factor = 2.0 * np.linalg.norm(aug.v, 2) ** 2 if form == "exact" else 2.0
        psi_tilde = max(1.0, t_ctrl, factor * t_est)
        return _log_bound(lam_tilde, cert, psi_tilde, half=True)
    if form == "kappa":
        if kappa is None:
            raise ValueError("kappa form needs KappaBounds")
        n_agents = plant.agent_count
        psi2 = max(
            1.0,
            10 * kappa.kappa_a**2
            + 10 * n_agents**2 * kappa.kappa_b**2 * kappa.kappa_k**2
            + 6 * n_agents**2 * kappa.kappa_l**2 * kappa.kappa_c**2,
        )
        return _kappa_log_bound(lam_tilde, cert.theta, psi2, kappa)
    raise ValueError(f"unknown form {form!r}")


@dataclass
class BoundReport:
    m1_bar: float
    m2_bar: float
    m1_vacuous: bool
    m2_vacuous: bool
    m1_bar_kappa: float
    m2_bar_kappa: float
    psi: float
    psi_tilde: float
    lam: float
    lam_tilde: float
    theta: float
    kappa: object = None

    def to_dict(self) -> dict:
        d = {
            "m1_bar": self.m1_bar,
            "m2_bar": self.m2_bar,
            "m1_vacuous": self.m1_vacuous,
            "m2_vacuous": self.m2_vacuous,
            "m1_bar_kappa": self.m1_bar_kappa,
            "m2_bar_kappa": self.m2_bar_kappa,
            "psi": self.psi,
            "psi_tilde": self.psi_tilde,
            "lambda": self.lam,
            "lambda_tilde": self.lam_tilde,
            "theta": self.theta,
        }
        if self.kappa is not None:
            d["kappa"] = {k: getattr(self.kappa, k) for k in (
                "kappa_a", "kappa_b", "kappa_c", "kappa_k", "kappa_l", "kappa_p", "kappa_q")}
        return d


def bound_report(cert, plant, gains, w, aug, kappa=None) -> BoundReport:
    """Evaluate both exact-form bounds plus the kappa relaxations."""
    t_ctrl, t_est = _psi_terms(plant, gains)
    psi = max(1.0, t_ctrl, t_est)
    psi_tilde = max(1.0, t_ctrl, 2.0 * np.linalg.norm(aug.v, 2) ** 2 * t_est)
    m1, v1 = compute_m1_bar(cert, plant, gains, w, form="exact")
    m2, v2 = compute_m2_bar(cert, plant, gains, aug, form="exact")
    if kappa is not None:
        m1k, _ = compute_m1_bar(cert, plant, gains, w, form="kappa", kappa=kappa)
        m2k, _ = compute_m2_bar(cert, plant, gains, aug, form="kappa", kappa=kappa)
    else:
        m1k = m2k = float("nan")
    return BoundReport(
        m1_bar=m1,
        m2_bar=m2,
        m1_vacuous=v1,
        m2_vacuous=v2,
        m1_bar_kappa=m1k,
        m2_bar_kappa=m2k,
        psi=psi,
        psi_tilde=psi_tilde,
        lam=second_eigenvalue(w),
        lam_tilde=second_eigenvalue(aug),
        theta=cert.theta,
        kappa=kappa,
    )


def optimize_epsilon(w: StochasticMatrix, grid: int = 200) -> tuple[float, float]:
    """Grid-search the coupling scalar that minimizes the worst augmented
    eigenvalue magnitude over the base spectrum (unit-split branch formula);
    returns (eps_star, lam_tilde_star)."""
    if grid < 10:
        raise ValueError("grid must have at least 10 points")
    ev = np.linalg.eigvals(w.w)
    keep = np.ones(len(ev), dtype=bool)
    keep[np.argmin(np.abs(ev - 1.0))] = False
    lams = ev[keep]
    if lams.size == 0:
        lams = np.array([0.0])
    best_eps = best_obj = None
    for eps in np.linspace(1e-3, 2.0 / 3.0 - 1e-3, grid):
        obj = 0.0
        for lam in lams:
            plus, minus = augmented_pair_eigenvalues(lam, eps)
            obj = max(obj, 2 * abs(plus), 2 * abs(minus))
        if best_obj is None or obj < best_obj:
            best_obj, best_eps = obj, float(eps)
    return best_eps, best_obj / 2.0


@dataclass
class NoiseCertificate:
    p_breve: np.ndarray
    q_breve: np.ndarray
    theta_breve: float
    f_omega: np.ndarray
    bound: float

    def to_dict(self) -> dict:
        return {"theta_breve": self.theta_breve, "bound": self.bound}


def noise_bound(
    plant: PlantModel,
    gains,
    aug: AugmentedWeights,
    m2: int,
    sigma: NoiseSpec,
) -> NoiseCertificate:
    """Steady-state mean-square state bound for the noisy private loop:

        lim E||s_k||^2 <= lam_max(Fw' P Fw) (n sw^2 + m sv^2)
                          / (lam_min(P) (1 - theta)),

    with P solving F2'PF2 - P + I = 0 and theta = 1 - 1/lam_max(P).
    Requires the closed loop to be Schur stable.
    """
    f2 = build_closed_loop_matrix(plant, gains, aug, m2, private=True)
    if not is_schur_stable(f2):
        raise NumericFailure(
            f"closed loop is unstable at m2={m2} (rho={spectral_radius(f2):.4f}); "
            "the noise bound is undefined"
        )
    q_breve = np.eye(f2.shape[0])
    p_breve = solve_discrete_lyapunov(f2, q_breve)
    evs = np.linalg.eigvalsh(p_breve)
    theta_breve = 1.0 - 1.0 / evs[-1]
    if not 0.0 < theta_breve < 1.0:
        raise NumericFailure(f"contraction factor {theta_breve} outside (0, 1)")
    fw = noise_input_matrix(plant, gains, aug, m2)
    top = float(np.linalg.eigvalsh(fw.T @ p_breve @ fw)[-1])
    power = plant.n * sigma.sigma_w**2 + plant.output_dim * sigma.sigma_v**2
    bound = top * power / (evs[0] * (1.0 - theta_breve))
    return NoiseCertificate(
        p_breve=p_breve, q_breve=q_breve, theta_breve=float(theta_breve), f_omega=fw, bound=bound
    )


def error_covariance_recursion(
    plant: PlantModel,
    gains,
    aug: AugmentedWeights,
    m2: int,
    q_omega,
    horizon: int,
):
    """Propagate P_k = F2 P_{k-1} F2' + Fw Qw Fw' from P_0 = 0 and return
    (sequence, fixed point). The fixed point solves the transposed discrete
    Lyapunov equation and bounds the stationary second moment of the
    augmented state; estimation-error bounds follow through the selector."""
    f2 = build_closed_loop_matrix(plant, gains, aug, m2, private=True)
    if not is_schur_stable(f2):
        raise NumericFailure("closed loop is unstable; the covariance recursion diverges")
    fw = noise_input_matrix(plant, gains, aug, m2)
    q_omega = np.asarray(q_omega, dtype=float)
    drive = fw @ q_omega @ fw.T
    seq = []
    p = np.zeros_like(f2)
    for _ in range(horizon):
        p = f2 @ p @ f2.T + drive
        seq.append(p)
    # the drive is PSD with low rank, so solve the stationary equation
    # directly rather than through the PD-only public solver
    fixed = sla.solve_discrete_lyapunov(f2, 0.5 * (drive + drive.T))
    return seq, 0.5 * (fixed + fixed.T)


@dataclass
class LqrReport:
    p_riccati: np.ndarray
    j_value: float
    initial_state: np.ndarray

    def to_dict(self) -> dict:
        return {"j_value": self.j_value, "initial_state": self.initial_state.tolist()}


def lqr_value(gramian, a, s0) -> LqrReport:
    """Minimized quadratic index for unit state/input weights driven through
    a Gramian input matrix: J = s0' P s0 with P the stabilizing solution."""
    s0 = np.asarray(s0, dtype=float).reshape(-1)
    p = solve_dare(a, gramian)
    return LqrReport(p_riccati=p, j_value=float(s0 @ p @ s0), initial_state=s0)


def compare_channel_addition(
    plant: PlantModel,
    b_new,
    s0,
    check_iterates: bool = False,
    iterate_rounds: int = 50,
):
    """Index with and without one extra actuation column; returns
    (j0, j1, monotone) where monotone certifies j0 >= j1 up to 1e-9 * j0.

    With check_iterates the per-round ordering of the two monotone Riccati
    iterations is also verified (the added channel can only lower each
    iterate)."""
    g0 = plant.input_gramian()
    bigger = add_channel(plant, b_new)
    g1 = bigger.input_gramian()
    r0 = lqr_value(g0, plant.a, s0)
    r1 = lqr_value(g1, plant.a, s0)
    monotone = r0.j_value >= r1.j_value - 1e-9 * abs(r0.j_value)
    if check_iterates:
        for p0, p1 in zip(
            riccati_iterates(plant.a, g0, iterate_rounds),
            riccati_iterates(plant.a, g1, iterate_rounds),
        ):
            if np.linalg.eigvalsh(p0 - p1)[0] < -1e-9:
                monotone = False
                break
    return r0.j_value, r1.j_value, monotone
