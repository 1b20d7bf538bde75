"""Privacy-preserving cooperative stabilization of multi-channel LTI systems.

Library layout:

    linalg     eigenvalues, Schur tests, discrete Lyapunov / Riccati solvers
    graph      topologies, stochastic weights, the augmented privacy mixing
    plant      the multi-channel system, noise, channel addition
    synthesis  distributed Gramian fusion and local gain design
    agents     online estimator/controller primitives, closed-loop matrices
    analysis   fusion-step certificates, noise bounds, quadratic-index analysis
    privacy    executable non-identifiability audit
    scenario   JSON scenario schema and bundled examples
    simulate   end-to-end pipeline, traces, reports
    cli        command-line entry point
"""

__version__ = "0.1.0"

from .errors import CoopstabError, NumericFailure, ScenarioError
from .graph import CommGraph, PrivacyWeights, build_augmented, build_weights, second_eigenvalue
from .linalg import is_schur_stable, solve_dare, solve_discrete_lyapunov, spectral_radius
from .plant import NoiseSpec, PlantModel, PlantState, add_channel, check_joint_assumptions
from .scenario import Scenario, load_scenario, save_scenario
from .simulate import run

__all__ = [
    "CoopstabError",
    "NumericFailure",
    "ScenarioError",
    "CommGraph",
    "PrivacyWeights",
    "build_augmented",
    "build_weights",
    "second_eigenvalue",
    "is_schur_stable",
    "solve_dare",
    "solve_discrete_lyapunov",
    "spectral_radius",
    "NoiseSpec",
    "PlantModel",
    "PlantState",
    "add_channel",
    "check_joint_assumptions",
    "Scenario",
    "load_scenario",
    "save_scenario",
    "run",
    "__version__",
]
