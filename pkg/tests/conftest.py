"""Shared fixtures: the four-robot transport scenario and its synthesis
products, computed once per session."""
import warnings

import numpy as np
import pytest

from coopstab.graph import build_augmented, build_weights
from coopstab.scenario import load_scenario
from coopstab.synthesis import (
    AgentGains,
    compute_control_gain,
    compute_observer_gain,
    synthesize_gains,
)


@pytest.fixture(scope="session")
def sec4():
    return load_scenario("sec4_four_robots")


@pytest.fixture(scope="session")
def sec4_weights(sec4):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_weights(sec4.graph, sec4.weight_rule)


@pytest.fixture(scope="session")
def sec4_pw(sec4):
    return sec4.privacy_weights()


@pytest.fixture(scope="session")
def sec4_aug(sec4_weights, sec4_pw):
    return build_augmented(sec4_weights, sec4_pw)


@pytest.fixture(scope="session")
def sec4_synthesis(sec4, sec4_weights, sec4_pw):
    return synthesize_gains(sec4.plant, sec4_weights, sec4_pw, sec4.gramian_delta)


@pytest.fixture(scope="session")
def sec4_exact_gains(sec4):
    """Gains computed from the exact Gramian limits (no fusion error)."""
    plant = sec4.plant
    bbt = plant.input_gramian()
    ctc = plant.output_gramian()
    gains = []
    p_k = p_l = None
    for ch in plant.channels:
        k, p_k = compute_control_gain(plant.a, ch.b, bbt, p_k)
        l, p_l = compute_observer_gain(plant.a, ch.c, ctc, p_l)
        gains.append(AgentGains(k_gain=k, l_gain=l, fused_b=bbt, fused_c=ctc))
    return gains


def random_connected_graph(rng, n):
    """Random undirected connected graph via a random spanning tree plus
    extra edges."""
    order = rng.permutation(n)
    neighbors = [set() for _ in range(n)]
    for a, b in zip(order[:-1], order[1:]):
        neighbors[a].add(int(b))
        neighbors[b].add(int(a))
    for _ in range(int(rng.integers(0, n * (n - 1) // 2 + 1))):
        a, b = rng.integers(0, n, 2)
        if a != b:
            neighbors[a].add(int(b))
            neighbors[b].add(int(a))
    from coopstab.graph import CommGraph

    return CommGraph([sorted(s | {i}) for i, s in enumerate(neighbors)])


def random_stabilizable_plant(rng, n, n_agents):
    """Random plant that passes the joint PBH tests, with possibly unstable A."""
    from coopstab.plant import PlantModel, check_joint_assumptions

    while True:
        a = rng.normal(0, 1, (n, n))
        a *= rng.uniform(0.7, 1.3) / max(abs(np.linalg.eigvals(a)))
        channels = [
            (rng.normal(0, 1, (n, 1)), rng.normal(0, 1, (1, n)))
            for _ in range(n_agents)
        ]
        plant = PlantModel(a=a, channels=channels)
        flags = check_joint_assumptions(plant)
        if flags.stabilizable and flags.detectable:
            return plant
