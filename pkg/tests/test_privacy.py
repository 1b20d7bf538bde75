import numpy as np
import pytest

from coopstab.graph import CommGraph, build_weights, complete_graph, directed_cycle
from coopstab.privacy import (
    ForceAngleParametrization,
    InconsistentHypothesis,
    ReferenceWorld,
    absorbing_neighbor,
    adversary_infer_angle,
    adversary_view,
    check_topology_condition,
    construct_counterfactual,
    run_audit,
)
from coopstab.simulate import run


@pytest.fixture(scope="module")
def sec4_world(sec4, sec4_weights, sec4_pw, sec4_synthesis):
    import copy

    sc = copy.deepcopy(sec4)
    sc.horizon = 6
    sc.audit_steps = 6
    result = run(sc, privacy=True)
    return ReferenceWorld.build(
        sc.plant,
        sec4_weights,
        sec4_pw,
        gramian_rounds=(
            result.synthesis.b_fusion.rounds_used,
            result.synthesis.c_fusion.rounds_used,
        ),
        m2=result.m_used,
        innovations=list(result.trace.innovations_window),
    )


class TestTopologyCondition:
    def test_directed_cycle_pair(self):
        # robot 4 feeds the target but not the adversary
        g = directed_cycle(4)
        assert check_topology_condition(g, 0, 1)

    def test_complete_graph_all_pairs_fail(self):
        g = complete_graph(4)
        for i in range(4):
            for z in range(4):
                if i != z:
                    assert not check_topology_condition(g, i, z)

    def test_star_center_versus_leaf(self):
        g = CommGraph([[0, 1, 2, 3], [0, 1], [0, 2], [0, 3]])
        assert check_topology_condition(g, 0, 1)

    def test_non_neighbor_rejected(self):
        g = directed_cycle(4)
        # agent 2 never hears from agent 0
        with pytest.raises(ValueError, match="does not receive"):
            check_topology_condition(g, 0, 2)

    def test_absorbing_neighbor_found_on_cycle(self):
        assert absorbing_neighbor(directed_cycle(4), 0, 1) == 3

    def test_absorbing_neighbor_missing_on_undirected_cycle(self):
        g = CommGraph([[0, 1, 3], [0, 1, 2], [1, 2, 3], [0, 2, 3]])
        assert check_topology_condition(g, 0, 1)
        # agent 3 also feeds agent 2, which would expose the absorption
        assert absorbing_neighbor(g, 0, 1) is None


class TestCounterfactual:
    def test_same_pi_gives_reference_world(self, sec4_world, sec4_pw):
        cf = construct_counterfactual(sec4_world, 0, 1, sec4_pw.pi[0])
        ref = adversary_view(sec4_world, 0, 1)
        assert cf.view.digest() == ref.digest()
        assert cf.b_scale == pytest.approx(1.0)

    @pytest.mark.parametrize("alt", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    def test_distinct_pi_same_stream(self, sec4_world, sec4_pw, alt):
        cf = construct_counterfactual(sec4_world, 0, 1, alt)
        ref = adversary_view(sec4_world, 0, 1)
        assert cf.view.digest() == ref.digest()
        if alt != sec4_pw.pi[0]:
            assert abs(cf.b_scale - 1.0) > 1e-6  # the implied actuation differs

    def test_complete_graph_refused(self, sec4, sec4_pw):
        w = build_weights(complete_graph(4), "uniform")
        world = ReferenceWorld.build(
            sec4.plant, w, sec4_pw, gramian_rounds=(3, 3), m2=2, innovations=[]
        )
        with pytest.raises(ValueError, match="topology condition"):
            construct_counterfactual(world, 0, 1, 0.5)

    def test_view_contains_only_shared_components(self, sec4_world):
        view = adversary_view(sec4_world, 0, 1)
        assert all(line.split("|")[0] in ("B", "C", "alpha") for line in view.lines)
        assert all("from=0" in line for line in view.lines)

    def test_alt_pi_range_validated(self, sec4_world):
        with pytest.raises(ValueError):
            construct_counterfactual(sec4_world, 0, 1, 1.2)


class TestAngleInference:
    def test_true_pi_recovers_true_angle(self, sec4_world):
        from coopstab.privacy import _ffloat

        msg = _ffloat(sec4_world.b_stream.bars[0][0])
        theta = adversary_infer_angle(msg, 0.13, 4)
        assert theta == pytest.approx(np.pi / 4, abs=1e-6)

    def test_strictly_monotone_in_assumed_pi(self, sec4_world):
        from coopstab.privacy import _ffloat

        msg = _ffloat(sec4_world.b_stream.bars[0][0])
        thetas = [adversary_infer_angle(msg, p, 4) for p in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)]
        assert all(b > a for a, b in zip(thetas[:-1], thetas[1:]))
        assert len(set(np.round(thetas, 9))) == 6

    def test_small_pi_inconsistent(self, sec4_world):
        from coopstab.privacy import _ffloat

        msg = _ffloat(sec4_world.b_stream.bars[0][0])
        # implied cos^2 = 0.13 * 0.5 / 0.05 > 1
        with pytest.raises(InconsistentHypothesis):
            adversary_infer_angle(msg, 0.05, 4)

    def test_range_validation(self, sec4_world):
        from coopstab.privacy import _ffloat

        msg = _ffloat(sec4_world.b_stream.bars[0][0])
        with pytest.raises(ValueError):
            adversary_infer_angle(msg, 0.0, 4)


class TestAuditReport:
    def test_full_report(self, sec4_world):
        report = run_audit(
            sec4_world, 0, 1, alt_pis=(0.1, 0.3, 0.5), inference_pis=(0.05, 0.13, 0.4)
        )
        assert report.topology_ok
        assert all(w["identical"] for w in report.worlds)
        d = report.to_dict()
        assert d["reference_stream_sha256"] == report.worlds[0]["stream_sha256"]
        kinds = [("error" in row) for row in d["inference_table"]]
        assert kinds == [True, False, False]
