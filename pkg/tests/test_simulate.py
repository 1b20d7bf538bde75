import copy

import numpy as np

from coopstab.plant import NoiseSpec
from coopstab.simulate import prepare, run


class TestAutoFusionCounts:
    def test_auto_takes_one_past_the_bound(self, sec4):
        sc = copy.deepcopy(sec4)
        sc.horizon = 50
        prep = prepare(sc)
        plain = run(sc, privacy=False, m_override="auto", prepared=prep)
        assert plain.m_used == int(np.ceil(prep.bounds.m1_bar)) + 1
        private = run(sc, privacy=True, m_override="auto", prepared=prep)
        assert private.m_used == int(np.ceil(prep.bounds.m2_bar)) + 1
        assert private.rho_f < 1.0 and plain.rho_f < 1.0


class TestNoisyRollout:
    def test_reproducible_and_certified(self, sec4):
        sc = copy.deepcopy(sec4)
        sc.horizon = 150
        sc.noise = NoiseSpec(sigma_w=0.05, sigma_v=0.05, seed=sc.seed)
        prep = prepare(sc)
        a = run(sc, privacy=True, prepared=prep)
        b = run(sc, privacy=True, prepared=prep)
        assert (a.trace.states == b.trace.states).all()
        assert a.noise_cert is not None and a.noise_cert.bound > 0
        assert "noise_certificate" in a.report_dict()

    def test_zero_noise_matches_unnoised_path(self, sec4):
        sc = copy.deepcopy(sec4)
        sc.horizon = 60
        prep = prepare(sc)
        base = run(sc, privacy=True, prepared=prep)
        sc2 = copy.deepcopy(sc)
        sc2.noise = NoiseSpec(0.0, 0.0, seed=123)
        again = run(sc2, privacy=True, prepared=prep)
        assert (base.trace.states == again.trace.states).all()
