import numpy as np
import pytest

from rouleaux import lattice as L
from rouleaux import stochastic as ST
from rouleaux.measure import DiscreteMeasure
from rouleaux.reference import constant_kernel_density


def test_two_particle_rates_and_outcome():
    sys = ST.ParticleSystem.from_measure(DiscreteMeasure({(2, 2): 2.0}), 1.0, 0)
    # two particles (2,2): single unordered pair, K_1 = 4
    assert sys.pair_rates().tolist() == [4.0, 4.0, 4.0]
    ST.gillespie_step(sys, (1, 0, 0))
    live = sys.counts > 0
    assert sys.comps[live].tolist() == [[2, 5]]
    assert sys.t > 0
    with pytest.raises(ValueError):
        ST.gillespie_step(sys, (1, 0, 0))


def test_waiting_time_is_exponential_with_total_rate():
    draws = []
    for seed in range(600):
        sys = ST.ParticleSystem.from_measure(DiscreteMeasure({(2, 2): 2.0}),
                                             1.0, seed)
        ST.gillespie_step(sys, (1, 0, 0))
        draws.append(sys.t)
    mean = np.mean(draws)
    # Exp(4): mean 1/4, stderr 1/(4 sqrt(600))
    assert abs(mean - 0.25) <= 4 * 0.25 / np.sqrt(600)


def test_arm_channel_closure_on_a2_line():
    sys = ST.ParticleSystem.from_measure(
        DiscreteMeasure({(2, 2): 50.0, (3, 2): 30.0}), 1.0, 3)
    for _ in range(60):
        ST.gillespie_step(sys, (0, 0, 1))
    assert set(sys.comps[sys.counts > 0][:, 1].tolist()) == {2}


def test_size_bookkeeping_per_event():
    for alpha, ds_per_event in (((0, 0, 1), 1), ((1, 0, 0), 0), ((0, 1, 0), 0)):
        sys = ST.ParticleSystem.from_measure(DiscreteMeasure({(3, 3): 40.0}), 1.0, 5)
        s0 = sys.total_size()
        for _ in range(25):
            ST.gillespie_step(sys, alpha)
        assert sys.total_size() - s0 == ds_per_event * sys.events


def test_determinism_and_permutation_invariance():
    cps = [0.02, 0.05]
    a = ST.run_replica(DiscreteMeasure({(2, 3): 1.0, (4, 5): 0.5}), 500,
                       (1, 1, 1), 42, cps)
    b = ST.run_replica(DiscreteMeasure({(4, 5): 0.5, (2, 3): 1.0}), 500,
                       (1, 1, 1), 42, cps)
    assert a == b     # construction canonicalizes the composition order


def test_rate_audit_runs():
    sys = ST.ParticleSystem.from_measure(DiscreteMeasure({(2, 2): 64.0}), 64.0, 1)
    for _ in range(50):
        ST.gillespie_step(sys, (1, 1, 1))
    inc = sys.pair_rates()
    ref = sys.pair_rates_bruteforce()
    assert np.abs(inc - ref).max() <= 1e-10 * max(np.abs(ref).max(), 1.0)


def test_empirical_measure():
    sys = ST.ParticleSystem.from_measure(DiscreteMeasure({(2, 2): 1.5}), 2.0, 0)
    m = ST.empirical_measure(sys)
    assert m.entries == {(2, 2): 1.5}
    sys2 = ST.ParticleSystem.from_measure(DiscreteMeasure(), 2.0, 0)
    assert ST.empirical_measure(sys2).total() == 0.0


def test_ensemble_determinism_and_stderr_scaling():
    f0 = DiscreteMeasure({(2, 2): 1.0})
    cps = [0.1, 0.3]
    r1 = ST.run_ensemble(f0, 2000, (0, 0, 1), cps, [7, 7])
    assert np.all(r1.stderr["m0"] == 0.0)    # identical seeds, identical runs
    e16 = ST.run_ensemble(f0, 2000, (0, 0, 1), cps, range(16))
    e64 = ST.run_ensemble(f0, 2000, (0, 0, 1), cps, range(64))
    # stderr ~ 1/sqrt(n): ratio near 2, generous window for sampling noise
    ratio = e16.stderr["m2_yy"][-1] / e64.stderr["m2_yy"][-1]
    assert 1.2 <= ratio <= 3.4


def test_mean_field_constant_kernel():
    f0 = DiscreteMeasure({(2, 2): 1.0})
    cps = [0.2, 0.5]
    res = ST.run_ensemble(f0, 20_000, (0, 0, 1), cps, range(8))
    for k, t in enumerate(cps):
        exact = constant_kernel_density(1.0, 1.0, t)
        assert abs(res.mean["m0"][k] - exact) <= 4 * res.stderr["m0"][k] + 1e-4


def test_ensemble_vs_lattice_moments():
    f0 = DiscreteMeasure({(2, 3): 1.0})
    t_star = 1.0 / 3.0
    cps = [0.25 * t_star, 0.5 * t_star]
    res = ST.run_ensemble(f0, 20_000, (0, 0, 1), cps, range(12))
    run = L.solve(f0, (0, 0, 1), 128, cps, rtol=1e-9)
    for k in range(len(cps)):
        mom = run.checkpoints[k + 1].moments
        for fld, rv in (("m1_y", mom.m1[1]), ("m2_yy", mom.m2[1, 1])):
            scale = res.stderr[fld][k] + 1e-10 * abs(rv)
            assert abs(res.mean[fld][k] - rv) <= 4 * scale


def test_largest_fraction_monotone_data():
    sys = ST.ParticleSystem.from_measure(DiscreteMeasure({(2, 3): 200.0}), 1.0, 9)
    f0 = sys.largest_fraction()
    for _ in range(100):
        ST.gillespie_step(sys, (0, 0, 1))
    assert sys.largest_fraction() > f0


def test_csv_rows_shape():
    res = ST.run_ensemble(DiscreteMeasure({(2, 2): 1.0}), 500, (0, 0, 1),
                          [0.1], [0, 1])
    rows = res.to_csv_rows()
    assert len(rows) == 2 and len(rows[0]) == 9
