import math

import numpy as np
import pytest

from fadingmac import Deterministic, Exponential
from fadingmac.model import InvalidArgument
from fadingmac.offline import IwfConfig
from fadingmac.online_dp import CapacityError, DpConfig
from fadingmac.sim import (
    DominanceError,
    ExperimentSpec,
    Sweep,
    budgets_for_snr,
    generate_realizations,
    realization,
    run_experiment,
)

from conftest import unit_params

CHEAP = ("offline_iwf", "cec", "one_shot", "equal_energy")


def test_realizations_are_reproducible():
    p = unit_params(2, 5)
    a = [r.gains for r in generate_realizations(p, 5, seed=7)]
    b = [r.gains for r in generate_realizations(p, 5, seed=7)]
    np.testing.assert_array_equal(np.array(a), np.array(b))
    c = realization(p, seed=8, index=0).gains
    assert not np.array_equal(a[0], c)


def test_realization_k_stands_alone():
    p = unit_params(2, 5)
    batch = list(generate_realizations(p, 10, seed=3))
    np.testing.assert_array_equal(realization(p, 3, 7).gains, batch[7].gains)
    tail = list(generate_realizations(p, 3, seed=3, start=7))
    np.testing.assert_array_equal(tail[0].gains, batch[7].gains)


def test_user_gains_do_not_depend_on_user_count():
    g2 = realization(unit_params(2, 5), 11, 4).gains
    g5 = realization(unit_params(5, 5), 11, 4).gains
    np.testing.assert_array_equal(g5[:, :2], g2)


def test_deterministic_fading_is_constant():
    p = unit_params(2, 4, fading=[Deterministic(0.5), Deterministic(2.0)])
    g = realization(p, 1, 0).gains
    np.testing.assert_array_equal(g, np.tile([0.5, 2.0], (4, 1)))


def test_exponential_sample_mean():
    p = unit_params(1, 10)
    g = np.concatenate([r.gains.ravel() for r in generate_realizations(p, 10_000, seed=99)])
    assert g.mean() == pytest.approx(1.0, abs=0.01)


def test_budgets_for_snr():
    p = unit_params(2, 5, fading=[Exponential(1.0), Exponential(2.0)])
    q = budgets_for_snr(p, 10.0)
    np.testing.assert_allclose(q.budgets, [10.0, 20.0])
    np.testing.assert_allclose(budgets_for_snr(p, -30).budgets * p.mean_gains, [1e-3, 1e-3])


def test_sweep_validation():
    with pytest.raises(InvalidArgument):
        Sweep("bandwidth", (1.0,))
    with pytest.raises(InvalidArgument):
        Sweep("n_users", (2.5,))
    with pytest.raises(InvalidArgument):
        ExperimentSpec(unit_params(2, 5), sweep=Sweep("n_users", (2, 3)))
    with pytest.raises(InvalidArgument):
        ExperimentSpec(unit_params(2, 5), policies=("magic",))


def test_user_sweep_builds_symmetric_points():
    spec = ExperimentSpec(unit_params(2, 5), sweep=Sweep("n_users", (2, 4)), snr_db=10.0)
    (_, p2), (_, p4) = spec.points()
    assert p4.n_users == 4 and p4.budgets == pytest.approx([10.0] * 4)
    assert p2.fading == (Exponential(1.0),) * 2


def test_constant_equal_channel_policies_agree():
    p = unit_params(2, 5, fading=Deterministic(1.0))
    spec = ExperimentSpec(p, policies=("offline_iwf", "cec", "equal_energy"),
                          n_realizations=3, snr_db=5.0)
    stats = run_experiment(spec).points[0].stats
    ref = stats["offline_iwf"].mean_bits
    for name in ("cec", "equal_energy"):
        assert stats[name].mean_bits == pytest.approx(ref, rel=1e-9)
    assert stats["equal_energy"].stderr_bits == 0.0


def test_standard_error_shrinks_with_sample_size():
    p = unit_params(2, 5)
    se = [run_experiment(ExperimentSpec(p, ("equal_energy",), n, seed=5, snr_db=0.0))
          .points[0].stats["equal_energy"].stderr_bits for n in (500, 2000)]
    assert se[1] / se[0] == pytest.approx(0.5, rel=0.2)


def test_thread_count_does_not_change_results():
    spec = ExperimentSpec(unit_params(2, 5), CHEAP, 600, seed=21,
                          sweep=Sweep("snr_db", (-10.0, 10.0)))
    a = run_experiment(spec, threads=1, keep_samples=True)
    b = run_experiment(spec, threads=4, keep_samples=True)
    for pa, pb in zip(a.points, b.points):
        for name in CHEAP:
            np.testing.assert_array_equal(pa.samples[name], pb.samples[name])
            assert pa.stats[name].mean_bits == pb.stats[name].mean_bits


def test_offline_dominates_per_realization():
    spec = ExperimentSpec(unit_params(2, 5), CHEAP, 300, seed=2,
                          sweep=Sweep("snr_db", (-10.0, 10.0)))
    for point in run_experiment(spec, keep_samples=True).points:
        best = point.samples["offline_iwf"]
        for name in CHEAP[1:]:
            assert np.all(point.samples[name] <= best * (1 + 1e-9))


def test_capacity_failure_does_not_stop_other_policies():
    spec = ExperimentSpec(unit_params(2, 5), ("offline_iwf", "dp_optimal", "equal_energy"),
                          20, snr_db=0.0, dp=DpConfig(energy_grid_points=5000))
    point = run_experiment(spec).points[0]
    assert isinstance(point.errors["dp_optimal"], CapacityError)
    assert set(point.stats) == {"offline_iwf", "equal_energy"}


def test_dp_skipped_above_user_limit():
    spec = ExperimentSpec(unit_params(3, 3), ("dp_optimal", "equal_energy"), 5,
                          snr_db=0.0, dp_max_users=2)
    point = run_experiment(spec).points[0]
    assert "dp_optimal" in point.skipped and "dp_optimal" not in point.stats


def test_loose_offline_solver_trips_dominance_check():
    spec = ExperimentSpec(unit_params(2, 5), ("offline_iwf", "cec", "equal_energy"), 200,
                          seed=1, snr_db=0.0, iwf=IwfConfig(objective_tol=1e3))
    with pytest.raises(DominanceError, match=r"realization \d+ \(seed 1\)"):
        run_experiment(spec)


def test_stats_match_samples():
    spec = ExperimentSpec(unit_params(2, 3), ("one_shot",), 50, seed=4, snr_db=3.0)
    point = run_experiment(spec, keep_samples=True).points[0]
    x = point.samples["one_shot"]
    s = point.stats["one_shot"]
    assert s.mean_bits == pytest.approx(x.mean())
    assert s.stderr_bits == pytest.approx(x.std(ddof=1) / math.sqrt(50))
    assert s.n_realizations == 50
