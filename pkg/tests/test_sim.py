import math

import numpy as np
import pytest

from secretary_sampling import aos, core, lastzero, ros, sim
from secretary_sampling.ros import EllFunction
from secretary_sampling.sim import GeneratorSpec

INC = GeneratorSpec("increasing", 1)


def inc(n: int) -> GeneratorSpec:
    return GeneratorSpec("increasing", n)


def within(report: sim.TrialReport, value: float) -> bool:
    return abs(report.estimate - value) <= report.ci_halfwidth


# ---------------------------------------------------------------------------
# Plumbing


def test_generator_validation_and_labels(tmp_path):
    assert inc(5).label == "increasing"
    drop = GeneratorSpec("increasing-then-drop", 10, drop_point=4)
    assert drop.label == "increasing-then-drop(m=4)"
    row = drop.values(np.zeros(1, dtype=np.uint64))[0]
    assert list(row[:4]) == [1, 2, 3, 4] and np.all(row[4:] < 0)
    with pytest.raises(ValueError):
        GeneratorSpec("increasing-then-drop", 10, drop_point=11)
    with pytest.raises(ValueError):
        GeneratorSpec("zigzag", 10)
    with pytest.raises(ValueError):
        GeneratorSpec("increasing", 0)
    path = tmp_path / "vals.txt"
    path.write_text("3\n1\n2\n")
    fixed = GeneratorSpec("from-file", 0, path=str(path))
    assert fixed.n == 3 and fixed.label == "from-file(vals.txt)"
    u = GeneratorSpec("uniform-random", 6).values(np.arange(4, dtype=np.uint64))
    assert u.shape == (4, 6)


def test_report_fields():
    r = sim.TrialReport("kmax", "increasing", 10, 0.5, 20_000, 5_000, 3)
    assert r.estimate == 0.25
    assert r.ci_halfwidth == pytest.approx(3 * math.sqrt(0.25 * 0.75 / 20_000))
    assert set(r.to_dict()) >= {"policy", "generator", "n", "p", "trials", "wins", "estimate", "ci", "seed"}
    small = sim.TrialReport("kmax", "increasing", 10, 0.5, 100, 25, 3)
    assert small.ci_halfwidth is None
    with pytest.raises(ValueError):
        small.contains(0.25)


def test_run_trials_errors():
    with pytest.raises(ValueError, match="unknown policy"):
        sim.run_trials("nope", inc(5), 0.5, 10, 1)
    with pytest.raises(ValueError):
        sim.run_trials("kmax", inc(5), 0.5, 0, 1)
    with pytest.raises(ValueError):
        sim.run_trials("kmax", inc(5), 1.5, 10, 1)
    with pytest.raises(ValueError):
        sim.run_trials("alg-t", inc(5), 0.5, 10, 1, engine="warp")


def test_worker_count(monkeypatch):
    monkeypatch.setenv(sim.WORKERS_ENV, "3")
    assert sim.worker_count() == 3
    assert sim.worker_count(5) == 5
    with pytest.raises(ValueError):
        sim.worker_count(0)


@pytest.mark.parametrize("policy", sim.POLICIES)
def test_reproducible_across_workers(policy):
    gen = inc(30)
    runs = [sim.run_trials(policy, gen, 0.9, 70_000, 99, workers=w) for w in (1, 3, 8)]
    assert len({r.wins for r in runs}) == 1
    other = sim.run_trials(policy, gen, 0.9, 70_000, 100, workers=1)
    assert other.wins != runs[0].wins


def test_trial_sampling_matches_core_sample():
    seeds = sim.rng.derive_seeds(17, np.arange(5))
    bits = sim._element_bits(seeds, 12, 0.4)
    for t, s in enumerate(seeds):
        assert np.array_equal(bits[t], core.sample(core.Instance.increasing(12), 0.4, int(s)).sample_mask)


# ---------------------------------------------------------------------------
# Monte Carlo against exact values


def test_kmax_against_oracle():
    exact = sim.oracle_aos_exact(lastzero.kmax_policy(2), 12, 0.5)
    assert within(sim.run_trials("kmax", inc(12), 0.5, 200_000, 1), exact)


def test_first_online_against_hand_formula():
    n, p = 6, 0.6
    exact = n * p ** (n - 1) * (1 - p) + p**n
    assert within(sim.run_trials("first-online", inc(n), p, 200_000, 2), exact)


def test_unknown_p_against_formula():
    exact = aos.kmax_unknown_p_success(14, 0.6)
    assert within(sim.run_trials("kmax-unknown-p", inc(14), 0.6, 200_000, 3), exact)


def test_last_zero_engine_against_closed_form():
    r = sim.run_trials("last-zero-kmax", inc(200), 0.5, 200_000, 4)
    assert within(r, 0.25)
    assert r.params == {"k": 2}


@pytest.mark.parametrize("engine", ["lazy", "direct"])
@pytest.mark.parametrize("n, p", [(5, 0.3), (20, 0.5), (40, 0.2)])
def test_alg_t_engines_against_exact(engine, n, p):
    exact = ros.alg_t_success_prob(ros.solve_thresholds(n), p, n)
    assert within(sim.run_trials("alg-t", inc(n), p, 200_000, 5, engine=engine), exact)


def test_alg_t_engine_ignores_values():
    a = sim.run_trials("alg-t", GeneratorSpec("uniform-random", 30), 0.4, 100_000, 6, engine="direct")
    exact = ros.alg_t_success_prob(ros.solve_thresholds(30), 0.4, 30)
    assert within(a, exact)


def test_seq_ell_against_formula():
    n, p = 8, 0.4
    _, ell = ros.optimal_policy_dp(n)
    exact = ros.seq_ell_success(n, p, ell)
    assert within(sim.run_trials("seq-ell", inc(n), p, 200_000, 7), exact)
    custom = EllFunction([0, 0, 1, 1, 1, 2, 3, 8])
    assert within(sim.run_trials("seq-ell", inc(n), p, 200_000, 8, ell=custom), ros.seq_ell_success(n, p, custom))
    with pytest.raises(ValueError):
        sim.run_trials("seq-ell", inc(n), p, 10, 1, ell=EllFunction([1, 1]))


def test_random_values_dominate_guarantee():
    r = sim.run_trials("alg-t", GeneratorSpec("uniform-random", 2000), 0.5, 200_000, 9)
    assert r.estimate >= ros.ros_guarantee(0.5) - r.ci_halfwidth


def test_drop_instance_keeps_kmax_guarantee():
    p = 0.5
    for m in (3, 20, 50):
        r = sim.run_trials("kmax", GeneratorSpec("increasing-then-drop", 50, drop_point=m), p, 100_000, m)
        assert r.estimate >= aos.kmax_success(p, 2) - r.ci_halfwidth


def test_from_file_generator(tmp_path):
    path = tmp_path / "inst.txt"
    path.write_text("\n".join(str(v) for v in [5, 3, 9, 1, 7, 2]))
    r = sim.run_trials("first-online", GeneratorSpec("from-file", 0, path=str(path)), 0.3, 50_000, 10)
    # First online wins iff it is the maximum of V; enumerate the 2^6 sampling patterns.
    vals = [5, 3, 9, 1, 7, 2]
    exact = 0.0
    for code in range(64):
        mask = [(code >> i) & 1 for i in range(6)]
        w = math.prod(0.3 if b else 0.7 for b in mask)
        online = [v for v, b in zip(vals, mask) if not b]
        exact += w * (not online or online[0] == max(online))
    assert within(r, exact)


# ---------------------------------------------------------------------------
# Exhaustive oracles


def test_oracle_size_limits():
    with pytest.raises(ValueError):
        sim.oracle_aos_exact(lastzero.kmax_policy(2), 25, 0.5)
    with pytest.raises(ValueError):
        sim.oracle_ros_exact(EllFunction.constant(9, 1), 9, 1)
    assert sim.oracle_ros_exact(EllFunction.constant(4, 1), 4, 4) == 1.0


def test_oracle_ros_small_cases():
    assert sim.oracle_ros_exact(EllFunction.constant(2, 1), 2, 0) == pytest.approx(0.5)
    ell = EllFunction.constant(3, 1)
    assert sim.oracle_ros_exact(ell, 3, 1) == pytest.approx(ros.seq_ell_success_given_h(3, 1, ell), abs=1e-12)


def test_oracle_ros_size_eight_sample():
    gen = np.random.default_rng(8)
    for _ in range(5):
        ell = EllFunction(np.sort(gen.integers(0, 9, 8)))
        assert sim.oracle_ros_exact(ell, 8, 4) == pytest.approx(ros.seq_ell_success_given_h(8, 4, ell), abs=1e-10)


def test_oracle_by_h_totals():
    n, p = 10, 0.3
    by_h = sim.oracle_aos_by_h(lastzero.kmax_policy(1), n)
    from scipy import stats

    mixed = float(np.dot(stats.binom.pmf(np.arange(n + 1), n, p), by_h))
    assert mixed == pytest.approx(sim.oracle_aos_exact(lastzero.kmax_policy(1), n, p), abs=1e-12)
