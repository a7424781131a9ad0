import json
import math

import numpy as np
import pytest

from rpsp_lab import presets
from rpsp_lab.dcf_timing import DcfParams, expected_cycle_time, mean_backoff
from rpsp_lab.laws import PointMassLaw, ks_distance
from rpsp_lab.retransmission import (
    INFINITE, DivergenceError, LossModel, RetryPolicy, expected_attempts, transferred_distribution,
)
from rpsp_lab.segmentation import GeneratedPacketDistribution, SegmentationConfig
from rpsp_lab.simulator import (
    ParameterMismatchError, SimConfig, _sum_uniform, analytic_bundle, analytic_report, compare_to_analytic,
    run_simulation,
)

P = DcfParams()


def atom(size):
    return GeneratedPacketDistribution(np.array([size]), np.array([1.0]), swp_header=34)


def attempts_sd(gen, loss, policy):
    """Standard deviation of the attempts per generated packet (exact mixture moments)."""
    sizes = gen.sizes
    g = 1 - np.exp(np.asarray(loss.log_success(sizes), dtype=float))
    if policy.infinite:
        second = (1 + g) / (1 - g) ** 2
    else:
        n1 = int(policy.retry_limit) + 1
        a = np.arange(1, n1 + 1)[:, None]
        second = np.sum((2 * a - 1) * g[None, :] ** (a - 1), axis=0)
    m1 = np.dot(gen.weights, np.asarray(expected_attempts(loss, policy, sizes)))
    return math.sqrt(np.dot(gen.weights, second) - m1**2)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(1, 0, LossModel(0.0), RetryPolicy(7), packets=atom(100))
        with pytest.raises(ValueError):
            SimConfig(1, 10, LossModel(0.0), RetryPolicy(7))
        with pytest.raises(ValueError):
            SimConfig(1, 10, LossModel(0.0), RetryPolicy(7), messages=presets.preset("dynamic"))
        with pytest.raises(ValueError):
            SimConfig(1, 10, LossModel(0.0), RetryPolicy(7), packets=atom(100), method="bogus")

    def test_unlimited_retries_on_dead_link(self):
        cfg = SimConfig(1, 10, LossModel(0.5), INFINITE, packets=atom(100))
        with pytest.raises(DivergenceError):
            run_simulation(cfg)


class TestSumUniform:
    @pytest.mark.parametrize("modulus", [1024, 1000])
    def test_moments(self, modulus):
        rng = np.random.default_rng(5)
        counts = np.array([0, 1, 3, 70, 200] * 4000)
        out = _sum_uniform(rng, counts, modulus)
        assert np.all(out[counts == 0] == 0)
        var_one = (modulus**2 - 1) / 12
        for c in (1, 3, 70, 200):
            sel = out[counts == c]
            assert abs(sel.mean() - c * (modulus - 1) / 2) < 5 * math.sqrt(c * var_one / len(sel))
            assert sel.var() == pytest.approx(c * var_one, rel=0.1)
            assert sel.min() >= 0 and sel.max() <= c * (modulus - 1)

    def test_single_draw_uniform(self):
        out = _sum_uniform(np.random.default_rng(9), np.ones(2**20, dtype=np.int64), 1024)
        counts = np.bincount(out, minlength=1024)
        assert len(counts) == 1024
        # chi-square with 1023 degrees of freedom, far tail cut at about 6 sigma
        expected = len(out) / 1024
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < 1023 + 6 * math.sqrt(2 * 1023)


class TestDeterminism:
    def test_same_seed_same_report(self, generated):
        cfg = SimConfig(42, 200_000, LossModel(1e-4), RetryPolicy(7), packets=generated("dynamic"),
                        replications=3)
        a = json.dumps(run_simulation(cfg).to_dict(), sort_keys=True)
        b = json.dumps(run_simulation(cfg).to_dict(), sort_keys=True)
        assert a == b

    def test_seed_matters(self, generated):
        mk = lambda seed: SimConfig(seed, 50_000, LossModel(1e-4), RetryPolicy(7), packets=generated("dynamic"))
        assert run_simulation(mk(1)).mean_attempts != run_simulation(mk(2)).mean_attempts

    def test_replication_split(self, generated):
        cfg = SimConfig(3, 100_001, LossModel(1e-4), RetryPolicy(7), packets=generated("dynamic"),
                        replications=4)
        rep = run_simulation(cfg)
        assert rep.counters.packets.sum() == 100_001
        assert all(np.isfinite(v) for v in rep.half_widths.values())


class TestErrorFree:
    def test_single_atom(self):
        cfg = SimConfig(8, 400_000, LossModel(0.0), RetryPolicy(7), packets=atom(1500), replications=2)
        rep = run_simulation(cfg)
        cmp = compare_to_analytic(rep, analytic_bundle(cfg))
        assert rep.mean_attempts == 1.0
        assert cmp.deltas["ks_transferred"] == 0.0
        assert cmp.deltas["mean_transferred_size"] == 0.0
        assert cmp.deltas["mean_attempts"] == 0.0
        # only the backoff draws are random: uniform on [0, 31]
        se = P.slot * math.sqrt((32**2 - 1) / 12 / 400_000)
        assert abs(rep.mean_cycle_time - analytic_bundle(cfg).mean_cycle_time) < 3 * se

    def test_preset_counts(self, generated):
        cfg = SimConfig(8, 300_000, LossModel(0.0), RetryPolicy(7), packets=generated("static"))
        rep = run_simulation(cfg)
        c = rep.counters
        np.testing.assert_array_equal(c.attempts, c.packets)
        np.testing.assert_array_equal(c.successes, c.packets)
        assert rep.mean_attempts == 1.0
        seen = c.packets > 0
        np.testing.assert_array_equal(rep.transferred_weights, c.packets[seen] / c.packets.sum())


class TestInvariants:
    @pytest.mark.parametrize("method", ["geometric", "per_attempt"])
    @pytest.mark.parametrize("n", [0, 3, 7])
    def test_counters(self, generated, method, n):
        cfg = SimConfig(4, 100_000, LossModel(3e-4), RetryPolicy(n), packets=generated("dynamic"), method=method)
        rep = run_simulation(cfg)
        c = rep.counters
        assert np.all(c.successes <= c.packets)
        assert np.all(c.attempts >= c.packets) and np.all(c.attempts <= (n + 1) * c.packets)
        assert 1 <= c.max_attempts_per_packet <= n + 1
        assert c.delivered_bits(34) == int(np.dot(c.successes, 8 * (c.sizes - 34)))
        assert c.elapsed == pytest.approx(float(c.cycle_time.sum()), rel=0, abs=0)
        assert abs(rep.transferred_weights.sum() - 1) < 1e-12

    def test_single_atom_any_loss(self):
        for p in (1e-4, 1e-3):
            rep = run_simulation(SimConfig(2, 20_000, LossModel(p), RetryPolicy(7), packets=atom(900)))
            assert rep.sizes.tolist() == [900] and rep.transferred_weights.tolist() == [1.0]


class TestOracle:
    def test_static_reference_cell(self, generated):
        gen = generated("static")
        cfg = SimConfig(42, 10**6, LossModel(1e-4), RetryPolicy(7), packets=gen, replications=4)
        cmp = compare_to_analytic(run_simulation(cfg), analytic_bundle(cfg, generated=gen))
        assert cmp.deltas["ks_transferred"] < 0.01
        assert cmp.deltas["goodput"] < 0.01
        assert cmp.passed, cmp.lines()

    def test_cycle_time_single_size(self):
        cfg = SimConfig(17, 10**6, LossModel(1e-4), RetryPolicy(7), packets=atom(2346))
        rep = run_simulation(cfg)
        want = expected_cycle_time(P, LossModel(1e-4), RetryPolicy(7), 2346)
        assert rep.mean_cycle_time == pytest.approx(want, rel=0.005)

    def test_engines_agree(self, generated):
        gen = generated("dynamic")
        reports = {}
        for method in ("geometric", "per_attempt"):
            cfg = SimConfig(6, 200_000, LossModel(5e-4), RetryPolicy(7), packets=gen, method=method)
            reports[method] = run_simulation(cfg)
        exact = transferred_distribution(gen, LossModel(5e-4), RetryPolicy(7))
        se = attempts_sd(gen, LossModel(5e-4), RetryPolicy(7)) / math.sqrt(200_000)
        for rep in reports.values():
            assert abs(rep.mean_attempts - exact.mean_attempts) < 5 * se
            assert ks_distance(rep.transferred_law(), exact) < 0.01

    def test_backoff_slots_mean(self):
        # n = 0: one attempt with a stage-0 counter
        rep = run_simulation(SimConfig(12, 200_000, LossModel(1e-3), RetryPolicy(0), packets=atom(1000)))
        mean_slots = rep.counters.backoff_slots.sum() / rep.counters.attempts.sum()
        assert abs(mean_slots - mean_backoff(P, 0)) < 5 * math.sqrt(85.25 / 200_000)

    def test_law_of_large_numbers(self, generated):
        gen = generated("dynamic")
        loss, pol = LossModel(3e-4), RetryPolicy(7)
        exact = transferred_distribution(gen, loss, pol).mean_attempts
        sd = attempts_sd(gen, loss, pol)
        errors = {}
        for n in (10**4, 10**6):
            rep = run_simulation(SimConfig(21, n, loss, pol, packets=gen))
            errors[n] = abs(rep.mean_attempts - exact)
            assert errors[n] < 5 * sd / math.sqrt(n)

    def test_message_mode(self, generated):
        gen = generated("dynamic")
        seg = SegmentationConfig(presets.PAYLOAD, presets.SWP_HEADER)
        cfg = SimConfig(5, 500_000, LossModel(1e-4), RetryPolicy(7), messages=presets.preset("dynamic"),
                        segmentation=seg)
        cmp = compare_to_analytic(run_simulation(cfg), analytic_bundle(cfg, generated=gen))
        assert cmp.deltas["ks_transferred"] < 0.01
        assert cmp.deltas["mean_attempts"] < 0.01

    def test_unlimited_retries(self, generated):
        gen = generated("dynamic")
        cfg = SimConfig(10, 300_000, LossModel(1e-3), INFINITE, packets=gen)
        cmp = compare_to_analytic(run_simulation(cfg), analytic_bundle(cfg, generated=gen))
        assert cmp.passed, cmp.lines()


class TestComparison:
    def test_self_comparison(self, generated):
        cfg = SimConfig(1, 10, LossModel(1e-4), RetryPolicy(7), packets=generated("dynamic"))
        bundle = analytic_bundle(cfg)
        cmp = compare_to_analytic(analytic_report(bundle), bundle)
        assert all(v == 0.0 for v in cmp.deltas.values())
        assert cmp.cycle_time_per_size_error == 0.0 and cmp.passed

    def test_mismatch(self):
        base = SimConfig(1, 1000, LossModel(1e-4), RetryPolicy(7), packets=atom(500))
        other = SimConfig(1, 1000, LossModel(1e-4), RetryPolicy(3), packets=atom(500))
        with pytest.raises(ParameterMismatchError):
            compare_to_analytic(run_simulation(base), analytic_bundle(other))

    def test_flags(self):
        cfg = SimConfig(1, 1000, LossModel(1e-4), RetryPolicy(7), packets=atom(500))
        cmp = compare_to_analytic(run_simulation(cfg), analytic_bundle(cfg),
                                  thresholds={k: -1.0 for k in ("ks_transferred", "mean_transferred_size",
                                                                "mean_attempts", "mean_cycle_time", "goodput")})
        assert not cmp.passed and len(cmp.flags) == 5
        assert all(line.startswith("FAIL") for line in cmp.lines())


class TestSerialization:
    def test_json_and_csv(self, tmp_path, generated):
        cfg = SimConfig(7, 50_000, LossModel(1e-4), RetryPolicy(7), packets=generated("dynamic"), replications=2)
        rep = run_simulation(cfg)
        doc = json.loads(rep.write_json(tmp_path / "r.json").read_text())
        assert doc["config"]["seed"] == 7 and doc["config"]["retry_limit"] == "7"
        assert doc["estimates"]["goodput_bps"] == rep.goodput
        assert doc["counters"]["packets"] == rep.counters.packets.tolist()
        path = rep.write_csv(tmp_path / "r.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "size_bytes,weight,cdf"
        rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        np.testing.assert_array_equal(rows[:, 0], rep.sizes)
        np.testing.assert_array_equal(rows[:, 1], rep.transferred_weights)
        back = PointMassLaw(rows[:, 0].astype(int), np.diff(rows[:, 2], prepend=0.0))
        assert ks_distance(back, rep.transferred_law()) < 1e-12
