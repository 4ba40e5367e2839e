"""Round-loop, replication, and sweep behavior."""

import csv
import math

import numpy as np
import pytest

from lteusim import game, harness
from lteusim.harness import (MonteCarloResult, RunResult, monte_carlo,
                             prepare_run, run, sweep, write_cdf_csv,
                             write_sweep_csv, write_trace_csv)
from lteusim.scenario import ALGORITHMS, desk_config


def toy_config(**overrides):
    """One MBS, one user, two actions (idle / full band), no WiFi."""
    base = dict(n_sbs=0, n_users=1, n_waps=0, action_set_size=2,
                reservoir_units=20, max_iterations=400, epsilon=0.05,
                convergence_window=30, convergence_tol=1e-3)
    base.update(overrides)
    return desk_config(**base)


def small_config(**overrides):
    base = dict(n_sbs=1, n_users=3, n_waps=0, action_set_size=4,
                reservoir_units=16, max_iterations=150,
                convergence_window=25, epsilon=0.4)
    base.update(overrides)
    return desk_config(**base)


class TestRun:
    @pytest.mark.parametrize("algorithm", ALGORITHMS)
    def test_two_action_toy_converges_to_the_better_action(self, algorithm):
        result = run(toy_config(), algorithm, seed=3)
        assert result.converged_at is not None
        assert result.converged_at <= result.config.max_iterations
        # the sampled two-action space is {all zero, whole band}; the
        # greedy choice must settle on the whole-band action
        assert result.records[-1].greedy_action == (1,)
        assert result.final_rates.dl_bps[0] > 0
        assert result.final_rates.ul_bps[0] > 0

    def test_zero_iterations_gives_empty_run(self):
        result = run(toy_config(max_iterations=0), "esn", seed=0)
        assert result.records == ()
        assert result.converged_at is None
        assert result.metrics["sum_rate_bps"] == 0.0
        assert np.all(result.final_rates.serving_dl == -1)

    def test_deterministic_in_config_seed_algorithm(self):
        a = run(small_config(), "esn", seed=11)
        b = run(small_config(), "esn", seed=11)
        assert a.converged_at == b.converged_at
        assert len(a.records) == len(b.records)
        for ra, rb in zip(a.records, b.records):
            assert ra.joint_action == rb.joint_action
            assert ra.utilities == rb.utilities
            assert ra.greedy_action == rb.greedy_action
        assert a.metrics["sum_rate_bps"] == b.metrics["sum_rate_bps"]
        assert np.array_equal(a.final_rates.dl_bps, b.final_rates.dl_bps)

    def test_different_seeds_differ(self):
        a = run(small_config(), "esn", seed=1)
        b = run(small_config(), "esn", seed=2)
        assert (a.metrics["sum_rate_bps"] != b.metrics["sum_rate_bps"]
                or [r.joint_action for r in a.records]
                != [r.joint_action for r in b.records])

    def test_converged_at_respects_window(self):
        result = run(toy_config(), "esn", seed=5)
        assert result.converged_at >= result.config.convergence_window

    def test_record_shapes(self):
        cfg = small_config(max_iterations=40, convergence_window=41)
        result = run(cfg, "esn", seed=2)
        assert result.converged_at is None
        assert len(result.records) == 40
        for record in result.records:
            assert len(record.joint_action) == cfg.n_bs
            assert len(record.utilities) == cfg.n_bs
            assert len(record.messages) == cfg.n_bs
            assert len(record.association) == cfg.n_users
            assert record.total_reward == pytest.approx(sum(record.utilities))

    def test_round_utilities_recompute_to_1e9(self):
        cfg = small_config(max_iterations=30, convergence_window=31)
        result = run(cfg, "esn", seed=4)
        inputs = prepare_run(cfg, "esn", 4)
        for record in result.records:
            played = [inputs.spaces[n].actions[record.joint_action[n]]
                      for n in range(cfg.n_bs)]
            again = game.resolved_utilities(played, inputs.capacities,
                                            eta=cfg.eta)
            np.testing.assert_allclose(record.utilities, again, atol=1e-9)

    def test_wifi_overload_is_flagged_but_valid(self):
        cfg = small_config(n_waps=2, wifi_rate_req_bps=1e9)
        result = run(cfg, "esn", seed=0)
        assert result.wifi_overloaded
        assert result.lte_fraction == 0.0
        assert result.converged_at is not None

    def test_wifi_share_reduces_lte_fraction(self):
        result = run(small_config(n_waps=2), "esn", seed=0)
        assert 0.0 < result.lte_fraction < 1.0
        assert not result.wifi_overloaded

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ValueError, match="unknown algorithm"):
            run(small_config(), "sarsa", seed=0)

    def test_coupled_variant_never_splits_users(self):
        cfg = desk_config(n_sbs=2, n_users=6, n_waps=0, action_set_size=8,
                          sbs_coverage_m=250.0, max_iterations=300,
                          convergence_window=25)
        for seed in range(3):
            result = run(cfg, "q_lteu_coupled", seed=seed)
            assert result.decoupled_users == 0
            for record in result.records:
                for dl, ul in record.association:
                    if dl >= 0 and ul >= 0:
                        assert dl == ul

    def test_single_association_every_round(self):
        cfg = small_config(max_iterations=25, convergence_window=26)
        result = run(cfg, "esn", seed=9)
        for record in result.records:
            assert np.all(record.user_rates.serving_dl < cfg.n_bs)
            assert np.all(record.user_rates.serving_ul < cfg.n_bs)

    def test_decoupling_evidence_on_reference_scenario(self):
        cfg = desk_config(n_users=16)
        result = run(cfg, "esn", seed=1, keep_records=False)
        assert result.converged_at is not None
        assert result.decoupled_users > 0


class TestMonteCarlo:
    def test_single_run_aggregates_match_the_run(self):
        cfg = small_config()
        mc = monte_carlo(cfg, "esn", n_runs=1, base_seed=42)
        seed = int(np.random.SeedSequence(42).generate_state(1)[0])
        single = run(cfg, "esn", seed, keep_records=False)
        assert mc.sum_rate_mean == pytest.approx(
            single.metrics["sum_rate_bps"], rel=1e-12)
        assert mc.median_rate_mean == pytest.approx(
            single.metrics["median_user_rate_bps"], rel=1e-12)
        assert mc.sum_rate_ci == (mc.sum_rate_mean, mc.sum_rate_mean)
        assert mc.pooled_cdf_bps == single.metrics["rate_cdf_bps"]

    def test_same_base_seed_reproduces_aggregates(self):
        cfg = small_config()
        a = monte_carlo(cfg, "q_lteu_decoupled", n_runs=3, base_seed=7)
        b = monte_carlo(cfg, "q_lteu_decoupled", n_runs=3, base_seed=7)
        assert a == b

    def test_ci_brackets_the_mean(self):
        mc = monte_carlo(small_config(), "esn", n_runs=4, base_seed=1)
        lo, hi = mc.sum_rate_ci
        assert lo <= mc.sum_rate_mean <= hi
        lo, hi = mc.median_rate_ci
        assert lo <= mc.median_rate_mean <= hi

    def test_pooled_cdf_is_sorted_and_complete(self):
        cfg = small_config()
        mc = monte_carlo(cfg, "esn", n_runs=3, base_seed=5)
        pooled = np.array(mc.pooled_cdf_bps)
        assert pooled.size == 3 * cfg.n_users
        assert np.all(np.diff(pooled) >= 0)

    def test_zero_runs_rejected(self):
        with pytest.raises(ValueError):
            monte_carlo(small_config(), "esn", n_runs=0)


class TestSweep:
    def test_unknown_axis_rejected(self):
        with pytest.raises(ValueError, match="unknown sweep axis"):
            sweep(small_config(), "bandwidth", [1, 2], ["esn"], n_runs=1)

    def test_wifi_demand_sweep_monotone_duty_cycle(self):
        cfg = small_config(n_waps=2, max_iterations=4, convergence_window=5)
        cells = sweep(cfg, "r_w", [1e6, 3e6, 6e6, 9e6], ["esn"], n_runs=1)
        fractions = [c.lte_fraction for c in cells]
        assert all(a >= b for a, b in zip(fractions, fractions[1:]))
        assert fractions[0] > fractions[-1]

    def test_wifi_load_sweep_monotone_duty_cycle(self):
        cfg = small_config(n_waps=2, max_iterations=4, convergence_window=5)
        cells = sweep(cfg, "n_wifi", [2, 4, 8], ["esn"], n_runs=1)
        fractions = [c.lte_fraction for c in cells]
        assert all(a >= b for a, b in zip(fractions, fractions[1:]))

    def test_cell_matches_direct_monte_carlo(self):
        cfg = small_config()
        cells = sweep(cfg, "n_users", [4], ["q_lteu_decoupled"], n_runs=2,
                      base_seed=3)
        direct = monte_carlo(cfg.with_overrides(n_users=4),
                             "q_lteu_decoupled", n_runs=2, base_seed=3)
        assert len(cells) == 1
        assert cells[0].sum_rate_mean == direct.sum_rate_mean
        assert cells[0].median_rate_mean == direct.median_rate_mean

    def test_cross_product_layout(self):
        cfg = small_config(max_iterations=3, convergence_window=4)
        cells = sweep(cfg, "n_users", [2, 4],
                      ["esn", "q_lteu_decoupled"], n_runs=1)
        assert [(c.value, c.algorithm) for c in cells] == [
            (2.0, "esn"), (2.0, "q_lteu_decoupled"),
            (4.0, "esn"), (4.0, "q_lteu_decoupled")]


class TestCsvOutput:
    def test_trace_layout_and_values(self, tmp_path):
        cfg = small_config(max_iterations=12, convergence_window=13)
        result = run(cfg, "esn", seed=6)
        path = tmp_path / "trace.csv"
        write_trace_csv(result, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["round", "bs", "action", "e_alpha", "r_hat_alpha",
                           "e_beta", "r_hat_beta", "utility"]
        assert len(rows) == 1 + 12 * cfg.n_bs
        first = rows[1]
        assert first[0] == "1" and first[1] == "0"
        assert float(first[7]) == pytest.approx(
            result.records[0].utilities[0], rel=1e-8)

    def test_trace_for_q_runs_uses_nan_beta_columns(self, tmp_path):
        cfg = small_config(max_iterations=5, convergence_window=6)
        result = run(cfg, "q_lteu_decoupled", seed=6)
        path = tmp_path / "trace.csv"
        write_trace_csv(result, path)
        rows = list(csv.reader(path.open()))
        assert math.isnan(float(rows[1][5]))
        assert math.isnan(float(rows[1][6]))

    def test_cdf_csv(self, tmp_path):
        path = tmp_path / "cdf.csv"
        write_cdf_csv([5.0, 1.0, 3.0, 2.0], path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["rate_bps", "cdf"]
        values = [float(r[0]) for r in rows[1:]]
        steps = [float(r[1]) for r in rows[1:]]
        assert values == [1.0, 2.0, 3.0, 5.0]
        assert steps == [0.25, 0.5, 0.75, 1.0]

    def test_sweep_csv_round_trip(self, tmp_path):
        cfg = small_config(n_waps=2, max_iterations=3, convergence_window=4)
        cells = sweep(cfg, "r_w", [1e6, 2e6], ["esn"], n_runs=1)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(cells, path)
        rows = list(csv.reader(path.open()))
        assert len(rows) == 1 + len(cells)
        assert rows[0][0] == "axis"
        assert rows[1][0] == "r_w"
        assert float(rows[1][1]) == 1e6

    def test_nine_significant_digits(self, tmp_path):
        path = tmp_path / "cdf.csv"
        write_cdf_csv([123456789.123456], path)
        rows = list(csv.reader(path.open()))
        assert rows[1][0] == "123456789"


def test_resolve_conflicts_reexport():
    assert harness.resolve_conflicts is game.resolve_conflicts


def test_run_result_is_frozen():
    result = run(toy_config(max_iterations=0), "esn", seed=0)
    assert isinstance(result, RunResult)
    with pytest.raises(AttributeError):
        result.seed = 1
