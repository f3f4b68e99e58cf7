import json
import math

import numpy as np
import pytest

from crossbandit.environment import TableOracle
from crossbandit.graph import GraphSpec
from crossbandit.harness import (
    ConfigError,
    OracleSpec,
    RunConfig,
    best_policy,
    best_policy_from_sums,
    config_for_axis,
    fit_scaling,
    regret_curves,
    resolve_schedule,
    run,
    run_sweep,
    summarize_regret,
    validate_config,
    write_curves_csv,
    write_report_json,
    write_sweep_csv,
)

GAP = OracleSpec(kind="stochastic_gap", gap=0.2, base=0.4, best_stride=3)


def small_config(**kw):
    base = dict(
        graph=GraphSpec(kind="disjoint_cliques", clique_sizes=(2, 2)),
        oracle=GAP, num_contexts=4, horizon=256, algo="known", seed=11,
        replicates=2,
    )
    base.update(kw)
    return RunConfig(**base)


class TestBestPolicy:
    def test_single_context_argmin(self):
        sums = np.array([[3.0, 1.0, 2.0]])
        assert best_policy_from_sums(sums).tolist() == [1]

    def test_ties_break_low(self):
        sums = np.full((3, 4), 2.0)
        assert best_policy_from_sums(sums).tolist() == [0, 0, 0]

    def test_never_drawn_context_gets_arm_zero(self):
        sums = np.array([[0.0, 0.0], [0.3, 0.1]])
        assert best_policy_from_sums(sums).tolist() == [0, 1]

    def test_matches_exhaustive_argmin_on_table(self):
        rng = np.random.default_rng(0)
        tensor = rng.random((5, 3, 4))
        oracle = TableOracle(tensor)
        contexts = rng.integers(0, 3, size=5)
        pi = best_policy(oracle, contexts)
        sums = np.zeros((3, 4))
        for t, c in enumerate(contexts):
            sums[c] += tensor[t, c]
        for c in range(3):
            best = min(range(4), key=lambda a: (sums[c, a], a))
            assert pi[c] == best


class TestRun:
    def test_zero_horizon(self):
        res = run(small_config(horizon=0, replicates=1))
        assert res.summaries[0].expected == 0.0
        assert res.traces[0].horizon == 0

    def test_epoch_count_matches_horizon(self):
        cfg = small_config(algo="unknown", horizon=256, replicates=1,
                           param_mode="manual", epoch_len=32, eta=0.01,
                           gamma=0.05, iota=6.0)
        res = run(cfg)
        assert len(res.traces[0].epochs) == 256 // 32

    def test_uniform_regret_matches_closed_form(self):
        # uniform play on a gap instance: per-round regret = gap * (K-1)/K
        cfg = small_config(algo="uniform", horizon=512, replicates=20,
                          oracle=OracleSpec(kind="stochastic_gap", gap=0.2,
                                            base=0.4, best_stride=1))
        res = run(cfg, keep_traces=False)
        expected = 512 * 0.2 * 3 / 4
        # hindsight comparator beats the fixed best arm slightly; allow noise both ways
        se = res.std_expected / math.sqrt(len(res.summaries))
        assert abs(res.mean_expected - expected) <= 3 * se + 0.05 * expected

    def test_expected_and_realized_agree_on_average(self):
        cfg = small_config(horizon=512, replicates=20)
        res = run(cfg, keep_traces=False)
        diffs = [s.expected - s.realized for s in res.summaries]
        se = np.std(diffs, ddof=1) / math.sqrt(len(diffs))
        assert abs(np.mean(diffs)) <= 3 * se + 1e-9

    def test_expected_form_has_smaller_variance(self):
        cfg = small_config(horizon=512, replicates=20)
        res = run(cfg, keep_traces=False)
        exp = [s.expected for s in res.summaries]
        real = [s.realized for s in res.summaries]
        assert np.var(exp) < np.var(real)

    def test_per_context_decomposition_sums_to_total(self):
        res = run(small_config(replicates=1))
        s = res.summaries[0]
        assert s.expected == pytest.approx(float(s.per_context_expected.sum()), abs=1e-9)

    def test_trace_is_deterministic(self, tmp_path):
        cfg = small_config(trace_level="full", replicates=1)
        p1, p2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        run(cfg).traces[0].write_ndjson(p1)
        run(cfg).traces[0].write_ndjson(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seeds_differ(self):
        r1 = run(small_config(seed=1, replicates=1))
        r2 = run(small_config(seed=2, replicates=1))
        assert not np.array_equal(r1.traces[0].arms, r2.traces[0].arms)

    def test_snapshot_branch_audit(self):
        # every snapshot-branch round has some arm below half its snapshot mass
        cfg = small_config(algo="unknown", horizon=512, replicates=1,
                          param_mode="manual", epoch_len=32, eta=0.05,
                          gamma=0.02, iota=6.0, trace_level="full",
                          diagnostics=True)
        res = run(cfg)
        tr = res.traces[0]
        fallback = np.flatnonzero(~tr.p_branch)
        fallback = fallback[fallback >= 32]  # skip the uniform first epoch
        assert len(fallback) > 0  # aggressive eta forces some fallbacks
        # reconstruct the check from the trace's full play distributions:
        # on fallback rounds the played row equals the epoch snapshot
        for t in fallback[:20]:
            er = [e for e in tr.epochs if e.start_t <= t][-1]
            c = tr.contexts[t]
            assert np.allclose(tr.q_rows[t], er.s_cur[c])


class TestValidation:
    def test_manual_epoch_mismatch_suggests_horizon(self):
        cfg = small_config(algo="unknown", horizon=1000, param_mode="manual",
                           epoch_len=504, eta=0.01, gamma=0.05)
        with pytest.raises(ConfigError, match="1008"):
            validate_config(cfg)

    def test_auto_mode_snaps_epoch_length(self):
        cfg = small_config(algo="unknown", horizon=4096, param_mode="auto",
                           tuned_scale=0.02,
                           graph=GraphSpec(kind="disjoint_cliques",
                                           clique_sizes=(4, 4, 4, 4)),
                           num_contexts=8)
        sched = resolve_schedule(cfg, alpha=4)
        assert 4096 % sched.epoch_len == 0

    def test_rejects_unknown_algo(self):
        with pytest.raises(ConfigError, match="algo"):
            validate_config(small_config(algo="bogus"))

    def test_rejects_bad_nu_length(self):
        with pytest.raises(ValueError):
            validate_config(small_config(nu=(0.5, 0.5)))

    def test_graph_must_have_self_loops(self, tmp_path):
        path = tmp_path / "adj.txt"
        path.write_text("1 2\n0 2\n0 1\n")  # loopless complete: strongly observable
        cfg = small_config(graph=GraphSpec(kind="custom", path=str(path)))
        with pytest.raises(ValueError):
            validate_config(cfg)


class TestScalingFit:
    def test_exact_sqrt_law(self):
        pts = [(x, 7 * math.sqrt(x)) for x in (10, 100, 1000, 10000)]
        fit = fit_scaling(pts)
        assert fit.slope == pytest.approx(0.5, abs=1e-9)
        assert fit.stderr == pytest.approx(0.0, abs=1e-9)

    def test_linear_law(self):
        pts = [(x, 3.0 * x) for x in (2, 4, 8, 16)]
        assert fit_scaling(pts).slope == pytest.approx(1.0, abs=1e-9)

    def test_noisy_sqrt_within_window(self):
        rng = np.random.default_rng(0)
        xs = np.logspace(1, 4, 8)
        pts = [(x, math.sqrt(x) * (1 + 0.05 * rng.standard_normal())) for x in xs]
        assert 0.4 <= fit_scaling(pts).slope <= 0.6

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(ValueError, match="3 points"):
            fit_scaling([(1, 1), (2, 2)])
        with pytest.raises(ValueError, match="nonpositive"):
            fit_scaling([(1, 1.0), (2, 0.0), (3, 2.0)])


class TestSweep:
    def test_horizon_sweep_shape(self):
        cfg = small_config(horizon=64, replicates=2)
        sweep = run_sweep(cfg, "T", [64, 128, 256])
        assert len(sweep.rows) == 3
        assert sweep.fit is not None
        assert sweep.ratios is None

    def test_context_sweep_ratios(self):
        cfg = small_config(replicates=2, horizon=128)
        sweep = run_sweep(cfg, "M", [2, 8])
        assert sweep.ratios is not None
        assert sweep.ratios[0][1] == pytest.approx(1.0)

    def test_alpha_sweep_rebuilds_cliques(self):
        cfg = small_config(graph=GraphSpec(kind="disjoint_cliques",
                                           clique_sizes=(4, 4, 4, 4)),
                           horizon=128, replicates=1)
        derived = config_for_axis(cfg, "alpha", 8)
        assert derived.graph.clique_sizes == (2,) * 8

    def test_alpha_requires_divisibility(self):
        cfg = small_config(graph=GraphSpec(kind="disjoint_cliques",
                                           clique_sizes=(4, 4, 4, 4)))
        with pytest.raises(ConfigError, match="divide"):
            config_for_axis(cfg, "alpha", 3)

    def test_alpha_requires_cliques(self):
        cfg = small_config(graph=GraphSpec(kind="self_loops_only", num_arms=8))
        with pytest.raises(ConfigError, match="cliques"):
            config_for_axis(cfg, "alpha", 2)


class TestOutputs:
    def test_curves_end_at_summary_regret(self, tmp_path):
        cfg = small_config(replicates=1, horizon=128)
        res = run(cfg)
        trace = res.traces[0]
        from crossbandit.harness import _replicate_seeds, build_loss_oracle
        oracle_seed, _ = _replicate_seeds(cfg.seed, 0)
        oracle = build_loss_oracle(cfg.oracle, 128, 4, res.graph.num_arms, oracle_seed)
        exp_curve, real_curve = regret_curves(trace, oracle)
        s = summarize_regret(trace)
        assert exp_curve[-1] == pytest.approx(s.expected, abs=1e-9)
        assert real_curve[-1] == pytest.approx(s.realized, abs=1e-9)

    def test_csv_and_report_writers(self, tmp_path):
        cfg = small_config(replicates=2, horizon=64)
        res = run(cfg)
        write_report_json(res, tmp_path / "report.json")
        write_curves_csv(res, tmp_path / "curves.csv")
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["replicates"] == 2
        lines = (tmp_path / "curves.csv").read_text().splitlines()
        assert lines[0] == "algo,replicate,t,cum_regret_expected,cum_regret_realized"
        assert len(lines) == 1 + 2 * 64

    def test_sweep_csv(self, tmp_path):
        cfg = small_config(horizon=64, replicates=2)
        sweep = run_sweep(cfg, "T", [64, 128, 256])
        write_sweep_csv(sweep, tmp_path / "sweep.csv")
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 4
