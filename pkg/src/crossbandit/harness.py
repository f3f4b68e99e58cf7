"""Experiment orchestration: configs, runs, traces, regret, sweeps.

The harness owns everything the learners must not see: the context
distribution used for exact diagnostics, the full loss tensor used for
hindsight comparators, and all seeding. Every run is a deterministic function
of (config, seed): replicate streams are split off the master seed, so
results do not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import GraphExp3Baseline, UniformBaseline, baseline_rates
from .environment import (
    AdversarialShiftOracle,
    AuctionOracle,
    LossOracle,
    StochasticGapOracle,
    TableOracle,
    gap_means,
    load_opposing_bids,
    reveal,
    sample_context,
    uniform_opposing_bids,
)
from .graph import FeedbackGraph, GraphSpec, build_graph
from .known import KnownDistLearner, default_learning_rate
from .simplex import check_simplex
from .unknown import (
    EpochLearner,
    ParamSchedule,
    nearest_compatible_horizon,
    schedule_params,
)

ALGOS = ("known", "unknown", "per_context_exp3g", "pooled_exp3g", "uniform")
ORACLE_KINDS = ("stochastic_gap", "adversarial_shift", "auction", "table")

WORKERS_ENV_VAR = "CROSSBANDIT_WORKERS"


@dataclass(frozen=True)
class OracleSpec:
    """Constructive description of the loss adversary."""

    kind: str
    base: float = 0.4
    gap: float = 0.2
    best_stride: int = 5
    low: float = 0.2
    high: float = 0.8
    table_path: str | None = None
    value_grid: tuple[float, ...] | None = None
    bid_grid: tuple[float, ...] | None = None
    bids_path: str | None = None

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}; expected one of {ORACLE_KINDS}")
        if self.kind == "table" and not self.table_path:
            raise ValueError("table oracle needs table_path")


def build_loss_oracle(spec: OracleSpec, T: int, M: int, K: int, seed: int) -> LossOracle:
    if spec.kind == "stochastic_gap":
        means = gap_means(M, K, base=spec.base, gap=spec.gap, best_stride=spec.best_stride)
        return StochasticGapOracle(means, num_rounds=T, seed=seed)
    if spec.kind == "adversarial_shift":
        return AdversarialShiftOracle(T, M, K, low=spec.low, high=spec.high)
    if spec.kind == "auction":
        values = np.asarray(spec.value_grid) if spec.value_grid else np.linspace(0.0, 1.0, M)
        bids = np.asarray(spec.bid_grid) if spec.bid_grid else np.linspace(0.0, 1.0, K)
        opposing = (load_opposing_bids(spec.bids_path) if spec.bids_path
                    else uniform_opposing_bids(T, seed))
        if len(opposing) < T:
            raise ValueError(f"opposing-bid sequence has {len(opposing)} rounds, need {T}")
        return AuctionOracle(values, bids, opposing)
    if spec.kind == "table":
        path = Path(spec.table_path)
        oracle = (TableOracle.from_npy(path) if path.suffix == ".npy"
                  else TableOracle.from_csv(path))
        if oracle.num_rounds < T or oracle.num_contexts != M or oracle.num_arms != K:
            raise ValueError(
                f"loss table shape ({oracle.num_rounds}, {oracle.num_contexts}, "
                f"{oracle.num_arms}) incompatible with T={T}, M={M}, K={K}"
            )
        return oracle
    raise ValueError(f"unhandled oracle kind {spec.kind!r}")


@dataclass
class RunConfig:
    """Complete description of one experiment; seeds are mandatory."""

    graph: GraphSpec
    oracle: OracleSpec
    num_contexts: int
    horizon: int
    algo: str
    seed: int
    nu: tuple[float, ...] | None = None  # None means uniform over contexts
    replicates: int = 1
    # parameters: "auto" derives them; "manual" uses the explicit fields
    param_mode: str = "auto"
    tuned_scale: float = 1.0
    eta: float | None = None
    gamma: float | None = None
    epoch_len: int | None = None
    iota: float | None = None
    eta_scale: float = 1.0
    gamma_ix: float | None = None
    # outputs
    trace_level: str = "light"  # light | full
    diagnostics: bool = False
    output_dir: str | None = None

    def context_distribution(self) -> np.ndarray:
        if self.nu is None:
            return np.full(self.num_contexts, 1.0 / self.num_contexts)
        nu = check_simplex(np.asarray(self.nu, dtype=np.float64))
        if len(nu) != self.num_contexts:
            raise ValueError(f"nu has {len(nu)} entries, expected {self.num_contexts}")
        return nu


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def resolve_schedule(config: RunConfig, alpha: int) -> ParamSchedule:
    """Epoch-learner parameters from the config, validated against the horizon."""
    T = config.horizon
    if config.param_mode == "auto":
        return schedule_params(_graph_arms(config.graph), T, alpha,
                               tuned_scale=config.tuned_scale, fit_horizon=True)
    if config.epoch_len is None or config.eta is None or config.gamma is None:
        raise ConfigError("manual mode needs epoch_len, eta and gamma")
    L = int(config.epoch_len)
    if T % L != 0 or T // L < 2:
        raise ConfigError(
            f"horizon {T} is not a multiple (>= 2) of epoch_len {L}; "
            f"nearest compatible horizon is {nearest_compatible_horizon(T, L)}"
        )
    iota = config.iota if config.iota is not None else 2.0 * math.log(8.0 * _graph_arms(config.graph) * T * T)
    return ParamSchedule(iota=float(iota), epoch_len=L, gamma=float(config.gamma),
                         eta=float(config.eta), tuned_scale=config.tuned_scale)


def _graph_arms(spec: GraphSpec) -> int:
    if spec.kind == "disjoint_cliques":
        return int(sum(spec.clique_sizes))
    if spec.kind == "custom":
        return build_graph(spec).num_arms
    return int(spec.num_arms)


def validate_config(config: RunConfig) -> FeedbackGraph:
    """Build the graph and fail fast on anything inconsistent."""
    if config.algo not in ALGOS:
        raise ConfigError(f"unknown algo {config.algo!r}; expected one of {ALGOS}")
    if config.param_mode not in ("auto", "manual"):
        raise ConfigError(f"param_mode must be auto or manual, got {config.param_mode!r}")
    if config.trace_level not in ("light", "full"):
        raise ConfigError(f"trace_level must be light or full, got {config.trace_level!r}")
    if config.horizon < 0:
        raise ConfigError("horizon must be nonnegative")
    if config.replicates < 1:
        raise ConfigError("need at least one replicate")
    if config.num_contexts < 1:
        raise ConfigError("need at least one context")
    graph = build_graph(config.graph, rng_seed=config.seed)
    if not graph.has_all_self_loops() or not graph.strongly_observable:
        raise ConfigError("graph must be strongly observable with a self-loop at every arm")
    config.context_distribution()
    if config.algo == "unknown" and config.horizon > 0:
        resolve_schedule(config, graph.alpha)
    return graph


def make_learner(config: RunConfig, graph: FeedbackGraph, nu: np.ndarray):
    K, M, T = graph.num_arms, config.num_contexts, config.horizon
    if config.algo == "known":
        eta = config.eta if (config.param_mode == "manual" and config.eta) else \
            default_learning_rate(K, max(T, 1), graph.alpha, scale=config.eta_scale)
        return KnownDistLearner(graph, nu, eta)
    if config.algo == "unknown":
        return EpochLearner(graph, M, resolve_schedule(config, graph.alpha))
    if config.algo in ("per_context_exp3g", "pooled_exp3g"):
        per_context = config.algo == "per_context_exp3g"
        states = M if per_context else 1
        eta_default, gix_default = baseline_rates(K, max(T, 1), graph.alpha, num_states=states)
        eta = config.eta if (config.param_mode == "manual" and config.eta) else eta_default
        gix = config.gamma_ix if config.gamma_ix is not None else gix_default
        return GraphExp3Baseline(graph, M, eta=eta, gamma_ix=gix, per_context=per_context)
    if config.algo == "uniform":
        return UniformBaseline(graph, M)
    raise ConfigError(f"unknown algo {config.algo!r}")


@dataclass
class EpochRecord:
    """Per-epoch state captured at the epoch's first round."""

    epoch: int
    start_t: int
    w_hat: np.ndarray
    s_cur: np.ndarray | None = None
    s_next: np.ndarray | None = None
    s_cur_digest: str = ""
    s_next_digest: str = ""
    diag: dict = field(default_factory=dict)


def _digest(arr: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(arr).tobytes(), digest_size=8).hexdigest()


@dataclass
class Trace:
    """Per-round record of one replicate; deterministic given (config, seed)."""

    algo: str
    seed: int
    replicate: int
    num_contexts: int
    num_arms: int
    contexts: np.ndarray
    arms: np.ndarray
    p_branch: np.ndarray
    realized_inst: np.ndarray
    expected_inst: np.ndarray
    loss_sums: np.ndarray
    q_rows: np.ndarray | None = None
    policy_hashes: list[str] | None = None
    loss_round: np.ndarray | None = None
    used_bits: np.ndarray | None = None
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.contexts)

    def write_ndjson(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            meta = {
                "kind": "meta", "algo": self.algo, "seed": self.seed,
                "replicate": self.replicate, "T": self.horizon,
                "M": self.num_contexts, "K": self.num_arms,
            }
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
            for t in range(self.horizon):
                rec = {
                    "kind": "round", "t": t, "c": int(self.contexts[t]),
                    "a": int(self.arms[t]), "qp": bool(self.p_branch[t]),
                }
                if self.q_rows is not None:
                    rec["q"] = [float(x) for x in self.q_rows[t]]
                if self.policy_hashes is not None:
                    rec["policy"] = self.policy_hashes[t]
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            for er in self.epochs:
                rec = {
                    "kind": "epoch", "e": er.epoch, "start_t": er.start_t,
                    "w_hat": [float(x) for x in er.w_hat],
                    "s_cur": er.s_cur_digest, "s_next": er.s_next_digest,
                }
                rec.update(er.diag)
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class RegretSummary:
    """Hindsight regret of one replicate against the best fixed policy."""

    expected: float
    realized: float
    per_context_expected: np.ndarray
    best_policy: np.ndarray
    snapshot_branch_fraction: float


def best_policy_from_sums(loss_sums: np.ndarray) -> np.ndarray:
    """Per-context argmin of summed losses; ties to the lowest arm index;
    contexts never drawn (all-zero rows) get arm 0."""
    return np.argmin(loss_sums, axis=1)


def best_policy(oracle: LossOracle, contexts: np.ndarray, T: int | None = None) -> np.ndarray:
    """Best fixed context-to-arm map in hindsight for a realized context run."""
    contexts = np.asarray(contexts, dtype=np.int64)
    if T is not None:
        contexts = contexts[:T]
    sums = np.zeros((oracle.num_contexts, oracle.num_arms))
    for t, c in enumerate(contexts):
        sums[c] += oracle.loss_slice(t)[c]
    return best_policy_from_sums(sums)


def summarize_regret(trace: Trace) -> RegretSummary:
    M = trace.num_contexts
    pi_star = best_policy_from_sums(trace.loss_sums)
    best_per_context = trace.loss_sums[np.arange(M), pi_star]
    realized_pc = np.bincount(trace.contexts, weights=trace.realized_inst, minlength=M)
    expected_pc = np.bincount(trace.contexts, weights=trace.expected_inst, minlength=M)
    per_context = expected_pc - best_per_context
    frac = float(1.0 - trace.p_branch.mean()) if trace.horizon else 0.0
    return RegretSummary(
        expected=float(per_context.sum()),
        realized=float((realized_pc - best_per_context).sum()),
        per_context_expected=per_context,
        best_policy=pi_star,
        snapshot_branch_fraction=frac,
    )


@dataclass
class RunResult:
    config: RunConfig
    graph: FeedbackGraph
    summaries: list[RegretSummary]
    traces: list[Trace]

    def _stat(self, attr: str) -> tuple[float, float]:
        vals = np.array([getattr(s, attr) for s in self.summaries])
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        return float(vals.mean()), std

    @property
    def mean_expected(self) -> float:
        return self._stat("expected")[0]

    @property
    def std_expected(self) -> float:
        return self._stat("expected")[1]

    @property
    def stderr_expected(self) -> float:
        return self.std_expected / math.sqrt(len(self.summaries))

    @property
    def mean_realized(self) -> float:
        return self._stat("realized")[0]

    @property
    def std_realized(self) -> float:
        return self._stat("realized")[1]


def _replicate_seeds(master_seed: int, replicate: int) -> tuple[int, np.random.Generator]:
    oracle_seed = int(np.random.SeedSequence([master_seed, replicate, 0]).generate_state(1)[0])
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, replicate, 1]))
    return oracle_seed, rng


def run_replicate(config: RunConfig, graph: FeedbackGraph, replicate: int) -> Trace:
    """Execute one replicate's full interaction loop."""
    nu = config.context_distribution()
    T, M, K = config.horizon, config.num_contexts, graph.num_arms
    full = config.trace_level == "full"
    diag = config.diagnostics
    trace = Trace(
        algo=config.algo, seed=config.seed, replicate=replicate,
        num_contexts=M, num_arms=K,
        contexts=np.zeros(T, dtype=np.int32),
        arms=np.zeros(T, dtype=np.int32),
        p_branch=np.zeros(T, dtype=bool),
        realized_inst=np.zeros(T),
        expected_inst=np.zeros(T),
        loss_sums=np.zeros((M, K)),
        q_rows=np.zeros((T, K)) if full else None,
        policy_hashes=[] if full else None,
        loss_round=np.zeros(T, dtype=bool) if diag else None,
        used_bits=np.zeros(T, dtype=np.uint64) if diag else None,
    )
    if T == 0:
        return trace

    oracle_seed, rng = _replicate_seeds(config.seed, replicate)
    oracle = build_loss_oracle(config.oracle, T, M, K, oracle_seed)
    learner = make_learner(config, graph, nu)
    is_epochal = isinstance(learner, EpochLearner)
    last_pair_seen = None
    arm_bits = (np.uint64(1) << np.arange(K, dtype=np.uint64)) if diag else None

    for t in range(T):
        if is_epochal and learner.pos == 0:
            trace.epochs.append(EpochRecord(
                epoch=learner.epoch, start_t=t, w_hat=learner.w_hat.copy(),
                s_cur=learner.s_cur.copy() if diag else None,
                s_next=learner.s_next.copy() if diag else None,
                s_cur_digest=_digest(learner.s_cur),
                s_next_digest=_digest(learner.s_next),
            ))
        c = sample_context(nu, rng)
        a = learner.act(t, c, rng)
        q = learner.last_play
        row = oracle.loss_slice(t)[c]
        trace.contexts[t] = c
        trace.arms[t] = a
        trace.p_branch[t] = learner.last_branch_p
        trace.realized_inst[t] = row[a]
        trace.expected_inst[t] = q @ row
        trace.loss_sums[c] += row
        if full:
            trace.q_rows[t] = q
            trace.policy_hashes.append(_digest(learner.distributions()))
        rev = reveal(oracle, graph, t, a)
        learner.update(rev, rng)
        if diag and is_epochal and learner.last_pair is not None \
                and learner.last_pair is not last_pair_seen:
            pr = learner.last_pair
            last_pair_seen = pr
            t_loss = pr.t_first + pr.loss_offset
            trace.loss_round[t_loss] = True
            trace.used_bits[t_loss] = arm_bits[pr.used].sum()
    return trace


def _replicate_job(args):
    config, replicate = args
    graph = build_graph(config.graph, rng_seed=config.seed)
    trace = run_replicate(config, graph, replicate)
    return trace, summarize_regret(trace)


def run(config: RunConfig, keep_traces: bool = True) -> RunResult:
    """Run all replicates; deterministic merge by replicate index."""
    graph = validate_config(config)
    workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    jobs = [(config, r) for r in range(config.replicates)]
    if workers > 1 and config.replicates > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    traces = [tr for tr, _ in results]
    summaries = [s for _, s in results]
    if config.diagnostics and config.algo == "unknown":
        from .diagnostics import attach_epoch_diagnostics
        for tr in traces:
            attach_epoch_diagnostics(tr, config, graph)
    return RunResult(config=config, graph=graph, summaries=summaries,
                     traces=traces if keep_traces else [])


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    n: int


def fit_scaling(points) -> ScalingFit:
    """Ordinary least squares of log(y) on log(x)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points to fit a slope, got {len(pts)}")
    for x, y in pts:
        if x <= 0 or y <= 0:
            raise ValueError(f"nonpositive point ({x}, {y}) is degenerate for a log-log fit")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    xc = lx - lx.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ ly) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (slope * lx + intercept)
    dof = len(pts) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return ScalingFit(slope=slope, intercept=intercept, stderr=stderr, n=len(pts))


@dataclass
class SweepRow:
    value: float
    mean_expected: float
    stderr_expected: float
    mean_realized: float
    replicates: int


@dataclass
class SweepResult:
    axis: str
    rows: list[SweepRow]
    fit: ScalingFit | None
    ratios: list[tuple[float, float]] | None  # (value, regret / regret at first value)


def config_for_axis(config: RunConfig, axis: str, value: int) -> RunConfig:
    if axis == "T":
        return replace(config, horizon=int(value))
    if axis == "M":
        return replace(config, num_contexts=int(value), nu=None)
    if axis == "alpha":
        if config.graph.kind != "disjoint_cliques":
            raise ConfigError("alpha sweeps need a disjoint_cliques graph")
        K = int(sum(config.graph.clique_sizes))
        a = int(value)
        if K % a != 0:
            raise ConfigError(f"alpha={a} does not divide K={K} into equal cliques")
        spec = GraphSpec(kind="disjoint_cliques", clique_sizes=(K // a,) * a)
        return replace(config, graph=spec)
    raise ConfigError(f"unknown sweep axis {axis!r}; expected T, M or alpha")


def run_sweep(config: RunConfig, axis: str, values) -> SweepResult:
    rows = []
    for v in values:
        res = run(config_for_axis(config, axis, v), keep_traces=False)
        rows.append(SweepRow(value=float(v), mean_expected=res.mean_expected,
                             stderr_expected=res.stderr_expected,
                             mean_realized=res.mean_realized,
                             replicates=config.replicates))
    fit = None
    ratios = None
    if axis in ("T", "alpha"):
        fit = fit_scaling([(r.value, r.mean_expected) for r in rows])
    if axis == "M":
        base = rows[0].mean_expected
        ratios = [(r.value, r.mean_expected / base if base else math.inf) for r in rows]
    return SweepResult(axis=axis, rows=rows, fit=fit, ratios=ratios)


def regret_curves(trace: Trace, oracle: LossOracle) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative expected-form and realized regret curves against the
    hindsight best policy (second oracle pass; oracles are replayable)."""
    pi_star = best_policy_from_sums(trace.loss_sums)
    T = trace.horizon
    best_inst = np.zeros(T)
    for t in range(T):
        c = int(trace.contexts[t])
        best_inst[t] = oracle.loss_slice(t)[c, pi_star[c]]
    return (np.cumsum(trace.expected_inst - best_inst),
            np.cumsum(trace.realized_inst - best_inst))


def write_report_json(result: RunResult, path: str | Path) -> None:
    doc = {
        "algo": result.config.algo,
        "seed": result.config.seed,
        "T": result.config.horizon,
        "M": result.config.num_contexts,
        "K": result.graph.num_arms,
        "alpha": result.graph.alpha,
        "replicates": len(result.summaries),
        "mean_expected_regret": result.mean_expected,
        "std_expected_regret": result.std_expected,
        "mean_realized_regret": result.mean_realized,
        "std_realized_regret": result.std_realized,
        "per_replicate": [
            {"expected": s.expected, "realized": s.realized,
             "snapshot_branch_fraction": s.snapshot_branch_fraction}
            for s in result.summaries
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_curves_csv(result: RunResult, path: str | Path) -> None:
    """Long format: algo, replicate, t, cum_regret_expected, cum_regret_realized."""
    with open(path, "w") as fh:
        fh.write("algo,replicate,t,cum_regret_expected,cum_regret_realized\n")
        for trace in result.traces:
            oracle_seed, _ = _replicate_seeds(result.config.seed, trace.replicate)
            oracle = build_loss_oracle(result.config.oracle, trace.horizon,
                                       trace.num_contexts, trace.num_arms, oracle_seed)
            exp_curve, real_curve = regret_curves(trace, oracle)
            for t in range(trace.horizon):
                fh.write(f"{result.config.algo},{trace.replicate},{t},"
                         f"{float(exp_curve[t])!r},{float(real_curve[t])!r}\n")


def write_sweep_csv(sweep: SweepResult, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("axis,value,mean_expected,stderr_expected,mean_realized,replicates\n")
        for r in sweep.rows:
            fh.write(f"{sweep.axis},{r.value!r},{r.mean_expected!r},"
                     f"{r.stderr_expected!r},{r.mean_realized!r},{r.replicates}\n")
