"""Experiment harness: scenario configs, seed sweeps, result rows, exports.

A scenario JSON file describes one experiment; the two study runners turn it
into flat per-flow result rows with a fixed column set so every figure can be
re-derived from raw exports. Runs are pure functions of (scenario, seeds):
rerunning a study yields byte-identical exports, and rows are sorted into a
canonical order so concurrency can never change output bytes.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath

import numpy as np

from .agent import (
    AgentConfig,
    DQNAgent,
    GreedyRoutingPolicy,
    NormalizationBounds,
    RewardConfig,
    UtilityWeights,
    train_agent,
    utility,
)
from .baseline import random_policy, spr_policy
from .federated import FLConfig, partition_traffic, run_federated_training
from .netsim import (
    Flow,
    SaturationError,
    TrafficPattern,
    controller_model,
    generate_traffic,
    inject_uniform_loss,
    run_slotted,
)
from .neural import ModelWeights
from .topology import BUILTIN_NAMES, Topology, builtin_topology, load_topology

SCENARIO_KINDS = ("control", "routing")
POLICY_NAMES = ("spr-hops", "spr-delay", "random", "drl", "fdrl")


@dataclass(frozen=True)
class Scenario:
    """One experiment: a topology, traffic, the sweep axes, and training budgets.

    ``kind`` selects the study: ``control`` sweeps controller counts with a
    fixed policy and emits repeated delay measurements per endpoint pair;
    ``routing`` trains the learned policies and compares every named policy
    on one held-out flow set per seed.
    """

    name: str
    kind: str
    topology: str = "paper_fig3"
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    pairs: tuple[tuple[str, str], ...] | None = None
    demand_mbps: float = 1.0
    flows_per_slot: int = 1
    # control study axes
    controller_counts: tuple[int, ...] = (1, 2, 4)
    service_rate_rps: float = 10.0
    offered_load_rps: float = 5.0
    delay_samples: int = 250
    # routing study axes
    policies: tuple[str, ...] = ("spr-hops", "drl", "fdrl")
    loss_injection: float = 0.0
    training_episodes: int = 3000
    training_pool: int = 200
    eval_flows: int = 60
    fl_rounds: int = 10
    fl_episodes_per_round: int = 300
    fl_node_count: int = 2
    # agent knobs that materially change study cost/quality
    hidden_sizes: tuple[int, ...] = (64, 64)
    masked_training: bool = False
    invalid_mode: str = "continue"
    max_steps: int = 32
    epsilon_decay_steps: int = 5000
    learning_rate: float = 1e-3
    utility_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    invalid_penalty: float = -1.0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"scenario kind must be one of {SCENARIO_KINDS}")
        if not self.name:
            raise ValueError("scenario needs a name")
        if not self.seeds:
            raise ValueError("scenario needs at least one seed")
        if not self.policies:
            raise ValueError("scenario needs at least one policy")
        for p in self.policies:
            if p not in POLICY_NAMES:
                raise ValueError(f"unknown policy {p!r}, choose from {POLICY_NAMES}")
        if not 0.0 <= self.loss_injection < 1.0:
            raise ValueError("loss_injection must be in [0, 1)")
        if self.invalid_mode not in ("terminate", "continue"):
            raise ValueError("invalid_mode must be 'terminate' or 'continue'")
        for name in (
            "delay_samples", "training_episodes", "training_pool", "eval_flows",
            "fl_rounds", "fl_episodes_per_round", "fl_node_count", "flows_per_slot",
            "max_steps",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def reward_config(self) -> RewardConfig:
        return RewardConfig(
            weights=UtilityWeights(*self.utility_weights),
            invalid_penalty=self.invalid_penalty,
        )

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            hidden_sizes=self.hidden_sizes,
            masked_training=self.masked_training,
            invalid_mode=self.invalid_mode,
            max_steps=self.max_steps,
            epsilon_decay_steps=self.epsilon_decay_steps,
            learning_rate=self.learning_rate,
        )


def scenario_from_dict(d: dict) -> Scenario:
    """Build a Scenario from parsed JSON, rejecting unknown keys loudly."""
    known = {f.name for f in fields(Scenario)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    kw = dict(d)
    for name in ("seeds", "controller_counts", "policies", "hidden_sizes", "utility_weights"):
        if name in kw:
            kw[name] = tuple(kw[name])
    if kw.get("pairs") is not None:
        kw["pairs"] = tuple((a, b) for a, b in kw["pairs"])
    return Scenario(**kw)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(d, dict):
        raise ValueError(f"{path}: scenario file must hold a JSON object")
    try:
        return scenario_from_dict(d)
    except (ValueError, TypeError) as e:
        raise ValueError(f"{path}: {e}") from None


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(sc), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class ResultRecord:
    """One routed (or rejected) flow under one policy, seed and controller count.

    A rejected flow keeps loss_ratio 1, zero throughput and zero hops; its
    delay is 0 (nothing was delivered) and its utility is the episode penalty.
    Delay aggregations should therefore run over routed rows only.
    """

    scenario: str
    seed: int
    policy: str
    controller_count: int
    flow_id: int
    src: int
    dst: int
    delay_ms: float
    setup_delay_ms: float
    throughput_mbps: float
    throughput_ratio: float
    loss_ratio: float
    hops: int
    utility: float


CSV_COLUMNS = tuple(f.name for f in fields(ResultRecord))
_INT_COLUMNS = {"seed", "controller_count", "flow_id", "src", "dst", "hops"}
_ROW_ORDER = ("scenario", "policy", "seed", "controller_count", "flow_id")


def resolve_topology(ref: str) -> Topology:
    """A builtin topology name, or a path to a topology file."""
    if ref in BUILTIN_NAMES:
        return builtin_topology(ref)
    p = FsPath(ref)
    if not p.exists():
        raise ValueError(f"topology {ref!r} is neither builtin nor an existing file")
    return load_topology(p)


def _substream(seed: int, tag: int) -> int:
    """Independent integer seed for one purpose within one scenario seed."""
    return int(np.random.default_rng([seed, tag]).integers(2**32))


_TAG_TRAIN_TRAFFIC = 1
_TAG_EVAL_TRAFFIC = 2
_TAG_DRL_AGENT = 3
_TAG_FDRL = 4
_TAG_SIM = 5


def _record(sc, seed, policy_name, controller_count, rec, rc, norms) -> ResultRecord:
    m = rec.metrics
    if rec.rejected:
        row_utility = rc.invalid_penalty
    else:
        row_utility = utility(m, rc.weights, norms)
    return ResultRecord(
        scenario=sc.name,
        seed=seed,
        policy=policy_name,
        controller_count=controller_count,
        flow_id=rec.flow.id,
        src=rec.flow.src,
        dst=rec.flow.dst,
        delay_ms=m.delay_ms,
        setup_delay_ms=rec.setup_delay_ms,
        throughput_mbps=m.throughput_mbps,
        throughput_ratio=m.throughput_mbps / rec.flow.demand_mbps,
        loss_ratio=m.loss_ratio,
        hops=m.hops,
        utility=row_utility,
    )


def _sorted_rows(rows: list[ResultRecord]) -> list[ResultRecord]:
    return sorted(rows, key=lambda r: tuple(getattr(r, c) for c in _ROW_ORDER))


def _endpoint_pairs(sc: Scenario, t: Topology) -> list[tuple[int, int]]:
    if sc.pairs is not None:
        return [(t.node_by_label(a), t.node_by_label(b)) for a, b in sc.pairs]
    eps = t.traffic_endpoints()
    return [(a, b) for i, a in enumerate(eps) for b in eps[i + 1 :]]


def _make_policy(name: str, t: Topology, trained: dict[str, ModelWeights], norms):
    if name in ("spr-hops", "spr-delay"):
        return spr_policy(name.split("-")[1])
    if name == "random":
        return random_policy(0)
    if name in ("drl", "fdrl"):
        return GreedyRoutingPolicy(t, trained[name], norms, name=name)
    raise ValueError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# study 1: controller count sweep


def run_distributed_control_study(sc: Scenario, jobs: int = 1) -> list[ResultRecord]:
    """Measure per-pair delays for each controller count at fixed offered load.

    Each (seed, controller count, pair) cell routes ``delay_samples`` flows
    with the scenario's single policy, one flow per slot, so the emitted
    delays isolate the control-plane term. Rows per run:
    seeds x controller_counts x pairs x delay_samples.
    """
    if sc.kind != "control":
        raise ValueError(f"scenario {sc.name!r} has kind {sc.kind!r}, not 'control'")
    if len(sc.policies) != 1:
        raise ValueError("the control study sweeps controller counts with one policy")
    t = resolve_topology(sc.topology)
    if sc.loss_injection:
        t = inject_uniform_loss(t, sc.loss_injection)
    rc = sc.reward_config()
    norms = NormalizationBounds.for_topology(t)
    pairs = _endpoint_pairs(sc, t)
    policy_name = sc.policies[0]

    def run_cell(seed: int) -> list[ResultRecord]:
        rows: list[ResultRecord] = []
        for c in sc.controller_counts:
            try:
                cm = controller_model(t, c, sc.service_rate_rps)
                for src, dst in pairs:
                    flows = [
                        Flow(i, src, dst, i, demand_mbps=sc.demand_mbps)
                        for i in range(sc.delay_samples)
                    ]
                    policy = _make_policy(policy_name, t, {}, norms)
                    recs = run_slotted(
                        t, flows, policy, cm, _substream(seed, _TAG_SIM),
                        offered_load_rps=sc.offered_load_rps,
                    )
                    rows += [_record(sc, seed, policy_name, c, r, rc, norms) for r in recs]
            except SaturationError as e:
                raise SaturationError(
                    f"scenario {sc.name!r}, {c} controller(s): {e}"
                ) from None
        return rows

    return _sorted_rows(_run_cells(run_cell, sc.seeds, jobs))


# ---------------------------------------------------------------------------
# study 2: routing policy comparison


@dataclass(frozen=True)
class RoutingStudyResult:
    records: list[ResultRecord]
    checkpoints: dict[tuple[str, int], ModelWeights] = field(default_factory=dict)


def run_intelligent_routing_study(sc: Scenario, jobs: int = 1) -> RoutingStudyResult:
    """Train the learned policies per seed, then compare all policies.

    Per seed: DRL trains one agent on the full training pool for
    ``training_episodes``; FDRL splits the pool across ``fl_node_count``
    learning nodes by source domain and runs the round protocol. Every
    policy then routes the same held-out flow set. Rejections become rows
    with loss 1 rather than disappearing.
    """
    if sc.kind != "routing":
        raise ValueError(f"scenario {sc.name!r} has kind {sc.kind!r}, not 'routing'")
    t = resolve_topology(sc.topology)
    if sc.loss_injection:
        t = inject_uniform_loss(t, sc.loss_injection)
    rc = sc.reward_config()
    norms = NormalizationBounds.for_topology(t)
    pattern = TrafficPattern(
        kind="fixed_pairs" if sc.pairs is not None else "uniform",
        pairs=tuple(_endpoint_pairs(sc, t)) if sc.pairs is not None else None,
        flows_per_slot=sc.flows_per_slot,
        demand_mbps=sc.demand_mbps,
    )
    agent_cfg = sc.agent_config()

    def run_cell(seed: int) -> tuple[list[ResultRecord], dict]:
        pool = generate_traffic(
            t, pattern, _substream(seed, _TAG_TRAIN_TRAFFIC), sc.training_pool
        )
        eval_flows = generate_traffic(
            t, pattern, _substream(seed, _TAG_EVAL_TRAFFIC), sc.eval_flows
        )
        trained: dict[str, ModelWeights] = {}
        if "drl" in sc.policies:
            agent = DQNAgent(t, agent_cfg, rc, seed=_substream(seed, _TAG_DRL_AGENT))
            train_agent(agent, pool, sc.training_episodes)
            trained["drl"] = agent.weights
        if "fdrl" in sc.policies:
            node_flows = partition_traffic(pool, t, sc.fl_node_count)
            fl = FLConfig(sc.fl_rounds, sc.fl_episodes_per_round, sc.fl_node_count)
            result = run_federated_training(
                t, node_flows, fl, agent_cfg, rc, seed=_substream(seed, _TAG_FDRL)
            )
            trained["fdrl"] = result.final_weights
        rows: list[ResultRecord] = []
        checkpoints = {}
        for name in sc.policies:
            policy = _make_policy(name, t, trained, norms)
            count = sc.fl_node_count if name == "fdrl" else 1
            recs = run_slotted(t, eval_flows, policy, None, _substream(seed, _TAG_SIM))
            rows += [_record(sc, seed, name, count, r, rc, norms) for r in recs]
        for name, w in trained.items():
            checkpoints[(name, seed)] = w
        return rows, checkpoints

    results = _run_cells(run_cell, sc.seeds, jobs, unpack=False)
    rows: list[ResultRecord] = []
    checkpoints: dict[tuple[str, int], ModelWeights] = {}
    for cell_rows, cell_ckpts in results:
        rows += cell_rows
        checkpoints.update(cell_ckpts)
    return RoutingStudyResult(_sorted_rows(rows), checkpoints)


def _run_cells(run_cell, seeds, jobs, unpack=True):
    """Map seeds to cells, optionally threaded; order normalized by the caller."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, seeds))
    else:
        results = [run_cell(s) for s in seeds]
    if unpack:
        return [row for cell in results for row in cell]
    return results


# ---------------------------------------------------------------------------
# export


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_results(rows: list[ResultRecord], path, format: str = "csv") -> None:
    """Write rows with full float round-trip precision and a fixed column order."""
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow([_format_cell(getattr(row, c)) for c in CSV_COLUMNS])
    elif format in ("jsonl", "json-lines"):
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps({c: getattr(row, c) for c in CSV_COLUMNS}))
                fh.write("\n")
    else:
        raise ValueError(f"unknown export format {format!r}")


def read_results(path, format: str | None = None) -> list[ResultRecord]:
    """Inverse of export_results; format inferred from the extension by default."""
    if format is None:
        format = "jsonl" if str(path).endswith((".jsonl", ".ndjson")) else "csv"
    rows: list[ResultRecord] = []
    if format == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"{path}: header does not match the result schema")
            for raw in reader:
                rows.append(_record_from_dict(raw))
    elif format in ("jsonl", "json-lines"):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(_record_from_dict(json.loads(line)))
    else:
        raise ValueError(f"unknown export format {format!r}")
    return rows


def _record_from_dict(d: dict) -> ResultRecord:
    kw = {}
    for c in CSV_COLUMNS:
        v = d[c]
        if c in ("scenario", "policy"):
            kw[c] = str(v)
        elif c in _INT_COLUMNS:
            kw[c] = int(v)
        else:
            kw[c] = float(v)
    return ResultRecord(**kw)
