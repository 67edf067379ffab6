"""Round-based federated training across controller-hosted learning nodes.

One agent per SDN controller trains on its own traffic partition; a root
aggregator averages the resulting weights each round and pushes the global
model back out. Nodes never exchange experiences, only weights.

The protocol is synchronous: every node finishes its local episodes before
aggregation, and every node starts the next round from the same global
weights. Nodes may run concurrently (each owns its agent, RNG and simulator
state exclusively), and the run is bitwise-reproducible either way.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .agent import (
    AgentConfig,
    DQNAgent,
    GreedyRoutingPolicy,
    NormalizationBounds,
    RewardConfig,
    train_agent,
    state_dim,
    utility,
)
from .netsim import ControllerModel, Flow, run_slotted
from .neural import ModelWeights, init_weights
from .topology import Topology

WEIGHTING_MODES = ("uniform", "by_sample_count")


@dataclass(frozen=True)
class FLConfig:
    """Shape of one federated run: how many rounds, how much local work."""

    rounds: int = 10
    episodes_per_round: int = 200
    node_count: int = 2
    weighting: str = "by_sample_count"

    def __post_init__(self):
        if self.rounds < 1 or self.episodes_per_round < 1 or self.node_count < 1:
            raise ValueError("rounds, episodes_per_round and node_count must be >= 1")
        if self.weighting not in WEIGHTING_MODES:
            raise ValueError(f"weighting must be one of {WEIGHTING_MODES}")


@dataclass(frozen=True)
class LocalUpdate:
    """One node's contribution to a round: its weights and how much data backs them."""

    node_id: int
    round_index: int
    weights: ModelWeights
    sample_count: int

    def __post_init__(self):
        if self.sample_count < 0:
            raise ValueError("sample_count must be >= 0")


@dataclass(frozen=True)
class NodeStats:
    """Per-node training telemetry for one round."""

    node_id: int
    mean_episode_reward: float
    success_ratio: float
    mean_loss: float
    sample_count: int
    received_digest: str


@dataclass(frozen=True)
class RoundReport:
    """Global weights after one round plus what each node did to get there."""

    round_index: int
    weights: ModelWeights
    node_stats: tuple[NodeStats, ...]

    def digest(self) -> str:
        return self.weights.digest()


@dataclass(frozen=True)
class FederatedResult:
    initial_weights: ModelWeights
    final_weights: ModelWeights
    reports: tuple[RoundReport, ...]


def fedavg(updates: list[LocalUpdate], weighting: str = "by_sample_count") -> ModelWeights:
    """Elementwise weighted mean of the update weights.

    ``uniform`` weights every node equally; ``by_sample_count`` weights
    proportionally to sample_count, dropping zero-sample nodes (uniform
    fallback if every count is zero). Updates are ordered by node id before
    summing, so the result is bitwise independent of input order.
    """
    if not updates:
        raise ValueError("no updates to aggregate")
    if weighting not in WEIGHTING_MODES:
        raise ValueError(f"weighting must be one of {WEIGHTING_MODES}")
    if len({u.node_id for u in updates}) != len(updates):
        raise ValueError("duplicate node_id in update list")
    if len({u.round_index for u in updates}) != 1:
        raise ValueError("updates span multiple rounds")
    arch = updates[0].weights.layer_sizes
    for u in updates:
        if u.weights.layer_sizes != arch:
            raise ValueError(
                f"node {u.node_id} architecture {u.weights.layer_sizes} != {arch}"
            )
    ordered = sorted(updates, key=lambda u: u.node_id)
    if weighting == "by_sample_count" and any(u.sample_count > 0 for u in ordered):
        ordered = [u for u in ordered if u.sample_count > 0]
        coef = np.array([u.sample_count for u in ordered], dtype=float)
    else:
        coef = np.ones(len(ordered))
    coef /= coef.sum()

    out = ordered[0].weights.copy()
    for li in range(len(out.weights)):
        out.weights[li] = sum(c * u.weights.weights[li] for c, u in zip(coef, ordered))
        out.biases[li] = sum(c * u.weights.biases[li] for c, u in zip(coef, ordered))
    return out


def partition_traffic(
    flows: list[Flow], t: Topology, node_count: int, mode: str = "by_source_domain"
) -> list[list[Flow]]:
    """Split a flow list into disjoint per-node lists, preserving order.

    ``by_source_domain`` assigns each flow to the controller owning its
    source's domain (a host belongs to the domain of its attachment switch);
    when node_count is below the domain count, consecutive domains share a
    controller, same as :func:`fedroute.netsim.controller_model`.
    ``round_robin`` deals flows out by index.
    """
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    parts: list[list[Flow]] = [[] for _ in range(node_count)]
    if mode == "round_robin":
        for i, f in enumerate(flows):
            parts[i % node_count].append(f)
        return parts
    if mode != "by_source_domain":
        raise ValueError(f"unknown partition mode {mode!r}")
    n_domains = t.domain_count
    if node_count > n_domains:
        raise ValueError(
            f"cannot split {n_domains} domains across {node_count} nodes"
        )
    for f in flows:
        parts[_node_of_source(t, f.src, node_count, n_domains)].append(f)
    return parts


def _node_of_source(t: Topology, src: int, node_count: int, n_domains: int) -> int:
    node = src
    if node not in t.domains:  # host: walk to its attachment switch
        attached = [t.link(lid).dst for lid in t.out_links[node] if t.link(lid).dst in t.domains]
        if not attached:
            raise ValueError(f"source node {node} belongs to no controller domain")
        node = attached[0]
    return t.domains[node] * node_count // n_domains


def run_federated_training(
    t: Topology,
    node_flows: list[list[Flow]],
    fl: FLConfig,
    agent_cfg: AgentConfig | None = None,
    rc: RewardConfig | None = None,
    seed: int = 0,
    parallel: bool = False,
    log_path=None,
) -> FederatedResult:
    """Run the full protocol and return the final global weights plus reports.

    The aggregator draws the initial weights, every node trains
    ``episodes_per_round`` episodes per round on its own flow list (with its
    own RNG stream derived from ``(seed, node_id)``), and FedAvg merges the
    results at each round boundary. A node with an empty flow list submits a
    zero-sample update and never moves the average. ``log_path``, when given,
    receives one JSON line per round (round index, per-node mean reward,
    global digest).
    """
    agent_cfg = agent_cfg or AgentConfig()
    rc = rc or RewardConfig()
    if fl.node_count != len(node_flows):
        raise ValueError(
            f"fl.node_count={fl.node_count} but {len(node_flows)} flow lists given"
        )

    arch = (state_dim(t), *agent_cfg.hidden_sizes, t.n_links)
    init_seed = int(np.random.default_rng([seed, fl.node_count]).integers(2**63))
    theta0 = init_weights(arch, seed=init_seed)
    agents = [
        DQNAgent(t, agent_cfg, rc, seed=[seed, node], weights=theta0)
        for node in range(fl.node_count)
    ]

    def local_round(node: int, round_index: int, global_w: ModelWeights):
        agent = agents[node]
        agent.set_weights(global_w)
        received = agent.weights.digest()
        before = agent.env_steps
        flows = node_flows[node]
        outcomes = train_agent(agent, flows, fl.episodes_per_round) if flows else []
        samples = agent.env_steps - before
        mean_reward = (
            float(np.mean([math.fsum(o.rewards) for o in outcomes]))
            if outcomes
            else float("nan")
        )
        succ = (
            float(np.mean([o.success for o in outcomes])) if outcomes else float("nan")
        )
        update = LocalUpdate(node, round_index, agent.weights.copy(), samples)
        stats = NodeStats(node, mean_reward, succ, agent.last_loss, samples, received)
        return update, stats

    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        global_w = theta0
        reports: list[RoundReport] = []
        for r in range(fl.rounds):
            if parallel:
                with ThreadPoolExecutor(max_workers=fl.node_count) as pool:
                    results = list(
                        pool.map(lambda n: local_round(n, r, global_w), range(fl.node_count))
                    )
            else:
                results = [local_round(n, r, global_w) for n in range(fl.node_count)]
            updates = [u for u, _ in results]
            stats = tuple(s for _, s in results)
            global_w = fedavg(updates, fl.weighting)
            reports.append(RoundReport(r, global_w.copy(), stats))
            if log_file:
                rec = {
                    "round": r,
                    "node_mean_rewards": [
                        None
                        if math.isnan(s.mean_episode_reward)
                        else s.mean_episode_reward
                        for s in stats
                    ],
                    "global_digest": global_w.digest(),
                }
                log_file.write(json.dumps(rec) + "\n")
    finally:
        if log_file:
            log_file.close()

    for agent in agents:  # final delivery: everyone ends on the same model
        agent.set_weights(global_w)
    return FederatedResult(theta0, global_w, tuple(reports))


# ---------------------------------------------------------------------------
# policy evaluation


@dataclass(frozen=True)
class AggregateMetrics:
    """Flow-population summary of one policy's routing quality.

    Throughput, throughput ratio and loss means run over every flow, with
    rejections counted as zero throughput and full loss. Delay, hop and
    utility means run over routed flows only (a dropped flow has no delay);
    they are NaN when nothing was routed.
    """

    flow_count: int
    routed_count: int
    success_ratio: float
    mean_delay_ms: float
    mean_setup_delay_ms: float
    mean_throughput_mbps: float
    mean_throughput_ratio: float
    mean_loss_ratio: float
    mean_hops: float
    mean_utility: float


def evaluate_policy(
    t: Topology,
    policy,
    eval_flows: list[Flow],
    rc: RewardConfig | None = None,
    cm: ControllerModel | None = None,
    seed: int = 0,
) -> AggregateMetrics | None:
    """Route ``eval_flows`` with ``policy`` and aggregate the outcome.

    ``policy`` is either a routing callable or bare ModelWeights (wrapped in
    masked-greedy inference). Returns None for an empty flow list.
    """
    rc = rc or RewardConfig()
    norms = rc.norms or NormalizationBounds.for_topology(t)
    if isinstance(policy, ModelWeights):
        policy = GreedyRoutingPolicy(t, policy, norms)
    if not eval_flows:
        return None
    records = run_slotted(t, list(eval_flows), policy, cm, seed)
    routed = [rec for rec in records if not rec.rejected]

    def routed_mean(values):
        return float(np.mean(values)) if routed else float("nan")

    return AggregateMetrics(
        flow_count=len(records),
        routed_count=len(routed),
        success_ratio=len(routed) / len(records),
        mean_delay_ms=routed_mean([rec.metrics.delay_ms for rec in routed]),
        mean_setup_delay_ms=float(np.mean([rec.setup_delay_ms for rec in records])),
        mean_throughput_mbps=float(
            np.mean([rec.metrics.throughput_mbps for rec in records])
        ),
        mean_throughput_ratio=float(
            np.mean(
                [rec.metrics.throughput_mbps / rec.flow.demand_mbps for rec in records]
            )
        ),
        mean_loss_ratio=float(np.mean([rec.metrics.loss_ratio for rec in records])),
        mean_hops=routed_mean([rec.metrics.hops for rec in routed]),
        mean_utility=routed_mean(
            [utility(rec.metrics, rc.weights, norms) for rec in routed]
        ),
    )
