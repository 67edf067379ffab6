"""FedAvg algebra, traffic partitioning, the round protocol, policy evaluation."""

import json
import math

import numpy as np
import pytest

from fedroute.agent import AgentConfig, DQNAgent, RewardConfig, state_dim, train_agent
from fedroute.federated import (
    FLConfig,
    LocalUpdate,
    evaluate_policy,
    fedavg,
    partition_traffic,
    run_federated_training,
)
from fedroute.netsim import ControllerModel, Flow, controller_setup_delay
from fedroute.neural import ModelWeights, init_weights
from fedroute.topology import Link, Topology, builtin_topology, shortest_path


def weights_from_params(values):
    """Single (1 -> n) layer whose weight column and bias equal ``values``."""
    v = np.asarray(values, dtype=float)
    return ModelWeights((1, len(v)), [v.reshape(-1, 1).copy()], [v.copy()])


def update(node, params, count=1, round_index=0):
    return LocalUpdate(node, round_index, weights_from_params(params), count)


def chain_topo(n):
    links = [Link(i, i + 1, 1.0, 0.0, 100.0) for i in range(n - 1)]
    return Topology(["switch"] * n, {i: 0 for i in range(n)}, links)


# --- fedavg -----------------------------------------------------------------------


def test_fedavg_single_update_is_identity():
    w = init_weights((3, 5, 2), seed=0)
    out = fedavg([LocalUpdate(0, 0, w, 7)])
    assert out.digest() == w.digest()


def test_fedavg_uniform_mean():
    out = fedavg([update(0, [0.0, 2.0]), update(1, [2.0, 4.0])], weighting="uniform")
    np.testing.assert_array_equal(out.weights[0], [[1.0], [3.0]])
    np.testing.assert_array_equal(out.biases[0], [1.0, 3.0])


def test_fedavg_sample_count_weighting():
    out = fedavg([update(0, [0.0], count=1), update(1, [4.0], count=3)])
    np.testing.assert_array_equal(out.biases[0], [3.0])  # (1*0 + 3*4) / 4


def test_fedavg_zero_sample_nodes_excluded():
    junk = update(0, [1e9], count=0)
    out = fedavg([junk, update(1, [2.0], count=5)])
    np.testing.assert_array_equal(out.biases[0], [2.0])
    # all-zero counts fall back to uniform
    out = fedavg([update(0, [0.0], count=0), update(1, [4.0], count=0)])
    np.testing.assert_array_equal(out.biases[0], [2.0])


def test_fedavg_permutation_invariant_bitwise():
    rng = np.random.default_rng(8)
    ups = [
        LocalUpdate(n, 0, init_weights((4, 6, 3), seed=n), int(rng.integers(1, 50)))
        for n in range(5)
    ]
    base = fedavg(ups).digest()
    for _ in range(10):
        perm = list(rng.permutation(5))
        assert fedavg([ups[i] for i in perm]).digest() == base


def test_fedavg_idempotent_on_identical_updates():
    w = init_weights((3, 4, 2), seed=1)
    out = fedavg([LocalUpdate(0, 0, w, 3), LocalUpdate(1, 0, w.copy(), 3)])
    assert out.digest() == w.digest()


def test_fedavg_convex_combination_bounds():
    rng = np.random.default_rng(3)
    for trial in range(20):
        ups = [
            LocalUpdate(n, 0, init_weights((5, 7, 4), seed=100 * trial + n), int(rng.integers(1, 9)))
            for n in range(4)
        ]
        out = fedavg(ups).flat()
        stack = np.stack([u.weights.flat() for u in ups])
        assert np.all(out >= stack.min(axis=0) - 1e-12)
        assert np.all(out <= stack.max(axis=0) + 1e-12)


def test_fedavg_matches_reference_average():
    rng = np.random.default_rng(11)
    for trial in range(20):
        ups = [
            LocalUpdate(n, 0, init_weights((6, 8, 3), seed=trial * 10 + n), int(rng.integers(1, 20)))
            for n in range(5)
        ]
        got = fedavg(ups).flat()
        want = np.average(
            np.stack([u.weights.flat() for u in ups]),
            axis=0,
            weights=[u.sample_count for u in ups],
        )
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_fedavg_input_validation():
    with pytest.raises(ValueError):
        fedavg([])
    with pytest.raises(ValueError):
        fedavg([update(0, [1.0]), update(0, [2.0])])  # duplicate node
    with pytest.raises(ValueError):
        fedavg([update(0, [1.0]), update(1, [2.0], round_index=1)])
    with pytest.raises(ValueError):
        fedavg([update(0, [1.0]), LocalUpdate(1, 0, init_weights((2, 2), 0), 1)])
    with pytest.raises(ValueError):
        fedavg([update(0, [1.0])], weighting="median")
    with pytest.raises(ValueError):
        LocalUpdate(0, 0, weights_from_params([1.0]), sample_count=-1)


# --- traffic partitioning --------------------------------------------------------------


def test_partition_single_node_is_identity():
    t = chain_topo(3)
    flows = [Flow(i, 0, 2, i) for i in range(4)]
    assert partition_traffic(flows, t, 1) == [flows]


def test_partition_round_robin():
    t = chain_topo(3)
    flows = [Flow(i, 0, 2, i) for i in range(10)]
    parts = partition_traffic(flows, t, 2, mode="round_robin")
    assert [len(p) for p in parts] == [5, 5]
    assert [f.id for f in parts[0]] == [0, 2, 4, 6, 8]
    assert [f.id for f in parts[1]] == [1, 3, 5, 7, 9]


def test_partition_by_source_domain_fig3():
    t = builtin_topology("paper_fig3")
    h1, h2, h3 = (t.node_by_label(h) for h in ("h1", "h2", "h3"))
    flows = [Flow(0, h1, h2, 0), Flow(1, h2, h3, 0), Flow(2, h3, h1, 0)]
    parts = partition_traffic(flows, t, 4)
    # hosts inherit the domain of their attachment switch: s1, s5, s13
    assert [f.id for f in parts[0]] == [0]
    assert [f.id for f in parts[1]] == [1]
    assert [f.id for f in parts[2]] == []
    assert [f.id for f in parts[3]] == [2]
    # every switch-sourced flow lands in its own domain
    sflows = [Flow(i, s, h1, 0) for i, s in enumerate(t.switches())]
    parts = partition_traffic(sflows, t, 4)
    for node, part in enumerate(parts):
        assert all(t.domains[f.src] == node for f in part)
    assert sum(len(p) for p in parts) == len(sflows)


def test_partition_merges_domains_when_fewer_nodes():
    t = builtin_topology("paper_fig3")
    sflows = [Flow(i, s, 16, 0) for i, s in enumerate(t.switches())]
    parts = partition_traffic(sflows, t, 2)
    assert all(t.domains[f.src] in (0, 1) for f in parts[0])
    assert all(t.domains[f.src] in (2, 3) for f in parts[1])


def test_partition_rejects_more_nodes_than_domains():
    t = builtin_topology("paper_fig3")
    with pytest.raises(ValueError):
        partition_traffic([], t, 5)


# --- round protocol ---------------------------------------------------------------------


def small_cfg(**kw):
    defaults = dict(
        hidden_sizes=(16,), masked_training=True, learn_start=16, batch_size=8,
        target_sync_period=20, epsilon_decay_steps=200, max_steps=8,
    )
    defaults.update(kw)
    return AgentConfig(**defaults)


def fig3_node_flows(t, n_flows=6):
    h1, h2, h3 = (t.node_by_label(h) for h in ("h1", "h2", "h3"))
    flows = [
        Flow(i, [h1, h2, h3][i % 3], [h2, h3, h1][i % 3], i) for i in range(n_flows)
    ]
    return partition_traffic(flows, t, 4)


def test_single_node_round_equals_local_training():
    t = chain_topo(4)
    cfg = small_cfg()
    rc = RewardConfig()
    flows = [Flow(i, 0, 3, i) for i in range(4)]
    fl = FLConfig(rounds=1, episodes_per_round=30, node_count=1)
    result = run_federated_training(t, [flows], fl, cfg, rc, seed=7)

    init_seed = int(np.random.default_rng([7, 1]).integers(2**63))
    arch = (state_dim(t), *cfg.hidden_sizes, t.n_links)
    agent = DQNAgent(t, cfg, rc, seed=[7, 0], weights=init_weights(arch, init_seed))
    train_agent(agent, flows, 30)
    assert result.final_weights.digest() == agent.weights.digest()
    assert result.initial_weights.digest() == init_weights(arch, init_seed).digest()


def test_round_boundary_synchrony():
    t = builtin_topology("paper_fig3")
    fl = FLConfig(rounds=3, episodes_per_round=12, node_count=4)
    result = run_federated_training(
        t, fig3_node_flows(t), fl, small_cfg(), RewardConfig(), seed=1
    )
    assert len(result.reports) == 3
    expected = result.initial_weights.digest()
    for report in result.reports:
        received = {s.received_digest for s in report.node_stats}
        assert received == {expected}  # every node starts the round on one model
        expected = report.digest()
    assert result.final_weights.digest() == expected


def test_sequential_and_concurrent_runs_are_bitwise_equal():
    t = builtin_topology("paper_fig3")
    fl = FLConfig(rounds=2, episodes_per_round=10, node_count=4)
    digests = []
    for parallel in (False, True):
        result = run_federated_training(
            t, fig3_node_flows(t), fl, small_cfg(), RewardConfig(), seed=3,
            parallel=parallel,
        )
        digests.append(
            (result.final_weights.digest(), tuple(r.digest() for r in result.reports))
        )
    assert digests[0] == digests[1]


def test_empty_node_never_moves_the_average():
    t = chain_topo(4)
    flows = [Flow(i, 0, 3, i) for i in range(4)]
    fl = FLConfig(rounds=1, episodes_per_round=20, node_count=2)
    result = run_federated_training(
        t, [flows, []], fl, small_cfg(), RewardConfig(), seed=5
    )
    stats = result.reports[0].node_stats
    assert stats[1].sample_count == 0
    assert math.isnan(stats[1].mean_episode_reward)
    assert stats[0].sample_count > 0
    # sole contributor: global weights equal its local update bitwise
    cfg, rc = small_cfg(), RewardConfig()
    init_seed = int(np.random.default_rng([5, 2]).integers(2**63))
    w0 = init_weights((state_dim(t), *cfg.hidden_sizes, t.n_links), seed=init_seed)
    agent = DQNAgent(t, cfg, rc, seed=[5, 0], weights=w0)
    train_agent(agent, flows, 20)
    assert result.final_weights.digest() == agent.weights.digest()


def test_round_log_records_every_round(tmp_path):
    t = chain_topo(4)
    flows = [Flow(i, 0, 3, i) for i in range(4)]
    log = tmp_path / "rounds.jsonl"
    fl = FLConfig(rounds=3, episodes_per_round=10, node_count=1)
    result = run_federated_training(
        t, [flows], fl, small_cfg(), RewardConfig(), seed=2, log_path=log
    )
    lines = [json.loads(line) for line in log.read_text().splitlines()]
    assert [rec["round"] for rec in lines] == [0, 1, 2]
    for rec, report in zip(lines, result.reports):
        assert rec["global_digest"] == report.digest()
        assert len(rec["node_mean_rewards"]) == 1


def test_node_count_must_match_flow_lists():
    t = chain_topo(3)
    with pytest.raises(ValueError):
        run_federated_training(t, [[], []], FLConfig(node_count=3), seed=0)


def test_identical_seeds_produce_identical_updates():
    t = chain_topo(4)
    cfg = small_cfg()
    rc = RewardConfig()
    flows = [Flow(i, 0, 3, i) for i in range(4)]
    w0 = init_weights((state_dim(t), *cfg.hidden_sizes, t.n_links), seed=4)
    digests = []
    for _ in range(2):
        agent = DQNAgent(t, cfg, rc, seed=9, weights=w0.copy())
        train_agent(agent, flows, 25)
        digests.append(agent.weights.digest())
    assert digests[0] == digests[1]
    merged = fedavg(
        [LocalUpdate(0, 0, agent.weights, 10), LocalUpdate(1, 0, agent.weights.copy(), 10)]
    )
    assert merged.digest() == digests[0]


# --- evaluation -------------------------------------------------------------------------


def test_evaluate_policy_empty_flow_list_sentinel():
    t = chain_topo(3)
    assert evaluate_policy(t, lambda *a: None, []) is None


def test_evaluate_policy_weights_match_equivalent_path_policy():
    # on a chain the greedy walk and shortest path agree whatever the weights
    t = chain_topo(4)
    flows = [Flow(i, 0, 3, i) for i in range(5)]
    w = init_weights((state_dim(t), 3), seed=0)

    def spr(topo, state, flow):
        return shortest_path(topo, flow.src, flow.dst)

    a = evaluate_policy(t, w, flows, seed=0)
    b = evaluate_policy(t, spr, flows, seed=0)
    assert a == b
    assert a.mean_hops == 3.0 and a.success_ratio == 1.0
    assert a.mean_setup_delay_ms == 0.0


def test_evaluate_policy_counts_rejections_as_loss():
    t = chain_topo(3)
    flows = [Flow(i, 0, 2, i) for i in range(4)]
    agg = evaluate_policy(t, lambda *a: None, flows)
    assert agg.success_ratio == 0.0 and agg.routed_count == 0
    assert agg.mean_loss_ratio == 1.0 and agg.mean_throughput_mbps == 0.0
    assert math.isnan(agg.mean_delay_ms) and math.isnan(agg.mean_utility)


def test_evaluate_policy_applies_controller_overhead():
    t = chain_topo(3)
    flows = [Flow(i, 0, 2, i) for i in range(4)]
    cm = ControllerModel(controller_count=2, service_rate_rps=10.0)
    agg = evaluate_policy(t, lambda topo, s, f: shortest_path(topo, f.src, f.dst), flows, cm=cm)
    assert agg.mean_setup_delay_ms == controller_setup_delay(cm, 1.0)
