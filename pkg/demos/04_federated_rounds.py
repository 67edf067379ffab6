"""Run four federation members through synchronous training rounds.

Traffic between h1 and h2 is split by source domain: the member owning
h1's domain trains on the forward direction, the member owning h2's on
the reverse, and the two host-free domains sit idle. Idle members carry
zero sample weight, so the round average is shaped only by members that
actually trained. The digest lines show every member entering a round
with the same model. Takes about half a minute.

Run with:  python demos/04_federated_rounds.py
"""

import math

from fedroute.agent import AgentConfig
from fedroute.federated import FLConfig, partition_traffic, run_federated_training
from fedroute.netsim import TrafficPattern, generate_traffic
from fedroute.topology import builtin_topology

t = builtin_topology("paper_fig3")
pattern = TrafficPattern(
    kind="fixed_pairs",
    pairs=((t.node_by_label("h1"), t.node_by_label("h2")),
           (t.node_by_label("h2"), t.node_by_label("h1"))),
    flows_per_slot=2,
    demand_mbps=20.0,
)
flows = generate_traffic(t, pattern, seed=4, n_flows=80)
node_flows = partition_traffic(flows, t, node_count=4)
print(f"flow split by source domain: {[len(v) for v in node_flows]}")

cfg = AgentConfig(
    hidden_sizes=(32,),
    learning_rate=0.01,
    epsilon_decay_steps=24000,
    invalid_mode="continue",
    max_steps=12,
    learn_start=200,
)
fl = FLConfig(rounds=5, episodes_per_round=800, node_count=4)
result = run_federated_training(t, node_flows, fl, cfg, seed=2)

print(f"initial model digest: {result.initial_weights.digest()}")
for report in result.reports:
    parts = []
    for s in report.node_stats:
        if math.isnan(s.mean_episode_reward):
            parts.append(f"node {s.node_id}: idle")
        else:
            parts.append(
                f"node {s.node_id}: reward {s.mean_episode_reward:+.2f} "
                f"success {s.success_ratio:.2f}"
            )
    print(f"round {report.round_index}: {', '.join(parts)}")
    print(f"  aggregated digest: {report.digest()}")
print(f"final model digest:   {result.final_weights.digest()}")
