"""Train a small agent on a five-node network with one planted optimum.

The direct link is slow and lossy, the two-hop corridor is clean, and a
three-hop detour pads the action space. Training takes about fifteen
seconds. Run with:  python demos/03_learning_a_route.py
"""

from fedroute.agent import (
    AgentConfig,
    DQNAgent,
    NormalizationBounds,
    RewardConfig,
    train_agent,
    utility,
)
from fedroute.netsim import Flow, LinkState, path_metrics
from fedroute.topology import Link, Topology, enumerate_paths

links = [
    Link(0, 4, 40.0, 0.3, 5.0),   # direct but slow, lossy and thin
    Link(0, 1, 2.0, 0.0, 100.0),  # the corridor the agent should find
    Link(1, 4, 2.0, 0.0, 100.0),
    Link(0, 2, 5.0, 0.0, 100.0),  # clean three-hop detour
    Link(2, 3, 5.0, 0.0, 100.0),
    Link(3, 4, 5.0, 0.0, 100.0),
]
t = Topology(["switch"] * 5, {i: 0 for i in range(5)}, links)
flow = Flow(0, 0, 4, 0, demand_mbps=10.0)
rc = RewardConfig()
norms = NormalizationBounds.for_topology(t)

print("candidate paths and their utilities on an idle network:")
for p in sorted(enumerate_paths(t, 0, 4, max_hops=4), key=lambda p: p.hops):
    u = utility(path_metrics(t, LinkState(t), p, flow), rc.weights, norms)
    print(f"  {u:+.4f}  {' -> '.join(map(str, p.nodes))}")

cfg = AgentConfig(
    hidden_sizes=(24,),
    learning_rate=0.01,
    epsilon_decay_steps=2000,
    invalid_mode="continue",
    max_steps=8,
    learn_start=200,
)
agent = DQNAgent(t, cfg, rc, seed=3)
outcomes = train_agent(agent, [flow], 5000)

reached = [o for o in outcomes if o.kind == "terminal"]
print(f"\ntrained 5000 episodes, {len(reached)} reached the destination")
got = agent.greedy_path(LinkState(t), flow)
print(f"greedy route after training: {' -> '.join(map(str, got.nodes))}")
