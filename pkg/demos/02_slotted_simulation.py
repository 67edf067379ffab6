"""Watch three flows contend for the same shortest-path bottleneck.

Three senders arrive in one slot, all routed by hop count. Their paths
share the ATLA -> HSTN link, so the later arrivals see less headroom:
the second is clipped and the third is refused outright by the
bandwidth cap. Run with:  python demos/02_slotted_simulation.py
"""

from fedroute.baseline import spr_policy
from fedroute.netsim import Flow, run_slotted
from fedroute.topology import builtin_topology

t = builtin_topology("abilene")


def node(label: str) -> int:
    return t.node_by_label(label)


flows = [
    Flow(0, node("ATLA"), node("DNVR"), 0, demand_mbps=60.0),
    Flow(1, node("CHIN"), node("HSTN"), 0, demand_mbps=60.0),
    Flow(2, node("WASH"), node("KSCY"), 0, demand_mbps=60.0),
]

records = run_slotted(t, flows, spr_policy("hops"), None, seed=0)
print("slot 0, three 60 Mbps flows routed by fewest hops:")
for rec in records:
    m = rec.metrics
    route = " ".join(t.labels[n] for n in rec.path.nodes)
    print(
        f"  flow {rec.flow.id}: {m.throughput_mbps:4.1f} / 60 Mbps through, "
        f"{m.delay_ms:6.1f} ms, loss {m.loss_ratio:.2f}  [{route}]"
    )
print("\nEach path crosses ATLA -> HSTN (100 Mbps). First-come flows eat the")
print("headroom; rerouting around the shared link is what the agent learns.")
