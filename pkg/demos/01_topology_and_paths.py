"""Tour the built-in topologies and compare path metrics by hand.

Run with:  python demos/01_topology_and_paths.py
"""

from fedroute.netsim import Flow, LinkState, path_metrics
from fedroute.topology import builtin_topology, enumerate_paths, shortest_path

for name in ("paper_fig3", "abilene", "geant"):
    t = builtin_topology(name)
    print(f"{name}: {t.n_nodes} nodes, {t.n_links} links, {t.domain_count} domains")

t = builtin_topology("abilene")
src, dst = t.node_by_label("ATLA"), t.node_by_label("SNVA")
flow = Flow(0, src, dst, 0, demand_mbps=40.0)
idle = LinkState(t)

by_hops = shortest_path(t, src, dst, metric="hops")
by_delay = shortest_path(t, src, dst, metric="delay")
print(f"\nATLA -> SNVA, fewest hops : {' '.join(t.labels[n] for n in by_hops.nodes)}")
print(f"ATLA -> SNVA, least delay : {' '.join(t.labels[n] for n in by_delay.nodes)}")

print("\nevery path up to 4 hops, on an idle network:")
for p in sorted(enumerate_paths(t, src, dst, max_hops=4), key=lambda p: p.hops):
    m = path_metrics(t, idle, p, flow)
    route = " ".join(t.labels[n] for n in p.nodes)
    print(f"  {m.delay_ms:6.1f} ms  {m.throughput_mbps:5.1f} Mbps  {route}")
