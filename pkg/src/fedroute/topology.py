"""Directed network topologies: file I/O, builtins, shortest paths, path enumeration.

Nodes are dense integer ids with a role tag (``host`` or ``switch``); switches
belong to exactly one controller domain. Links are directed and their position
in the link list is the link id, which doubles as the routing action id.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from importlib import resources

FORMAT_HEADER = "fedroute-topology v1"
ROLES = ("host", "switch")
BUILTIN_NAMES = ("abilene", "geant", "paper_fig3")


class TopologyError(ValueError):
    """Raised for malformed topology files or inconsistent topology data."""


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    delay_ms: float
    loss_prob: float
    bandwidth_mbps: float


@dataclass(frozen=True)
class Path:
    """A loop-free walk: node sequence plus the link ids joining it."""

    nodes: tuple[int, ...]
    links: tuple[int, ...]

    @property
    def hops(self) -> int:
        return len(self.links)


class Topology:
    """Immutable directed graph with roles, controller domains and labels."""

    def __init__(
        self,
        roles: list[str] | tuple[str, ...],
        domains: dict[int, int],
        links: list[Link] | tuple[Link, ...],
        labels: list[str] | tuple[str, ...] | None = None,
        name: str = "",
    ):
        self.roles = tuple(roles)
        self.n_nodes = len(self.roles)
        self.domains = dict(domains)
        self.links = tuple(links)
        self.labels = tuple(labels) if labels is not None else tuple(
            f"n{i}" for i in range(self.n_nodes)
        )
        self.name = name
        self._validate()
        # out_links[u] sorted by destination id: deterministic iteration order
        out: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for lid, link in enumerate(self.links):
            out[link.src].append(lid)
        self.out_links = tuple(
            tuple(sorted(lids, key=lambda i: self.links[i].dst)) for lids in out
        )
        self._by_label = {lab: i for i, lab in enumerate(self.labels)}

    def _validate(self) -> None:
        if self.n_nodes == 0:
            raise TopologyError("topology has no nodes")
        for role in self.roles:
            if role not in ROLES:
                raise TopologyError(f"unknown node role {role!r}")
        if len(set(self.labels)) != len(self.labels):
            raise TopologyError("node labels must be unique")
        if len(self.labels) != self.n_nodes:
            raise TopologyError("one label per node required")
        switches = {i for i, r in enumerate(self.roles) if r == "switch"}
        if set(self.domains) != switches:
            raise TopologyError("domains must cover exactly the switch nodes")
        doms = sorted(set(self.domains.values()))
        if doms and doms != list(range(len(doms))):
            raise TopologyError(f"controller ids must be dense from 0, got {doms}")
        seen: set[tuple[int, int]] = set()
        for link in self.links:
            if not (0 <= link.src < self.n_nodes and 0 <= link.dst < self.n_nodes):
                raise TopologyError(f"link endpoint out of range: {link}")
            if link.src == link.dst:
                raise TopologyError(f"self-loop link not allowed: {link}")
            if (link.src, link.dst) in seen:
                raise TopologyError(f"duplicate link {link.src}->{link.dst}")
            seen.add((link.src, link.dst))
            if link.delay_ms <= 0:
                raise TopologyError(f"link delay must be positive: {link}")
            if link.bandwidth_mbps <= 0:
                raise TopologyError(f"link bandwidth must be positive: {link}")
            if not 0.0 <= link.loss_prob <= 1.0:
                raise TopologyError(f"link loss_prob outside [0, 1]: {link}")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def domain_count(self) -> int:
        return len(set(self.domains.values())) if self.domains else 0

    def link(self, link_id: int) -> Link:
        return self.links[link_id]

    def node_by_label(self, label: str) -> int:
        try:
            return self._by_label[label]
        except KeyError:
            raise TopologyError(f"no node labelled {label!r}") from None

    def hosts(self) -> tuple[int, ...]:
        return tuple(i for i, r in enumerate(self.roles) if r == "host")

    def switches(self) -> tuple[int, ...]:
        return tuple(i for i, r in enumerate(self.roles) if r == "switch")

    def traffic_endpoints(self) -> tuple[int, ...]:
        """Nodes that may source or sink flows: hosts if any, else every node."""
        hosts = self.hosts()
        return hosts if hosts else tuple(range(self.n_nodes))

    def with_links(self, links: list[Link] | tuple[Link, ...]) -> "Topology":
        """Copy of this topology with a replaced link list (same ids/order)."""
        return Topology(self.roles, self.domains, links, self.labels, self.name)

    def path_from_nodes(self, nodes: list[int] | tuple[int, ...]) -> Path:
        """Build a Path from a node sequence, resolving link ids (adjacency checked)."""
        links = []
        for a, b in zip(nodes, nodes[1:]):
            for lid in self.out_links[a]:
                if self.links[lid].dst == b:
                    links.append(lid)
                    break
            else:
                raise TopologyError(f"no link {a}->{b} in topology")
        return Path(tuple(nodes), tuple(links))


# ---------------------------------------------------------------------------
# file format


def _parse_node_line(tokens: list[str], lineno: int) -> tuple[int, str, int | None, str]:
    if len(tokens) != 4:
        raise TopologyError(f"line {lineno}: node lines take 'id role domain label'")
    nid_s, role, dom_s, label = tokens
    try:
        nid = int(nid_s)
    except ValueError:
        raise TopologyError(f"line {lineno}: bad node id {nid_s!r}") from None
    if role not in ROLES:
        raise TopologyError(f"line {lineno}: unknown role {role!r}")
    if role == "host":
        if dom_s != "-":
            raise TopologyError(f"line {lineno}: hosts take domain '-'")
        dom: int | None = None
    else:
        try:
            dom = int(dom_s)
        except ValueError:
            raise TopologyError(f"line {lineno}: bad domain {dom_s!r}") from None
    return nid, role, dom, label


def _parse_link_line(tokens: list[str], lineno: int) -> Link:
    if len(tokens) != 5:
        raise TopologyError(
            f"line {lineno}: link lines take 'src dst delay_ms loss_prob bandwidth_mbps'"
        )
    try:
        src, dst = int(tokens[0]), int(tokens[1])
        delay, loss, bw = float(tokens[2]), float(tokens[3]), float(tokens[4])
    except ValueError:
        raise TopologyError(f"line {lineno}: bad link field in {tokens}") from None
    return Link(src, dst, delay, loss, bw)


def loads_topology(text: str, name: str = "") -> Topology:
    """Parse a topology from its text form. See ``save_topology`` for the schema."""
    lines = text.splitlines()
    header = None
    body_start = 0
    for i, raw in enumerate(lines):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        header = stripped
        body_start = i + 1
        break
    if header != FORMAT_HEADER:
        raise TopologyError(f"expected header {FORMAT_HEADER!r}, got {header!r}")

    section = None
    undirected = False
    node_rows: list[tuple[int, str, int | None, str]] = []
    link_rows: list[Link] = []
    saw_nodes = saw_links = False
    for lineno, raw in enumerate(lines[body_start:], start=body_start + 1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if stripped == "[nodes]":
                if saw_nodes:
                    raise TopologyError(f"line {lineno}: duplicate [nodes] section")
                section, saw_nodes = "nodes", True
            elif stripped in ("[links]", "[links undirected]"):
                if saw_links:
                    raise TopologyError(f"line {lineno}: duplicate links section")
                section, saw_links = "links", True
                undirected = stripped == "[links undirected]"
            else:
                raise TopologyError(f"line {lineno}: unknown section {stripped!r}")
            continue
        if section == "nodes":
            node_rows.append(_parse_node_line(stripped.split(), lineno))
        elif section == "links":
            link_rows.append(_parse_link_line(stripped.split(), lineno))
        else:
            raise TopologyError(f"line {lineno}: content outside any section")
    if not saw_nodes or not saw_links:
        raise TopologyError("topology file needs [nodes] and [links] sections")

    node_rows.sort(key=lambda r: r[0])
    ids = [r[0] for r in node_rows]
    if ids != list(range(len(ids))):
        raise TopologyError(f"node ids must be dense from 0, got {ids}")
    roles = [r[1] for r in node_rows]
    labels = [r[3] for r in node_rows]
    domains = {r[0]: r[2] for r in node_rows if r[2] is not None}

    links: list[Link] = []
    for link in link_rows:
        links.append(link)
        if undirected:
            links.append(
                Link(link.dst, link.src, link.delay_ms, link.loss_prob, link.bandwidth_mbps)
            )
    return Topology(roles, domains, links, labels, name)


def load_topology(path) -> Topology:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = str(path).rsplit("/", 1)[-1].removesuffix(".topo")
    return loads_topology(text, name=name)


def dumps_topology(t: Topology) -> str:
    """Serialize in the directed form; ``loads_topology(dumps_topology(t))`` is identity."""
    out = [FORMAT_HEADER, "[nodes]"]
    for i in range(t.n_nodes):
        dom = str(t.domains[i]) if i in t.domains else "-"
        out.append(f"{i} {t.roles[i]} {dom} {t.labels[i]}")
    out.append("[links]")
    for link in t.links:
        out.append(
            f"{link.src} {link.dst} {link.delay_ms!r} {link.loss_prob!r} "
            f"{link.bandwidth_mbps!r}"
        )
    return "\n".join(out) + "\n"


def save_topology(t: Topology, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_topology(t))


def builtin_topology(name: str) -> Topology:
    """Load one of the bundled topologies: abilene, geant or paper_fig3."""
    if name not in BUILTIN_NAMES:
        raise TopologyError(f"unknown builtin topology {name!r}, have {BUILTIN_NAMES}")
    text = resources.files("fedroute.data").joinpath(f"{name}.topo").read_text("utf-8")
    return loads_topology(text, name=name)


# ---------------------------------------------------------------------------
# routing primitives


def _link_cost(t: Topology, metric: str):
    if metric == "hops":
        return lambda link: 1.0
    if metric == "delay":
        return lambda link: link.delay_ms
    raise ValueError(f"unknown metric {metric!r}, want 'hops' or 'delay'")


def shortest_path(t: Topology, src: int, dst: int, metric: str = "hops") -> Path | None:
    """Cheapest path under the metric, or None when dst is unreachable.

    Ties are broken toward the lexicographically smallest node sequence, so the
    result is a pure function of the topology.
    """
    cost = _link_cost(t, metric)
    if src == dst:
        return Path((src,), ())
    # Dijkstra toward dst over reversed links gives cost-to-go from every node.
    into: list[list[int]] = [[] for _ in range(t.n_nodes)]
    for lid, link in enumerate(t.links):
        into[link.dst].append(lid)
    inf = float("inf")
    dist = [inf] * t.n_nodes
    dist[dst] = 0.0
    heap: list[tuple[float, int]] = [(0.0, dst)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for lid in into[v]:
            link = t.links[lid]
            cand = dist[v] + cost(link)
            if cand < dist[link.src]:
                dist[link.src] = cand
                heapq.heappush(heap, (cand, link.src))
    if dist[src] == inf:
        return None
    # Walk forward, always taking the smallest next node that stays on an
    # optimal path. The equality test reproduces the relaxation arithmetic
    # exactly, so no float tolerance is needed.
    nodes = [src]
    links = []
    u = src
    while u != dst:
        chosen = None
        for lid in t.out_links[u]:  # ascending destination id
            link = t.links[lid]
            if dist[link.dst] + cost(link) == dist[u]:
                chosen = lid
                break
        assert chosen is not None, "optimal successor must exist on a reachable path"
        links.append(chosen)
        u = t.links[chosen].dst
        nodes.append(u)
    return Path(tuple(nodes), tuple(links))


def enumerate_paths(t: Topology, src: int, dst: int, max_hops: int) -> list[Path]:
    """All loop-free src->dst paths with at most max_hops links.

    Deterministic order: lexicographic in the node sequence. Exponential in the
    worst case; intended for small graphs and as a reference oracle.
    """
    if max_hops < 0:
        raise ValueError("max_hops must be >= 0")
    found: list[Path] = []
    nodes = [src]
    links: list[int] = []
    visited = {src}

    def walk(u: int) -> None:
        if u == dst:
            found.append(Path(tuple(nodes), tuple(links)))
            return
        if len(links) == max_hops:
            return
        for lid in t.out_links[u]:
            v = t.links[lid].dst
            if v in visited:
                continue
            visited.add(v)
            nodes.append(v)
            links.append(lid)
            walk(v)
            links.pop()
            nodes.pop()
            visited.remove(v)

    walk(src)
    return found
