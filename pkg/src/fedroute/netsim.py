"""Flow-level network simulation: traffic, link state, analytic path metrics,
an M/M/1 controller model and a deterministic slotted run loop.

Metrics are noiseless closed forms; all run-to-run variation comes from seeded
traffic generation and from the routing policies themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import Link, Path, Topology

MS_PER_SECOND = 1000.0


class SaturationError(RuntimeError):
    """Offered controller load meets or exceeds the per-controller service rate."""


@dataclass(frozen=True)
class Flow:
    id: int
    src: int
    dst: int
    arrival_slot: int
    demand_mbps: float = 1.0
    size_packets: int = 1000


@dataclass(frozen=True)
class PathMetrics:
    delay_ms: float
    throughput_mbps: float
    loss_ratio: float
    hops: int


@dataclass(frozen=True)
class TrafficPattern:
    """Traffic model: uniform random endpoint pairs or a cycled fixed pair list.

    ``flows_per_slot`` batches arrivals so flows can contend for capacity
    inside a slot; loads are released when the slot ends.
    """

    kind: str = "uniform"  # "uniform" | "fixed_pairs"
    pairs: tuple[tuple[int, int], ...] | None = None
    flows_per_slot: int = 1
    demand_mbps: float = 1.0
    demand_range_mbps: tuple[float, float] | None = None
    size_packets: int = 1000

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed_pairs"):
            raise ValueError(f"unknown traffic pattern kind {self.kind!r}")
        if self.kind == "fixed_pairs" and not self.pairs:
            raise ValueError("fixed_pairs pattern needs a non-empty pair list")
        if self.flows_per_slot < 1:
            raise ValueError("flows_per_slot must be >= 1")


def generate_traffic(t: Topology, pattern: TrafficPattern, seed: int, n_flows: int) -> list[Flow]:
    """Deterministic flow list; arrival slots are non-decreasing."""
    if n_flows < 0:
        raise ValueError("n_flows must be >= 0")
    endpoints = t.traffic_endpoints()
    if pattern.kind == "uniform":
        if len(endpoints) < 2:
            raise ValueError("uniform traffic needs at least two endpoint nodes")
        ordered = [(a, b) for a in endpoints for b in endpoints if a != b]
    else:
        for a, b in pattern.pairs:
            if a == b:
                raise ValueError(f"fixed pair ({a}, {b}) has equal endpoints")
            if a not in endpoints or b not in endpoints:
                raise ValueError(f"fixed pair ({a}, {b}) is not between endpoint nodes")
    rng = np.random.default_rng(seed)
    flows = []
    for i in range(n_flows):
        if pattern.kind == "uniform":
            src, dst = ordered[int(rng.integers(len(ordered)))]
        else:
            src, dst = pattern.pairs[i % len(pattern.pairs)]
        if pattern.demand_range_mbps is not None:
            lo, hi = pattern.demand_range_mbps
            demand = float(rng.uniform(lo, hi))
        else:
            demand = pattern.demand_mbps
        flows.append(
            Flow(
                id=i,
                src=src,
                dst=dst,
                arrival_slot=i // pattern.flows_per_slot,
                demand_mbps=demand,
                size_packets=pattern.size_packets,
            )
        )
    return flows


class LinkState:
    """Mutable per-link loads and EWMA observations for one simulation run.

    Load bookkeeping is exact: each flow's contribution is recorded per link,
    and removal recomputes the load as the sum of the remaining contributions,
    so removing every flow returns each load to exactly 0.0.
    """

    def __init__(
        self,
        t: Topology,
        ewma_alpha: float = 0.3,
        kappa: float = 1.0,
        max_utilization: float = 0.95,
    ):
        if not 0.0 < ewma_alpha <= 1.0:
            raise ValueError("ewma_alpha must be in (0, 1]")
        if not 0.0 < max_utilization < 1.0:
            raise ValueError("max_utilization must be in (0, 1)")
        self.topology = t
        self.ewma_alpha = ewma_alpha
        self.kappa = kappa
        self.max_utilization = max_utilization
        e = t.n_links
        self.load_mbps = np.zeros(e)
        self.ewma_delay_ms = np.array([l.delay_ms for l in t.links])
        self.ewma_loss = np.array([l.loss_prob for l in t.links])
        self.ewma_throughput_mbps = np.zeros(e)
        self._contribs: list[dict[int, float]] = [{} for _ in range(e)]
        self._flow_links: dict[int, tuple[int, ...]] = {}

    def effective_delay_ms(self, link_id: int) -> float:
        """Propagation delay inflated by an M/M/1-style utilization factor."""
        link = self.topology.link(link_id)
        u = min(float(self.load_mbps[link_id]) / link.bandwidth_mbps, self.max_utilization)
        return link.delay_ms * (1.0 + self.kappa * u / (1.0 - u))

    def residual_mbps(self, link_id: int) -> float:
        link = self.topology.link(link_id)
        return max(link.bandwidth_mbps - float(self.load_mbps[link_id]), 0.0)

    def active_flows(self) -> tuple[int, ...]:
        return tuple(self._flow_links)

    def _observe(self, link_id: int) -> None:
        a = self.ewma_alpha
        self.ewma_delay_ms[link_id] = (1 - a) * self.ewma_delay_ms[link_id] + a * self.effective_delay_ms(link_id)
        self.ewma_loss[link_id] = (1 - a) * self.ewma_loss[link_id] + a * self.topology.link(link_id).loss_prob
        self.ewma_throughput_mbps[link_id] = (
            (1 - a) * self.ewma_throughput_mbps[link_id] + a * float(self.load_mbps[link_id])
        )

    def observe_all(self) -> None:
        """Refresh every link's EWMA observations against current loads.

        Flow placement only observes the links it touches, so without a
        periodic sweep an unused link would keep its last loaded observation
        forever. The slotted loops call this once per elapsed slot, letting
        observations decay back toward idle conditions after loads release.
        """
        for lid in range(self.topology.n_links):
            self._observe(lid)


def path_metrics(t: Topology, state: LinkState, p: Path, flow: Flow) -> PathMetrics:
    """Analytic metrics for routing ``flow`` over ``p`` against current loads.

    Delay sums the utilization-inflated link delays, loss composes link loss
    probabilities, throughput is capped by the smallest residual bandwidth.
    The flow's own demand is not part of the utilization it experiences.
    """
    if not p.links:
        return PathMetrics(0.0, flow.demand_mbps, 0.0, 0)
    delay = 0.0
    survive = 1.0
    throughput = flow.demand_mbps
    for lid in p.links:
        delay += state.effective_delay_ms(lid)
        survive *= 1.0 - t.link(lid).loss_prob
        throughput = min(throughput, state.residual_mbps(lid))
    return PathMetrics(delay, throughput, 1.0 - survive, len(p.links))


def apply_flow(state: LinkState, p: Path, flow: Flow) -> PathMetrics:
    """Route ``flow`` over ``p``: compute its metrics, then occupy the links.

    Every path link's load grows by the realized throughput and its EWMA
    observations are refreshed. Undo with :func:`remove_flow`.
    """
    if flow.id in state._flow_links:
        raise ValueError(f"flow {flow.id} is already applied")
    metrics = path_metrics(state.topology, state, p, flow)
    for lid in p.links:
        state._contribs[lid][flow.id] = metrics.throughput_mbps
        state.load_mbps[lid] += metrics.throughput_mbps
        state._observe(lid)
    state._flow_links[flow.id] = p.links
    return metrics


def remove_flow(state: LinkState, flow_id: int) -> None:
    """Release a previously applied flow, restoring link loads exactly."""
    links = state._flow_links.pop(flow_id, None)
    if links is None:
        raise KeyError(f"flow {flow_id} is not applied")
    for lid in links:
        del state._contribs[lid][flow_id]
        state.load_mbps[lid] = sum(state._contribs[lid].values())


def inject_uniform_loss(t: Topology, loss: float) -> Topology:
    """Copy of ``t`` with every link's loss probability set to ``loss``."""
    if not 0.0 <= loss <= 1.0:
        raise ValueError("loss must be in [0, 1]")
    links = [Link(l.src, l.dst, l.delay_ms, loss, l.bandwidth_mbps) for l in t.links]
    return t.with_links(links)


# ---------------------------------------------------------------------------
# controller model


@dataclass(frozen=True)
class ControllerModel:
    """M/M/1 control plane: arrivals split evenly over identical controllers."""

    controller_count: int
    service_rate_rps: float
    assignment: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.controller_count < 1:
            raise ValueError("controller_count must be >= 1")
        if self.service_rate_rps <= 0:
            raise ValueError("service_rate_rps must be positive")


def controller_model(t: Topology, controller_count: int, service_rate_rps: float) -> ControllerModel:
    """Build a model whose assignment merges the topology's domains evenly.

    With D domains and C controllers (C <= D), domain d maps to controller
    d * C // D, so halving four domains pairs {0,1} and {2,3}.
    """
    d = max(t.domain_count, 1)
    if controller_count > d:
        raise ValueError(f"cannot spread {d} domains over {controller_count} controllers")
    assignment = {node: dom * controller_count // d for node, dom in t.domains.items()}
    return ControllerModel(controller_count, service_rate_rps, assignment)


def controller_setup_delay(cm: ControllerModel, offered_load_rps: float) -> float:
    """Mean flow-setup sojourn time in ms for the given total request rate."""
    if offered_load_rps < 0:
        raise ValueError("offered_load_rps must be >= 0")
    per_controller = offered_load_rps / cm.controller_count
    if per_controller >= cm.service_rate_rps:
        raise SaturationError(
            f"offered load {per_controller:g} rps per controller >= "
            f"service rate {cm.service_rate_rps:g} rps"
        )
    return MS_PER_SECOND / (cm.service_rate_rps - per_controller)


# ---------------------------------------------------------------------------
# slotted execution


@dataclass(frozen=True)
class FlowRecord:
    flow: Flow
    path: Path | None
    metrics: PathMetrics
    setup_delay_ms: float

    @property
    def end_to_end_delay_ms(self) -> float:
        return self.metrics.delay_ms + self.setup_delay_ms

    @property
    def rejected(self) -> bool:
        return self.path is None


REJECTED_METRICS = PathMetrics(delay_ms=0.0, throughput_mbps=0.0, loss_ratio=1.0, hops=0)


def run_slotted(
    t: Topology,
    flows: list[Flow],
    router,
    cm: ControllerModel | None,
    seed: int,
    offered_load_rps: float | None = None,
) -> list[FlowRecord]:
    """Process flows slot by slot through ``router`` and record their metrics.

    ``router(t, state, flow)`` returns a Path ending at ``flow.dst`` or None
    for a rejection (recorded as full loss). Flows of one slot contend with
    each other; their loads are released when the slot closes. Routers with a
    ``reset(seed)`` method are reseeded so the whole run is a function of
    (topology, flows, router, cm, seed). ``cm=None`` models an unloaded
    control plane: setup delay 0.
    """
    for a, b in zip(flows, flows[1:]):
        if b.arrival_slot < a.arrival_slot:
            raise ValueError("flows must be sorted by arrival_slot")
    if offered_load_rps is None:
        if flows:
            span = flows[-1].arrival_slot - flows[0].arrival_slot + 1
            offered_load_rps = len(flows) / span
        else:
            offered_load_rps = 0.0
    setup_delay = 0.0 if cm is None else controller_setup_delay(cm, offered_load_rps)
    if hasattr(router, "reset"):
        router.reset(seed)

    state = LinkState(t)
    records: list[FlowRecord] = []
    slot_flows: list[int] = []
    current_slot: int | None = None
    for flow in flows:
        if flow.arrival_slot != current_slot:
            for fid in slot_flows:
                remove_flow(state, fid)
            slot_flows = []
            if current_slot is not None:
                # one telemetry sweep per elapsed slot; capped because the
                # EWMA has converged long before 64 idle observations
                for _ in range(min(flow.arrival_slot - current_slot, 64)):
                    state.observe_all()
            current_slot = flow.arrival_slot
        path = router(t, state, flow)
        if path is None:
            records.append(FlowRecord(flow, None, REJECTED_METRICS, setup_delay))
            continue
        if path.nodes[0] != flow.src or path.nodes[-1] != flow.dst:
            raise ValueError(
                f"router returned a path {path.nodes} not joining {flow.src}->{flow.dst}"
            )
        metrics = apply_flow(state, path, flow)
        slot_flows.append(flow.id)
        records.append(FlowRecord(flow, path, metrics, setup_delay))
    return records
