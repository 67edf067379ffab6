"""DQN routing agent: one episode routes one flow by picking links in sequence.

The action space is the link set; picking a link that does not leave the
current node, or that closes a cycle, draws a negative penalty. Reaching the
destination pays the path's utility; intermediate valid steps pay 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .neural import ModelWeights, backward_batch, forward, forward_batch, init_weights, sgd_step
from .netsim import Flow, LinkState, PathMetrics, path_metrics
from .topology import Path, Topology

STEP_INVALID = "invalid_link"
STEP_LOOP = "loop"
STEP_TIMEOUT = "timeout"
STEP_INTERMEDIATE = "intermediate"
STEP_TERMINAL = "terminal"


@dataclass(frozen=True)
class UtilityWeights:
    """Coefficients of the linear flow-utility: reward throughput, charge
    delay, loss and path length."""

    throughput: float = 1.0
    delay: float = 1.0
    loss: float = 1.0
    hops: float = 1.0

    def __post_init__(self):
        vals = (self.throughput, self.delay, self.loss, self.hops)
        if any(v < 0 for v in vals):
            raise ValueError("utility weights must be non-negative")
        if all(v == 0 for v in vals):
            raise ValueError("utility weights must not all be zero")

    def scaled(self, c: float) -> "UtilityWeights":
        return UtilityWeights(c * self.throughput, c * self.delay, c * self.loss, c * self.hops)


@dataclass(frozen=True)
class NormalizationBounds:
    """Scales mapping raw metrics into [0,1] for state features and utility."""

    max_delay_ms: float
    max_throughput_mbps: float
    max_hops: int

    def __post_init__(self):
        if self.max_delay_ms <= 0 or self.max_throughput_mbps <= 0 or self.max_hops < 1:
            raise ValueError("normalization bounds must be positive")

    @classmethod
    def for_topology(cls, t: Topology) -> "NormalizationBounds":
        """Data-driven bounds: the longest loop-free path's static delay and
        the fastest link set the scales."""
        max_hops = max(t.n_nodes - 1, 1)
        max_delay = max(l.delay_ms for l in t.links) * max_hops
        max_bw = max(l.bandwidth_mbps for l in t.links)
        return cls(max_delay, max_bw, max_hops)


def normalized_metrics(m: PathMetrics, norms: NormalizationBounds) -> tuple[float, float, float, float]:
    x = min(m.throughput_mbps / norms.max_throughput_mbps, 1.0)
    d = min(m.delay_ms / norms.max_delay_ms, 1.0)
    l = min(max(m.loss_ratio, 0.0), 1.0)
    h = min(m.hops / norms.max_hops, 1.0)
    return x, d, l, h


def utility(m: PathMetrics, w: UtilityWeights, norms: NormalizationBounds | None = None) -> float:
    """Linear flow utility. With ``norms`` the metrics are scaled to [0,1]
    first (the agent's view); without, the raw values are combined."""
    if norms is None:
        x, d, l, h = m.throughput_mbps, m.delay_ms, m.loss_ratio, float(m.hops)
    else:
        x, d, l, h = normalized_metrics(m, norms)
    return w.throughput * x - w.delay * d - w.loss * l - w.hops * h


@dataclass(frozen=True)
class RewardConfig:
    """Penalty for broken steps plus the utility definition for good ones."""

    weights: UtilityWeights = field(default_factory=UtilityWeights)
    invalid_penalty: float = -1.0
    norms: NormalizationBounds | None = None

    def __post_init__(self):
        if self.invalid_penalty >= 0:
            raise ValueError("invalid_penalty must be strictly negative")


def reward(step_kind: str, rc: RewardConfig, metrics: PathMetrics | None = None) -> float:
    """Per-step reward: penalty for invalid/loop/timeout, utility at the
    destination, 0 for an ordinary valid step."""
    if step_kind in (STEP_INVALID, STEP_LOOP, STEP_TIMEOUT):
        return rc.invalid_penalty
    if step_kind == STEP_TERMINAL:
        if metrics is None:
            raise ValueError("terminal reward needs the path metrics")
        return utility(metrics, rc.weights, rc.norms)
    if step_kind == STEP_INTERMEDIATE:
        return 0.0
    raise ValueError(f"unknown step kind {step_kind!r}")


class ActionSpace:
    """Routing actions are link ids; masks say which leave a given node."""

    def __init__(self, t: Topology):
        self.topology = t
        self.n_actions = t.n_links
        self.link_src = np.array([l.src for l in t.links])
        self.link_dst = np.array([l.dst for l in t.links])
        # row u: which actions depart node u
        self.departing = np.zeros((t.n_nodes, t.n_links), dtype=bool)
        self.departing[self.link_src, np.arange(t.n_links)] = True

    def walk_mask(self, current: int, visited=None) -> np.ndarray:
        """Actions departing ``current``; with ``visited``, also loop-free."""
        mask = self.departing[current].copy()
        if visited is not None:
            mask &= ~np.isin(self.link_dst, list(visited))
        return mask


def encode_state(
    t: Topology, ls: LinkState, current: int, dest: int, norms: NormalizationBounds
) -> np.ndarray:
    """Feature vector: per-link EWMA delay/loss/throughput blocks scaled to
    [0,1], then one-hot current node and one-hot destination."""
    for node in (current, dest):
        if not 0 <= node < t.n_nodes:
            raise ValueError(f"unknown node {node}")
    e, v = t.n_links, t.n_nodes
    s = np.zeros(3 * e + 2 * v)
    np.clip(ls.ewma_delay_ms / norms.max_delay_ms, 0.0, 1.0, out=s[:e])
    np.clip(ls.ewma_loss, 0.0, 1.0, out=s[e : 2 * e])
    np.clip(ls.ewma_throughput_mbps / norms.max_throughput_mbps, 0.0, 1.0, out=s[2 * e : 3 * e])
    s[3 * e + current] = 1.0
    s[3 * e + v + dest] = 1.0
    return s


def state_dim(t: Topology) -> int:
    return 3 * t.n_links + 2 * t.n_nodes


def decode_current_nodes(t: Topology, states: np.ndarray) -> np.ndarray:
    """Current-node ids back out of encoded states (rows)."""
    e = t.n_links
    block = states[:, 3 * e : 3 * e + t.n_nodes]
    return block.argmax(axis=1)


def select_action(q_values: np.ndarray, valid_mask: np.ndarray | None, epsilon: float, rng) -> int:
    """Epsilon-greedy pick over the valid actions; ``valid_mask=None`` allows
    every action. Greedy ties resolve to the lowest action id."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    q_values = np.asarray(q_values)
    if valid_mask is None:
        candidates = np.arange(len(q_values))
    else:
        if len(valid_mask) != len(q_values):
            raise ValueError("mask length does not match q_values")
        candidates = np.flatnonzero(valid_mask)
        if candidates.size == 0:
            raise ValueError("no valid action to select")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(candidates[rng.integers(candidates.size)])
    masked = q_values[candidates]
    return int(candidates[int(np.argmax(masked))])  # argmax keeps the first of ties


@dataclass
class AgentConfig:
    """DQN hyperparameters. Defaults are the documented reference settings."""

    hidden_sizes: tuple[int, ...] = (128, 128)
    replay_capacity: int = 10_000
    batch_size: int = 64
    discount: float = 0.95
    target_sync_period: int = 250
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5_000
    learning_rate: float = 1e-3
    max_steps: int = 32
    invalid_mode: str = "terminate"  # "terminate" | "continue"
    masked_training: bool = False
    learn_start: int = 500
    train_period: int = 1

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon must stay in [0, 1]")
        if self.invalid_mode not in ("terminate", "continue"):
            raise ValueError("invalid_mode must be 'terminate' or 'continue'")
        if self.max_steps < 1 or self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("max_steps, batch_size and replay_capacity must be >= 1")

    def epsilon_at(self, env_step: int) -> float:
        frac = min(env_step / self.epsilon_decay_steps, 1.0) if self.epsilon_decay_steps else 1.0
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class EpisodeOutcome:
    kind: str  # terminal step kind: "terminal" | "invalid_link" | "loop" | "timeout"
    path: Path | None
    metrics: PathMetrics | None
    rewards: list[float]
    utility: float | None

    @property
    def success(self) -> bool:
        return self.kind == STEP_TERMINAL

    @property
    def steps(self) -> int:
        return len(self.rewards)


def run_episode(
    t: Topology,
    ls: LinkState,
    flow: Flow,
    w: ModelWeights,
    cfg: AgentConfig,
    rc: RewardConfig,
    rng,
    epsilon: float | None = None,
    action_space: ActionSpace | None = None,
) -> tuple[EpisodeOutcome, list[Experience]]:
    """Walk one flow from src toward dst under epsilon-greedy link choices.

    Invalid or loop-closing picks draw the penalty and, in the default
    terminate mode, end the episode (continue mode keeps walking from the
    same node). Step ``max_steps`` without reaching dst is a timeout.
    """
    space = action_space or ActionSpace(t)
    norms = rc.norms or NormalizationBounds.for_topology(t)
    rc = replace(rc, norms=norms)
    eps = cfg.epsilon_start if epsilon is None else epsilon

    if flow.src == flow.dst:
        p = Path((flow.src,), ())
        m = path_metrics(t, ls, p, flow)
        u = utility(m, rc.weights, norms)
        return EpisodeOutcome(STEP_TERMINAL, p, m, [], u), []

    current = flow.src
    visited = {flow.src}
    nodes = [flow.src]
    links: list[int] = []
    experiences: list[Experience] = []
    rewards: list[float] = []
    state = encode_state(t, ls, current, flow.dst, norms)

    for step in range(cfg.max_steps):
        last_step = step == cfg.max_steps - 1
        if cfg.masked_training:
            mask = space.walk_mask(current, visited)
            if not mask.any():  # walked into a dead end
                break
        else:
            mask = None
        action = select_action(forward(w, state), mask, eps, rng)
        link = t.link(action)

        if link.src != current:
            kind = STEP_INVALID
        elif link.dst in visited:
            kind = STEP_LOOP
        else:
            current = link.dst
            visited.add(current)
            nodes.append(current)
            links.append(action)
            if current == flow.dst:
                kind = STEP_TERMINAL
            elif last_step:
                kind = STEP_TIMEOUT
            else:
                kind = STEP_INTERMEDIATE

        metrics = None
        if kind == STEP_TERMINAL:
            metrics = path_metrics(t, ls, Path(tuple(nodes), tuple(links)), flow)
        if kind in (STEP_INVALID, STEP_LOOP) and cfg.invalid_mode == "continue" and last_step:
            kind = STEP_TIMEOUT  # ran out of budget while being penalized
        r = reward(kind, rc, metrics)
        done = kind == STEP_TERMINAL or kind == STEP_TIMEOUT or (
            kind in (STEP_INVALID, STEP_LOOP) and cfg.invalid_mode == "terminate"
        )
        next_state = encode_state(t, ls, current, flow.dst, norms)
        experiences.append(Experience(state, action, r, next_state, done))
        rewards.append(r)
        state = next_state

        if done:
            if kind == STEP_TERMINAL:
                p = Path(tuple(nodes), tuple(links))
                return EpisodeOutcome(kind, p, metrics, rewards, r), experiences
            return EpisodeOutcome(kind, None, None, rewards, None), experiences

    # masked walk dead-ended: charge the step that walked us in, if any
    if experiences:
        last = experiences[-1]
        experiences[-1] = replace(last, reward=rc.invalid_penalty, done=True)
        rewards[-1] = rc.invalid_penalty
    return EpisodeOutcome(STEP_TIMEOUT, None, None, rewards, None), experiences


def train_on_batch(
    w: ModelWeights,
    target_w: ModelWeights,
    batch: list[Experience],
    cfg: AgentConfig,
    space: ActionSpace,
) -> tuple[ModelWeights, float]:
    """One SGD step on the mean squared Bellman error of the batch.

    Targets bootstrap with the best *departing* action at the next node
    (recovered from the stored state encoding); done transitions and dead
    ends bootstrap 0.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    t = space.topology
    states = np.stack([e.state for e in batch])
    next_states = np.stack([e.next_state for e in batch])
    actions = np.array([e.action for e in batch])
    rewards_v = np.array([e.reward for e in batch])
    done = np.array([e.done for e in batch])

    q_next = forward_batch(target_w, next_states)
    next_nodes = decode_current_nodes(t, next_states)
    valid = space.departing[next_nodes]
    q_next = np.where(valid, q_next, -np.inf)
    best_next = q_next.max(axis=1)
    best_next = np.where(np.isfinite(best_next), best_next, 0.0)  # dead ends
    targets = rewards_v + np.where(done, 0.0, cfg.discount * best_next)

    q = forward_batch(w, states)
    rows = np.arange(len(batch))
    picked = q[rows, actions]
    err = picked - targets
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite training loss, run diverged")
    out_grad = np.zeros_like(q)
    out_grad[rows, actions] = 2.0 * err / len(batch)
    grads = backward_batch(w, states, out_grad)
    return sgd_step(w, grads, cfg.learning_rate), loss


class DQNAgent:
    """Replay-buffer DQN bound to one topology. Single-threaded."""

    def __init__(
        self,
        t: Topology,
        cfg: AgentConfig,
        rc: RewardConfig,
        seed,
        weights: ModelWeights | None = None,
    ):
        self.topology = t
        self.cfg = cfg
        norms = rc.norms or NormalizationBounds.for_topology(t)
        self.rc = replace(rc, norms=norms)
        self.space = ActionSpace(t)
        self.rng = np.random.default_rng(seed)
        arch = (state_dim(t), *cfg.hidden_sizes, t.n_links)
        if weights is None:
            weights = init_weights(arch, seed=int(self.rng.integers(2**63)))
        if weights.layer_sizes != arch:
            raise ValueError(f"weights architecture {weights.layer_sizes} != {arch}")
        self.weights = weights
        self.target_weights = weights.copy()
        self.replay: deque[Experience] = deque(maxlen=cfg.replay_capacity)
        self.env_steps = 0
        self.train_steps = 0
        self.last_loss = float("nan")

    @property
    def epsilon(self) -> float:
        return self.cfg.epsilon_at(self.env_steps)

    def set_weights(self, w: ModelWeights) -> None:
        if w.layer_sizes != self.weights.layer_sizes:
            raise ValueError("incompatible architecture")
        self.weights = w.copy()
        self.target_weights = w.copy()

    def run_training_episode(self, ls: LinkState, flow: Flow) -> EpisodeOutcome:
        outcome, experiences = run_episode(
            self.topology,
            ls,
            flow,
            self.weights,
            self.cfg,
            self.rc,
            self.rng,
            epsilon=self.epsilon,
            action_space=self.space,
        )
        for exp in experiences:
            self.replay.append(exp)
            self.env_steps += 1
            if (
                len(self.replay) >= max(self.cfg.learn_start, self.cfg.batch_size)
                and self.env_steps % self.cfg.train_period == 0
            ):
                self._train_once()
        return outcome

    def _train_once(self) -> None:
        idx = self.rng.integers(len(self.replay), size=self.cfg.batch_size)
        batch = [self.replay[int(i)] for i in idx]
        self.weights, self.last_loss = train_on_batch(
            self.weights, self.target_weights, batch, self.cfg, self.space
        )
        self.train_steps += 1
        if self.train_steps % self.cfg.target_sync_period == 0:
            self.target_weights = self.weights.copy()

    def greedy_path(self, ls: LinkState, flow: Flow) -> Path | None:
        return greedy_walk(self.topology, ls, flow, self.weights, self.rc.norms, self.space)


def greedy_walk(
    t: Topology,
    ls: LinkState,
    flow: Flow,
    w: ModelWeights,
    norms: NormalizationBounds,
    space: ActionSpace | None = None,
) -> Path | None:
    """Deployment inference: masked greedy walk, loop-free by construction.

    Returns None when the walk dead-ends before reaching the destination.
    """
    space = space or ActionSpace(t)
    if flow.src == flow.dst:
        return Path((flow.src,), ())
    current = flow.src
    visited = {flow.src}
    nodes = [flow.src]
    links: list[int] = []
    for _ in range(t.n_nodes - 1):
        mask = space.walk_mask(current, visited)
        if not mask.any():
            return None
        q = forward(w, encode_state(t, ls, current, flow.dst, norms))
        q = np.where(mask, q, -np.inf)
        action = int(np.argmax(q))
        current = t.link(action).dst
        visited.add(current)
        nodes.append(current)
        links.append(action)
        if current == flow.dst:
            return Path(tuple(nodes), tuple(links))
    return None


class GreedyRoutingPolicy:
    """RoutingPolicy adapter around fixed weights (deployment inference)."""

    def __init__(self, t: Topology, w: ModelWeights, norms: NormalizationBounds, name: str = "drl"):
        self.topology = t
        self.weights = w
        self.norms = norms
        self.name = name
        self._space = ActionSpace(t)

    def __call__(self, t: Topology, ls: LinkState, flow: Flow) -> Path | None:
        return greedy_walk(t, ls, flow, self.weights, self.norms, self._space)


def train_agent(agent: DQNAgent, flows: list[Flow], episodes: int) -> list[EpisodeOutcome]:
    """Run training episodes over a cycled flow list with slot semantics.

    Successful paths occupy the links for the rest of their slot, so later
    flows in the slot train against the congestion they cause; slots release
    on close, same as the slotted simulator.
    """
    from .netsim import apply_flow, remove_flow  # local import avoids cycle noise

    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    if not flows and episodes:
        raise ValueError("no flows to train on")
    ls = LinkState(agent.topology)
    outcomes: list[EpisodeOutcome] = []
    applied: list[int] = []
    current_slot: int | None = None
    n = len(flows)
    slot_span = flows[-1].arrival_slot + 1 if flows else 1
    for e in range(episodes):
        f = flows[e % n]
        slot = f.arrival_slot + (e // n) * slot_span
        if slot != current_slot:
            for fid in applied:
                remove_flow(ls, fid)
            applied = []
            if current_slot is not None:
                # same telemetry cadence as the slotted simulator, so the
                # agent trains on the state distribution it is deployed on
                for _ in range(min(slot - current_slot, 64)):
                    ls.observe_all()
            current_slot = slot
        episode_flow = replace(f, id=e)
        outcome = agent.run_training_episode(ls, episode_flow)
        if outcome.success:
            apply_flow(ls, outcome.path, episode_flow)
            applied.append(episode_flow.id)
        outcomes.append(outcome)
    return outcomes
