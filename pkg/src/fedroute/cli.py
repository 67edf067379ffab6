"""Command line entry point.

Subcommands map one-to-one onto the library surface: ``inspect`` prints a
topology summary, ``train``/``evaluate`` handle checkpoints, the two
``study-*`` commands run the experiment harness, and ``export-plots-data``
writes figure-spec JSON for the separate plotting tool. Everything is
scriptable: no prompts, exit 0 on success, 1 on bad input, 2 on runtime
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .agent import DQNAgent, GreedyRoutingPolicy, NormalizationBounds, train_agent
from .federated import FLConfig, evaluate_policy, partition_traffic, run_federated_training
from .harness import (
    Scenario,
    export_results,
    load_scenario,
    resolve_topology,
    run_distributed_control_study,
    run_intelligent_routing_study,
    _endpoint_pairs,
    _make_policy,
    _substream,
    _TAG_DRL_AGENT,
    _TAG_EVAL_TRAFFIC,
    _TAG_FDRL,
    _TAG_TRAIN_TRAFFIC,
)
from .netsim import SaturationError, TrafficPattern, generate_traffic, inject_uniform_loss
from .neural import load_weights, save_weights


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; the contract here is exit 1."""

    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="fedroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, help_text, config=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", required=True, help="scenario JSON file")
            p.add_argument("--seed", type=int, default=None, help="override scenario seeds with one seed")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        return p

    p = sub.add_parser("inspect", help="print a topology summary")
    p.add_argument("--topology", required=True, help="builtin name or topology file")

    add("train", "train the learned policies and save checkpoints")

    p = add("evaluate", "route a scenario's held-out flows and report aggregates")
    p.add_argument("--weights", default=None, help="checkpoint to evaluate as the learned policy")
    p.add_argument("--policy-name", default="drl", help="row label for --weights")

    p = add("study-control", "controller-count sweep study")
    p.add_argument("--jobs", type=int, default=1, help="concurrent seed cells")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = add("study-routing", "policy comparison study (trains DRL/FDRL)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent seed cells")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    add("export-plots-data", "write figure-spec JSON referencing exported results")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"fedroute: error: {e}", file=sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except (_UsageError, ValueError, FileNotFoundError) as e:
        print(f"fedroute: error: {e}", file=sys.stderr)
        return 1
    except (SaturationError, FloatingPointError, OSError, RuntimeError) as e:
        print(f"fedroute: runtime failure: {e}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "inspect":
        return _cmd_inspect(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = _load_scenario(args)
    if args.command == "train":
        return _cmd_train(sc, out)
    if args.command == "evaluate":
        return _cmd_evaluate(sc, out, args.weights, args.policy_name)
    if args.command == "study-control":
        rows = run_distributed_control_study(sc, jobs=args.jobs)
        path = out / f"{sc.name}-control.{args.format}"
        export_results(rows, path, format=args.format)
        print(f"wrote {len(rows)} rows to {path}")
        return 0
    if args.command == "study-routing":
        result = run_intelligent_routing_study(sc, jobs=args.jobs)
        path = out / f"{sc.name}-routing.{args.format}"
        export_results(result.records, path, format=args.format)
        for policy, seed in sorted(result.checkpoints):
            ckpt = out / f"{sc.name}-{policy}-seed{seed}.npz"
            save_weights(result.checkpoints[(policy, seed)], ckpt)
        print(f"wrote {len(result.records)} rows to {path}")
        return 0
    if args.command == "export-plots-data":
        return _cmd_export_plots_data(sc, out)
    raise _UsageError(f"unknown command {args.command!r}")


def _load_scenario(args) -> Scenario:
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    sc = load_scenario(path)
    if args.seed is not None:
        sc = replace(sc, seeds=(args.seed,))
    return sc


def _cmd_inspect(args) -> int:
    t = resolve_topology(args.topology)
    hosts, switches = t.hosts(), t.switches()
    print(
        f"topology {t.name or args.topology}: {t.n_nodes} nodes "
        f"({len(switches)} switches, {len(hosts)} hosts), {t.n_links} links, "
        f"{t.domain_count} domains"
    )
    by_domain: dict[int, list[str]] = {}
    for node, dom in t.domains.items():
        by_domain.setdefault(dom, []).append(t.labels[node])
    for dom in sorted(by_domain):
        print(f"  domain {dom}: {' '.join(sorted(by_domain[dom]))}")
    for h in hosts:
        attached = [t.labels[t.link(lid).dst] for lid in t.out_links[h]]
        print(f"  host {t.labels[h]} -> {' '.join(attached)}")
    return 0


def _scenario_topology(sc: Scenario):
    t = resolve_topology(sc.topology)
    if sc.loss_injection:
        t = inject_uniform_loss(t, sc.loss_injection)
    return t


def _scenario_pattern(sc: Scenario, t) -> TrafficPattern:
    return TrafficPattern(
        kind="fixed_pairs" if sc.pairs is not None else "uniform",
        pairs=tuple(_endpoint_pairs(sc, t)) if sc.pairs is not None else None,
        flows_per_slot=sc.flows_per_slot,
        demand_mbps=sc.demand_mbps,
    )


def _cmd_train(sc: Scenario, out: Path) -> int:
    t = _scenario_topology(sc)
    pattern = _scenario_pattern(sc, t)
    rc = sc.reward_config()
    cfg = sc.agent_config()
    learned = [p for p in sc.policies if p in ("drl", "fdrl")]
    if not learned:
        raise ValueError("scenario lists no learned policy (drl or fdrl); nothing to train")
    for seed in sc.seeds:
        pool = generate_traffic(t, pattern, _substream(seed, _TAG_TRAIN_TRAFFIC), sc.training_pool)
        if "drl" in learned:
            agent = DQNAgent(t, cfg, rc, seed=_substream(seed, _TAG_DRL_AGENT))
            train_agent(agent, pool, sc.training_episodes)
            path = out / f"{sc.name}-drl-seed{seed}.npz"
            save_weights(agent.weights, path)
            print(f"trained drl seed {seed}: {sc.training_episodes} episodes -> {path}")
        if "fdrl" in learned:
            node_flows = partition_traffic(pool, t, sc.fl_node_count)
            fl = FLConfig(sc.fl_rounds, sc.fl_episodes_per_round, sc.fl_node_count)
            log_path = out / f"{sc.name}-fdrl-seed{seed}-rounds.jsonl"
            log_path.unlink(missing_ok=True)
            result = run_federated_training(
                t, node_flows, fl, cfg, rc, seed=_substream(seed, _TAG_FDRL),
                log_path=log_path,
            )
            path = out / f"{sc.name}-fdrl-seed{seed}.npz"
            save_weights(result.final_weights, path)
            print(
                f"trained fdrl seed {seed}: {sc.fl_rounds} rounds x "
                f"{sc.fl_episodes_per_round} episodes -> {path}"
            )
    return 0


def _cmd_evaluate(sc: Scenario, out: Path, weights_path, policy_name: str) -> int:
    t = _scenario_topology(sc)
    pattern = _scenario_pattern(sc, t)
    rc = sc.reward_config()
    norms = NormalizationBounds.for_topology(t)
    seed = sc.seeds[0]
    eval_flows = generate_traffic(t, pattern, _substream(seed, _TAG_EVAL_TRAFFIC), sc.eval_flows)
    candidates = []
    for name in sc.policies:
        if name in ("drl", "fdrl"):
            continue  # learned policies come from --weights here
        candidates.append(_make_policy(name, t, {}, norms))
    if weights_path is not None:
        p = Path(weights_path)
        if not p.exists():
            raise FileNotFoundError(f"weights file not found: {p}")
        candidates.append(GreedyRoutingPolicy(t, load_weights(p), norms, name=policy_name))
    if not candidates:
        raise ValueError("nothing to evaluate: no static policies and no --weights")
    for policy in candidates:
        agg = evaluate_policy(t, policy, eval_flows, rc, seed=seed)
        print(
            f"{policy.name}: routed {agg.routed_count}/{agg.flow_count} "
            f"(success {agg.success_ratio:.2f}), delay {agg.mean_delay_ms:.3f} ms, "
            f"throughput ratio {agg.mean_throughput_ratio:.3f}, "
            f"loss {agg.mean_loss_ratio:.3f}, hops {agg.mean_hops:.2f}, "
            f"utility {agg.mean_utility:.4f}"
        )
    return 0


_FIGURE_KINDS = {
    "control": (
        ("delay_series", ["controller_count"]),
        ("controller_averages", ["controller_count"]),
    ),
    "routing": (("policy_comparison", ["policy"]),),
}


def _cmd_export_plots_data(sc: Scenario, out: Path) -> int:
    import json

    results_csv = out / f"{sc.name}-{sc.kind}.csv"
    if not results_csv.exists():
        raise FileNotFoundError(
            f"results file not found: {results_csv} (run study-{sc.kind} first)"
        )
    for kind, group_by in _FIGURE_KINDS[sc.kind]:
        spec = {
            "kind": kind,
            "inputs": [results_csv.name],
            "output": f"{sc.name}-{kind}.png",
            "group_by": group_by,
        }
        path = out / f"{sc.name}-{kind}.figure.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(spec, fh, indent=2)
            fh.write("\n")
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
