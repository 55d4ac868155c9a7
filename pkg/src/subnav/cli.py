"""Command-line entry point binding all library operations.

Every subcommand is deterministic given its inputs, flags and --seed, never
mutates its input files, and writes a ``<output>.manifest.json`` next to
each file it produces.  Exit codes: 0 success, 1 validation or input
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, metrics
from .chunker import ChunkingConfig, ChunkingError, chunk_instruction
from .conllu import ConlluError, parse_conllu_file
from .dataset import (ValidationError, concat_to_r4r, corpus_stats,
                      episode_to_dict, load_episodes, normalize_for_training,
                      save_episodes, validate_episode)
from .manifest import RunManifest
from .navgraph import GraphError, load_graph_dir, save_graph
from .neural import load_checkpoint, save_checkpoint
from .plotting import render_trajectory_svg
from .runner import (RolloutConfig, default_params_for, generate_toy_world,
                     rollout, train_toy)

INPUT_FAILURES = (ValidationError, GraphError, ConlluError, ChunkingError,
                  FileNotFoundError, json.JSONDecodeError, ValueError, KeyError)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _manifest(args, **config) -> RunManifest:
    return RunManifest(subcommand=args.command, config=config,
                       seed=getattr(args, "seed", None))


def _write_json(args, payload, manifest: RunManifest, out=None) -> None:
    out = out or args.out
    text = json.dumps(payload, indent=1) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        manifest.write_alongside(out)
        _say(args, f"wrote {out}")
    else:
        _say(args, text.rstrip("\n"))


def _write_table(args, header: list[str], rows: list[list], payload,
                 manifest: RunManifest) -> None:
    """tsv table or structured JSON, to --out or stdout."""
    if args.format == "structured":
        _write_json(args, payload, manifest)
        return
    lines = ["\t".join(header)]
    lines += ["\t".join(_cell(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        manifest.write_alongside(args.out)
        _say(args, f"wrote {args.out}")
    else:
        _say(args, text.rstrip("\n"))


def _cell(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _load_graphs(args):
    if not args.graph_dir:
        raise GraphError("--graph-dir is required for this subcommand")
    graphs = load_graph_dir(args.graph_dir)
    if not graphs:
        raise GraphError(f"no graph files found under {args.graph_dir!r}")
    return graphs


def _graph_for(graphs, scan: str):
    if scan not in graphs:
        raise GraphError(f"no graph for scan {scan!r} under --graph-dir")
    return graphs[scan]


def _load_trajectories(path):
    with open(path, encoding="utf-8") as f:
        records = json.load(f)
    for record in records:
        if "path_id" not in record or "trajectory" not in record:
            raise ValueError(
                "trajectory records need 'path_id' and 'trajectory'")
    return records


def _chunking_config(args) -> ChunkingConfig:
    kwargs = {"min_chunk_words": args.min_words}
    if args.lexicon:
        with open(args.lexicon, encoding="utf-8") as f:
            lex = json.load(f)
        if "action" in lex:
            kwargs["action_lexicon"] = frozenset(
                w.lower() for w in lex["action"])
        if "connective" in lex:
            kwargs["connective_lexicon"] = frozenset(
                w.lower() for w in lex["connective"])
    return ChunkingConfig(**kwargs)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_chunk(args) -> int:
    config = _chunking_config(args)
    manifest = _manifest(args, min_words=args.min_words, lexicon=args.lexicon)
    manifest.add_input(args.conllu)
    parsed_by_id = parse_conllu_file(
        Path(args.conllu).read_text(encoding="utf-8"))
    records = []
    rows = []
    for text_id, parsed in parsed_by_id.items():
        chunks = chunk_instruction(parsed, config)
        records.append({
            "path_id": text_id,
            "instruction": " ".join(parsed.words()),
            "sub_instructions": [list(c.words) for c in chunks],
            "sub_paths": None,
        })
        for c in chunks:
            rows.append([text_id, c.id, " ".join(c.words)])
    _write_table(args, ["instruction", "chunk", "words"], rows, records,
                 manifest)
    return 0


def cmd_validate(args) -> int:
    graphs = load_graph_dir(args.graph_dir) if args.graph_dir else {}
    manifest = _manifest(args, graph_dir=args.graph_dir)
    manifest.add_input(args.episodes)
    episodes = load_episodes(args.episodes, validate=False)
    failures = []
    for ep in episodes:
        try:
            validate_episode(ep, graphs.get(ep.scan))
        except ValidationError as exc:
            failures.append({"path_id": exc.path_id, "rule": exc.rule})
    payload = {"episodes": len(episodes), "valid": not failures,
               "errors": failures}
    rows = [[f["path_id"], f["rule"]] for f in failures]
    _write_table(args, ["path_id", "violation"], rows, payload, manifest)
    if failures:
        print(f"{len(failures)} episode(s) failed validation", file=sys.stderr)
        return 1
    _say(args, f"all {len(episodes)} episodes valid")
    return 0


def cmd_stats(args) -> int:
    manifest = _manifest(args)
    manifest.add_input(args.episodes)
    episodes = load_episodes(args.episodes, validate=not args.no_validate)
    stats = corpus_stats(episodes).as_dict()
    rows = [[k, v] for k, v in stats.items()
            if not isinstance(v, dict)]
    _write_table(args, ["statistic", "value"], rows, stats, manifest)
    return 0


def cmd_eval(args) -> int:
    graphs = _load_graphs(args)
    manifest = _manifest(args, threshold=args.threshold,
                         graph_dir=args.graph_dir)
    manifest.add_input(args.episodes)
    manifest.add_input(args.trajectories)
    episodes = {ep.path_id: ep for ep in load_episodes(args.episodes)}
    records = _load_trajectories(args.trajectories)
    results = []
    confusion = metrics.ShiftConfusion()
    have_shifts = False
    for record in records:
        episode = episodes.get(record["path_id"])
        if episode is None:
            raise ValidationError(record["path_id"], "no matching episode")
        result = metrics.evaluate_episode(
            _graph_for(graphs, episode.scan), record["trajectory"], episode,
            args.threshold)
        results.append(result)
        for shift in record.get("shifts") or []:
            have_shifts = True
            confusion.add(int(shift["predicted"]), int(shift["ground_truth"]))
    aggregate = metrics.aggregate_results(results)
    payload = {"results": [r.as_dict() for r in results],
               "aggregate": aggregate}
    rows = [[r.path_id, r.pl, r.ne, int(r.oracle_success), int(r.success),
             r.spl, r.ndtw] for r in results]
    rows.append(["MEAN", aggregate["pl"], aggregate["ne"], aggregate["osr"],
                 aggregate["sr"], aggregate["spl"], aggregate["ndtw"]])
    if have_shifts:
        payload["shift_confusion"] = {
            "counts": {"tp": confusion.tp, "tn": confusion.tn,
                       "fp": confusion.fp, "fn": confusion.fn},
            "rates": metrics.confusion_stats(confusion),
        }
    _write_table(args, ["path_id", "pl", "ne", "osr", "sr", "spl", "ndtw"],
                 rows, payload, manifest)
    return 0


def cmd_shift_report(args) -> int:
    manifest = _manifest(args)
    manifest.add_input(args.trajectories)
    records = _load_trajectories(args.trajectories)
    confusion = metrics.ShiftConfusion()
    for record in records:
        for shift in record.get("shifts") or []:
            confusion.add(int(shift["predicted"]), int(shift["ground_truth"]))
    if confusion.total == 0:
        print("no shift records found", file=sys.stderr)
        return 1
    rates = metrics.confusion_stats(confusion)
    payload = {"counts": {"tp": confusion.tp, "tn": confusion.tn,
                          "fp": confusion.fp, "fn": confusion.fn},
               "rates": rates}
    rows = [["tp", confusion.tp], ["tn", confusion.tn],
            ["fp", confusion.fp], ["fn", confusion.fn]] + \
           [[k, v] for k, v in rates.items()]
    _write_table(args, ["measure", "value"], rows, payload, manifest)
    return 0


def cmd_cluster(args) -> int:
    manifest = _manifest(args, k=args.k, mode=args.mode)
    manifest.add_input(args.results)
    with open(args.results, encoding="utf-8") as f:
        raw = json.load(f)
    records = [analysis.SubInstructionResult(
        key=r["key"], words=tuple(r["words"]),
        end_distance=float(r["end_distance"]), ndtw=float(r["ndtw"]),
        viewpoint_span=int(r["viewpoint_span"])) for r in raw]
    matrix = analysis.similarity_matrix([list(r.words) for r in records])
    assignment = analysis.complete_linkage_cluster(matrix, args.k)
    summaries = analysis.cluster_summary(assignment, records, matrix)
    rows = [[s.rank, s.mean_distance, s.mean_ndtw, s.frequency,
             s.mean_viewpoints, s.representative] for s in summaries]
    _write_table(args,
                 ["rank", "mean_distance", "mean_ndtw", "frequency",
                  "mean_viewpoints", "representative"],
                 rows, [s.as_dict() for s in summaries], manifest)
    return 0


def cmd_rollout(args) -> int:
    graphs = _load_graphs(args)
    manifest = _manifest(args, mode=args.mode, shift=args.shift,
                         threshold=args.threshold, max_steps=args.max_steps,
                         checkpoint=args.checkpoint,
                         graph_dir=args.graph_dir)
    manifest.add_input(args.checkpoint)
    manifest.add_input(args.episodes)
    params = load_checkpoint(args.checkpoint)
    episodes = load_episodes(args.episodes)
    if args.normalize:
        episodes = [normalize_for_training(ep) for ep in episodes]
    config = RolloutConfig(
        action_forcing=args.mode, shift_forcing=args.shift,
        shift_threshold=args.threshold, max_steps=args.max_steps,
        seed=args.seed)
    trajectories = []
    results_records = []
    for ep in episodes:
        result = rollout(ep, _graph_for(graphs, ep.scan), params, config)
        trajectories.append({
            "path_id": ep.path_id,
            "trajectory": result.trajectory,
            "terminated_by": result.terminated_by,
            "shifts": [{
                "step": ev.step,
                "predicted": ev.predicted,
                "ground_truth": ev.ground_truth,
                "probability": ev.probability,
                "sub_idx": ev.sub_idx,
            } for ev in result.shift_events],
        })
        if args.results_out:
            results_records.extend(
                r.__dict__ | {"words": list(r.words)}
                for r in analysis.subinstruction_results(
                    _graph_for(graphs, ep.scan), ep, result.trajectory,
                    result.shift_events, mode=args.segmentation))
    _write_json(args, trajectories, manifest)
    if args.results_out:
        _write_json(args, results_records, manifest, out=args.results_out)
    return 0


def cmd_train_toy(args) -> int:
    graph, episodes = generate_toy_world(args.seed, args.nodes,
                                         args.n_episodes)
    params = default_params_for(episodes, seed=args.seed)
    curve = train_toy(episodes, {graph.scan: graph}, params,
                      epochs=args.epochs, lr=args.lr, seed=args.seed)
    manifest = _manifest(args, epochs=args.epochs, lr=args.lr,
                         nodes=args.nodes, n_episodes=args.n_episodes)
    save_checkpoint(params, args.out)
    manifest.write_alongside(args.out)
    _say(args, f"wrote {args.out}")
    curve_payload = {
        "epoch_losses": curve.epoch_losses,
        "heldout_f1": curve.heldout_f1,
        "train_ids": curve.train_ids,
        "heldout_ids": curve.heldout_ids,
    }
    _write_json(args, curve_payload, manifest,
                out=str(args.out) + ".curve.json")
    if args.world_dir:
        world = Path(args.world_dir)
        world.mkdir(parents=True, exist_ok=True)
        graph_path = world / f"{graph.scan}.json"
        save_graph(graph, graph_path)
        manifest.write_alongside(graph_path)
        episodes_path = world / f"{graph.scan}_episodes.json"
        save_episodes(episodes, episodes_path)
        manifest.write_alongside(episodes_path)
        _say(args, f"wrote world files under {world}")
    _say(args, f"final epoch loss {curve.epoch_losses[-1]:.4f}, "
               f"held-out shift F1 {curve.heldout_f1[-1]:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .neural import grad_check
    from .runner import gradcheck_bundle

    params, loss_fn, grads_fn = gradcheck_bundle(seed=args.seed)
    errors = grad_check(params, loss_fn, grads_fn, epsilon=args.epsilon)
    rows = [[name, err] for name, err in sorted(errors.items())]
    manifest = _manifest(args, epsilon=args.epsilon)
    _write_table(args, ["parameter_group", "max_relative_error"], rows,
                 errors, manifest)
    worst = max(errors.values())
    _say(args, f"worst group error {worst:.3e} (threshold {args.threshold})")
    return 0 if worst < args.threshold else 1


def cmd_gen_toy(args) -> int:
    graph, episodes = generate_toy_world(args.seed, args.nodes,
                                         args.n_episodes)
    manifest = _manifest(args, nodes=args.nodes, n_episodes=args.n_episodes)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    graph_path = out_dir / f"{graph.scan}.json"
    save_graph(graph, graph_path)
    manifest.write_alongside(graph_path)
    episodes_path = out_dir / f"{graph.scan}_episodes.json"
    save_episodes(episodes, episodes_path)
    manifest.write_alongside(episodes_path)
    _say(args, f"wrote {graph_path} and {episodes_path}")
    return 0


def cmd_plot(args) -> int:
    graphs = _load_graphs(args)
    manifest = _manifest(args, graph_dir=args.graph_dir)
    manifest.add_input(args.episodes)
    manifest.add_input(args.trajectories)
    episodes = {ep.path_id: ep for ep in load_episodes(args.episodes)}
    records = _load_trajectories(args.trajectories)
    out_dir = Path(args.out or "plots")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for record in records:
        episode = episodes.get(record["path_id"])
        if episode is None:
            raise ValidationError(record["path_id"], "no matching episode")
        document = render_trajectory_svg(
            _graph_for(graphs, episode.scan), episode, record["trajectory"],
            record.get("shifts") or [])
        target = out_dir / f"{episode.path_id}.svg"
        target.write_text(document, encoding="utf-8")
        manifest.write_alongside(target)
        written.append(str(target))
    _say(args, f"wrote {len(written)} plot(s) under {out_dir}")
    return 0


def cmd_r4r_concat(args) -> int:
    graphs = _load_graphs(args)
    manifest = _manifest(args, graph_dir=args.graph_dir, limit=args.limit)
    manifest.add_input(args.episodes)
    episodes = load_episodes(args.episodes)
    joined = []
    for first in episodes:
        for second in episodes:
            if first.path_id == second.path_id or first.scan != second.scan:
                continue
            graph = _graph_for(graphs, first.scan)
            try:
                joined.append(concat_to_r4r(first, second, graph))
            except ValidationError:
                continue
            if args.limit and len(joined) >= args.limit:
                break
        if args.limit and len(joined) >= args.limit:
            break
    if not joined:
        print("no concatenable episode pairs found", file=sys.stderr)
        return 1
    _write_json(args, [episode_to_dict(ep) for ep in joined], manifest)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(sub, graph_dir=False, out=True):
    sub.add_argument("--seed", type=int, default=0,
                     help="seed for all randomness in this subcommand")
    sub.add_argument("--format", choices=["tsv", "structured"], default="tsv")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress informational output")
    if graph_dir:
        sub.add_argument("--graph-dir", help="directory of <scan>.json graphs")
    if out:
        sub.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subnav",
        description="Sub-instruction aware navigation toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    chunk = commands.add_parser(
        "chunk", help="split parsed instructions into sub-instructions")
    chunk.add_argument("--conllu", required=True,
                       help="dependency annotations (CoNLL-U)")
    chunk.add_argument("--min-words", type=int, default=3)
    chunk.add_argument("--lexicon",
                       help='JSON {"action": [...], "connective": [...]}')
    _common(chunk)
    chunk.set_defaults(handler=cmd_chunk)

    validate = commands.add_parser(
        "validate", help="check episode alignment invariants")
    validate.add_argument("--episodes", required=True)
    _common(validate, graph_dir=True)
    validate.set_defaults(handler=cmd_validate)

    stats = commands.add_parser("stats", help="corpus statistics")
    stats.add_argument("--episodes", required=True)
    stats.add_argument("--no-validate", action="store_true")
    _common(stats)
    stats.set_defaults(handler=cmd_stats)

    evaluate = commands.add_parser(
        "eval", help="trajectory metrics against reference episodes")
    evaluate.add_argument("--episodes", required=True)
    evaluate.add_argument("--trajectories", required=True)
    evaluate.add_argument("--threshold", type=float, default=3.0)
    _common(evaluate, graph_dir=True)
    evaluate.set_defaults(handler=cmd_eval)

    shift_report = commands.add_parser(
        "shift-report", help="aggregate shift-prediction confusion")
    shift_report.add_argument("--trajectories", required=True)
    _common(shift_report)
    shift_report.set_defaults(handler=cmd_shift_report)

    cluster = commands.add_parser(
        "cluster", help="cluster sub-instructions and summarize performance")
    cluster.add_argument("--results", required=True,
                         help="per-sub-instruction result records (JSON)")
    cluster.add_argument("-k", type=int, default=100)
    cluster.add_argument("--mode", choices=["predicted", "ground_truth"],
                         default="predicted")
    _common(cluster)
    cluster.set_defaults(handler=cmd_cluster)

    roll = commands.add_parser("rollout", help="run the agent on episodes")
    roll.add_argument("--checkpoint", required=True)
    roll.add_argument("--episodes", required=True)
    roll.add_argument("--mode", choices=["teacher", "student"],
                      default="student")
    roll.add_argument("--shift", choices=["teacher", "predicted"],
                      default="predicted")
    roll.add_argument("--threshold", type=float, default=0.5,
                      help="shift probability threshold")
    roll.add_argument("--max-steps", type=int, default=20)
    roll.add_argument("--results-out",
                      help="also write per-sub-instruction trace records")
    roll.add_argument("--segmentation",
                      choices=["predicted", "ground_truth"],
                      default="predicted")
    roll.add_argument("--normalize", action="store_true",
                      help="merge single-viewpoint sub-instructions before "
                           "rolling out (training-style supervision)")
    _common(roll, graph_dir=True)
    roll.set_defaults(handler=cmd_rollout)

    train = commands.add_parser(
        "train-toy", help="train the reference agent on a synthetic world")
    train.add_argument("--epochs", type=int, default=200)
    train.add_argument("--lr", type=float, default=0.05)
    train.add_argument("--nodes", type=int, default=10)
    train.add_argument("--n-episodes", type=int, default=40)
    train.add_argument("--world-dir",
                       help="also write the generated graph and episodes here")
    _common(train)
    train.set_defaults(handler=cmd_train_toy)
    train.set_defaults(out_required=True)

    gradcheck = commands.add_parser(
        "gradcheck", help="finite-difference verification of gradients")
    gradcheck.add_argument("--epsilon", type=float, default=1e-5)
    gradcheck.add_argument("--threshold", type=float, default=1e-4)
    _common(gradcheck)
    gradcheck.set_defaults(handler=cmd_gradcheck)

    gen = commands.add_parser("gen-toy", help="generate a synthetic world")
    gen.add_argument("--nodes", type=int, default=10)
    gen.add_argument("--n-episodes", type=int, default=20)
    _common(gen)
    gen.set_defaults(handler=cmd_gen_toy)

    plot = commands.add_parser(
        "plot", help="render trajectory SVGs")
    plot.add_argument("--episodes", required=True)
    plot.add_argument("--trajectories", required=True)
    _common(plot, graph_dir=True)
    plot.set_defaults(handler=cmd_plot)

    concat = commands.add_parser(
        "r4r-concat", help="concatenate episode pairs within 3 m")
    concat.add_argument("--episodes", required=True)
    concat.add_argument("--limit", type=int, default=0,
                        help="stop after this many joined episodes (0 = all)")
    _common(concat, graph_dir=True)
    concat.set_defaults(handler=cmd_r4r_concat)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--quiet", action="store_true")
    serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out_required", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        return args.handler(args)
    except INPUT_FAILURES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
