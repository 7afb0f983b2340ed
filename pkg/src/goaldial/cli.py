"""Command-line entry points.

Subcommands cover the whole workflow: ``synth`` writes a corpus and its
knowledge graph, ``train`` fits one model, ``eval`` reports the automatic
metrics for any input-ablation condition, ``chat`` runs a terminal
conversation loop, and ``serve`` starts the HTTP session service.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .corpus import (ablate, build_candidate_pool, corpus_stats,
                     extract_training_examples, load_corpus, save_corpus,
                     split_by_seeker)
from .errors import GoalDialError
from .knowledge import load_graph, save_graph

# seeker-level split used by eval and the training commands; training
# randomness is the separate --seed flag
SPLIT_SEED = 7

CORPUS_FILE = "corpus.jsonl"
GRAPH_FILE = "graph.jsonl"
TAGS_FILE = "tags.json"


def _condition_suffix(drop_goal: bool, drop_knowledge: bool) -> str:
    parts = [""]
    if drop_goal:
        parts.append("nogoal")
    if drop_knowledge:
        parts.append("noknow")
    return "-".join(parts)


def _condition_label(drop_goal: bool, drop_knowledge: bool) -> str:
    return f"{'-' if drop_goal else '+'}gl.{'-' if drop_knowledge else '+'}kg."


def _overrides(args, section: str) -> dict:
    if not args.config:
        return {}
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    sub = data.get(section, {})
    if not isinstance(sub, dict):
        raise SystemExit(f"config section {section!r} must be an object")
    return sub


def _build_config(cls, args, section: str):
    cfg = cls(**_overrides(args, section))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _load_data(corpus_dir):
    base = Path(corpus_dir)
    if not base.is_dir():
        raise SystemExit(f"--corpus {corpus_dir!r} is not a directory")
    graph = load_graph(base / GRAPH_FILE, tags_path=base / TAGS_FILE)
    records = load_corpus(base / CORPUS_FILE)
    return graph, records


def _split_examples(records, split_seed: int):
    splits = split_by_seeker(records, seed=split_seed)
    out = {}
    for name, recs in splits.items():
        out[name] = [e for r in recs for e in extract_training_examples(r)]
    return splits, out


def _maybe_ablate(examples, args):
    if not (args.ablate_goal or args.ablate_knowledge):
        return examples
    return [ablate(e, drop_goal=args.ablate_goal,
                   drop_knowledge=args.ablate_knowledge) for e in examples]


# -- synth ---------------------------------------------------------------------

def _cmd_synth(args) -> int:
    from .synth import SynthConfig, generate_synthetic_corpus

    overrides = _overrides(args, "synth")
    if args.seekers is not None:
        overrides["n_seekers"] = args.seekers
    if args.dialogs_per_seeker is not None:
        overrides["dialogs_per_seeker"] = args.dialogs_per_seeker
    if args.graph_size is not None:
        overrides["graph_size"] = args.graph_size
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = SynthConfig(**overrides)
    graph, records = generate_synthetic_corpus(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(records, out / CORPUS_FILE)
    save_graph(graph, out / GRAPH_FILE, tags_path=out / TAGS_FILE)
    stats = corpus_stats(records)
    print(f"wrote {out / CORPUS_FILE} and {out / GRAPH_FILE}")
    for key, val in stats.items():
        print(f"  {key}: {val}")
    return 0


# -- train ---------------------------------------------------------------------

def _cmd_train(args) -> int:
    graph, records = _load_data(args.corpus)
    split_recs, split_ex = _split_examples(records, args.split_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = _condition_suffix(args.ablate_goal, args.ablate_knowledge)

    if args.model == "planner":
        from .planner import PlannerConfig, evaluate_planner, train_planner
        if args.ablate_goal or args.ablate_knowledge:
            raise SystemExit("ablation flags apply to the responders only")
        cfg = _build_config(PlannerConfig, args, "planner")
        model, history = train_planner(cfg, split_recs["train"], graph,
                                       seed=args.seed)
        path = out / "planner.npz"
        model.save(path)
        dev = evaluate_planner(model, split_recs["dev"], graph)
        print(f"saved {path}")
        print(f"  final epoch: {history[-1]}")
        print(f"  dev: {dev}")
        return 0

    train_ex = _maybe_ablate(split_ex["train"], args)
    # both responders take the graph: it seeds their vocabularies so facts
    # unseen in training text still tokenize at inference time
    if args.model == "ranker":
        from .ranker import RankerConfig, train_ranker
        cfg = _build_config(RankerConfig, args, "ranker")
        model, history = train_ranker(cfg, train_ex, seed=args.seed,
                                      graph=graph)
        path = out / f"ranker{suffix}.npz"
    else:
        from .generator import GeneratorConfig, train_generator
        cfg = _build_config(GeneratorConfig, args, "generator")
        model, history = train_generator(cfg, train_ex, seed=args.seed,
                                         graph=graph)
        path = out / f"generator{suffix}.npz"
    model.save(path)
    print(f"saved {path}")
    print(f"  final epoch: {history[-1]}")
    return 0


# -- eval ----------------------------------------------------------------------

def _eval_pools(test_ex, train_ex):
    bank = sorted({e.response.text for e in train_ex})
    return [build_candidate_pool(e, bank, seed=1000 + i)
            for i, e in enumerate(test_ex)]


def _cmd_eval(args) -> int:
    from .metrics import bleu2, dist2, f1, knowledge_prf
    from .tokenizer import tokenize

    graph, records = _load_data(args.corpus)
    split_recs, split_ex = _split_examples(records, args.split_seed)
    models = Path(args.models)
    suffix = _condition_suffix(args.ablate_goal, args.ablate_knowledge)
    label = _condition_label(args.ablate_goal, args.ablate_knowledge)
    test_ex = _maybe_ablate(split_ex["test"], args)
    want = args.component

    if want in ("all", "planner"):
        from .planner import PlannerModel, evaluate_planner
        path = models / "planner.npz"
        if path.exists():
            model = PlannerModel.load(path)
            res = evaluate_planner(model, split_recs["test"], graph)
            print(f"planner          {res}")
        elif want == "planner":
            raise SystemExit(f"missing {path}")

    pools = None
    if want in ("all", "ranker"):
        from .ranker import RankerModel, evaluate_hits
        path = models / f"ranker{suffix}.npz"
        if path.exists():
            model = RankerModel.load(path)
            pools = _eval_pools(test_ex, split_ex["train"])
            res = evaluate_hits(model, test_ex, pools)
            print(f"ranker  {label} {res}")
        elif want == "ranker":
            raise SystemExit(f"missing {path}")

    if want in ("all", "generator"):
        from .generator import (GeneratorModel, evaluate_perplexity,
                                evaluate_ppl_hits, generate)
        path = models / f"generator{suffix}.npz"
        if not path.exists():
            if want == "generator":
                raise SystemExit(f"missing {path}")
            return 0
        model = GeneratorModel.load(path)
        ppl = evaluate_perplexity(model, test_ex)
        if pools is None:
            pools = _eval_pools(test_ex, split_ex["train"])
        hits = evaluate_ppl_hits(model, test_ex, pools)
        print(f"generator {label} ppl {ppl:.2f} {hits}")
        n = min(args.decode_sample, len(test_ex))
        if n:
            f1s, bleus, hyp_tokens, prf_turns = [], [], [], []
            for ex in test_ex[:n]:
                res = generate(model, ex.context.utterances, ex.knowledge,
                               ex.goal)
                hyp = tokenize(res.text)
                ref = tokenize(ex.response.text)
                f1s.append(f1(hyp, ref))
                bleus.append(bleu2(hyp, ref))
                hyp_tokens.append(hyp)
                prf_turns.append([(res.text, ex.gold_knowledge, ex.knowledge)])
            p, r, kf1 = knowledge_prf(prf_turns)
            print(f"  decode[{n}] f1 {sum(f1s) / n:.3f} "
                  f"bleu2 {sum(bleus) / n:.3f} "
                  f"dist2 {dist2(hyp_tokens):.3f} "
                  f"knowledge P/R/F1 {p:.3f}/{r:.3f}/{kf1:.3f}")
    return 0


# -- chat / serve ----------------------------------------------------------------

def _load_bundle(args, graph, records):
    from .planner import PlannerModel
    from .service import bundle_from_corpus

    models = Path(args.models)
    planner_path = models / "planner.npz"
    if not planner_path.exists():
        raise SystemExit(f"missing {planner_path}")
    planner = PlannerModel.load(planner_path)
    ranker = generator = None
    if (models / "ranker.npz").exists():
        from .ranker import RankerModel
        ranker = RankerModel.load(models / "ranker.npz")
    if (models / "generator.npz").exists():
        from .generator import GeneratorModel
        generator = GeneratorModel.load(models / "generator.npz")
    if ranker is None and generator is None:
        raise SystemExit(f"no responder snapshot under {models}")
    return bundle_from_corpus(graph, records, planner, ranker=ranker,
                              generator=generator, bank_size=args.bank_size,
                              beam=args.beam)


def _print_turn(result) -> None:
    print(f"bot> {result.reply.text}")
    weights = result.knowledge_weights
    ranked = sorted(zip(result.knowledge, weights),
                    key=lambda kw: -kw[1])[:3]
    shown = ", ".join(f"{t.subject}-{t.predicate}-{t.object}"
                      for t, _ in ranked)
    goal = result.goal
    print(f"     [goal {goal.dialog_type.value}:{goal.topic} "
          f"p_done {result.completion_prob:.2f}]"
          + (f" [{shown}]" if shown else ""))


def _cmd_chat(args) -> int:
    from .session import Session

    graph, records = _load_data(args.corpus)
    bundle = _load_bundle(args, graph, records)
    responder = bundle.responders.get(args.model)
    if responder is None:
        raise SystemExit(f"model {args.model!r} not available; "
                         f"choose from {sorted(bundle.responders)}")
    if not 0 <= args.template < len(bundle.templates):
        raise SystemExit(f"--template out of range "
                         f"[0, {len(bundle.templates)})")
    served = bundle.templates[args.template]
    session = Session(bundle.planner, responder, graph, served.profile,
                      served.template)
    print(f"session {session.session_id} with {args.model!r}; "
          "empty line or /quit ends it")
    from .domain import Speaker
    if served.template.initiators[0] is Speaker.RECOMMENDER:
        result = session.open()
        if result is not None:
            _print_turn(result)
    while not session.closed:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line or line == "/quit":
            break
        result = session.message(line)
        _print_turn(result)
    session.close()
    done = sum(e.completed for e in session.goal_events)
    print(f"closed; {done}/{len(session.goal_events)} goals completed")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    graph, records = _load_data(args.corpus)
    bundle = _load_bundle(args, graph, records)
    print(f"serving {sorted(bundle.responders)} on "
          f"http://{args.host}:{args.port} (ratings -> {args.ratings})")
    serve(bundle, args.ratings, host=args.host, port=args.port)
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goaldial",
        description="goal-planned dialog models: data, training, evaluation, "
                    "and serving")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=True):
        p.add_argument("--seed", type=int, default=None,
                       help="training/synthesis RNG seed")
        p.add_argument("--config", default=None,
                       help="JSON file with per-component config overrides")
        if corpus:
            p.add_argument("--corpus", required=True,
                           help="directory holding corpus.jsonl + graph.jsonl")
            p.add_argument("--split-seed", type=int, default=SPLIT_SEED)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p, corpus=False)
    p.add_argument("--seekers", type=int, default=None)
    p.add_argument("--dialogs-per-seeker", type=int, default=None)
    p.add_argument("--graph-size", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train one model on the train split")
    p.add_argument("model", choices=("planner", "ranker", "generator"))
    common(p)
    p.add_argument("--out", required=True, help="snapshot directory")
    p.add_argument("--ablate-goal", action="store_true")
    p.add_argument("--ablate-knowledge", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="automatic metrics on the test split")
    common(p)
    p.add_argument("--models", required=True, help="snapshot directory")
    p.add_argument("--component", default="all",
                   choices=("all", "planner", "ranker", "generator"))
    p.add_argument("--ablate-goal", action="store_true",
                   help="evaluate the goal-less condition (-gl. row)")
    p.add_argument("--ablate-knowledge", action="store_true",
                   help="evaluate the knowledge-less condition (-kg. row)")
    p.add_argument("--decode-sample", type=int, default=50,
                   help="contexts to decode for text metrics (0 disables)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("chat", help="talk to a trained model in the terminal")
    common(p)
    p.add_argument("--models", required=True)
    p.add_argument("--model", default="retrieval",
                   choices=("retrieval", "generation"))
    p.add_argument("--template", type=int, default=0)
    p.add_argument("--bank-size", type=int, default=None)
    p.add_argument("--beam", type=int, default=None)
    p.set_defaults(func=_cmd_chat)

    p = sub.add_parser("serve", help="run the HTTP session service")
    common(p)
    p.add_argument("--models", required=True)
    p.add_argument("--ratings", default="ratings.jsonl")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--bank-size", type=int, default=None)
    p.add_argument("--beam", type=int, default=None)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GoalDialError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
