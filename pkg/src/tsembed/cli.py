"""Command-line surface for the full pipeline.

Commands: train-hdp, label, train-emb, nn, eval-scws, eval-lexsub,
make-synthetic, convert-lexsub. Every run resolves its flags into a
manifest (JSON with input digests and the tool version); commands that
write files put it next to their primary output, query commands print it.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .corpus import Vocabulary, build_vocab, load_corpus
from .embeddings import (EmbeddingModel, TrainConfig, VARIANTS, load_model,
                         nearest_neighbors, train)
from .evaluation import (SCORERS, LexsubResult, eval_lexsub, eval_scws,
                         load_lexsub, load_scws, mann_whitney, save_lexsub)
from .hdp import (HdpConfig, TopicModel, label_corpus, load_labeling,
                  load_doc_topics, save_doc_topics, save_labeling, train_hdp)
from .synthetic import build_lda_corpus, build_lexsub_benchmark, build_pseudo_corpus

POS_ORDER = ("n.", "v.", "adj.", "adv.")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _manifest(args: argparse.Namespace, inputs: list[str], outputs: list[str]) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    return {
        "tool": "tsembed",
        "version": __version__,
        "command": args.command,
        "flags": flags,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": outputs,
    }


def _emit_manifest(args: argparse.Namespace, inputs: list[str], outputs: list[str]) -> None:
    """Write the manifest next to the primary output, or print it when the
    command produced no file."""
    man = _manifest(args, inputs, outputs)
    if outputs:
        path = outputs[0] + ".manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        print("manifest: " + json.dumps(man, sort_keys=True))


def _get_vocab(args: argparse.Namespace, corpus_path: str) -> Vocabulary:
    """Load the vocabulary file, or build it from the corpus (and save it)
    when the file does not exist yet."""
    if os.path.exists(args.vocab):
        vocab = Vocabulary.load(args.vocab)
        print(f"loaded vocabulary: {len(vocab)} types from {args.vocab}")
        return vocab
    min_count = getattr(args, "min_count", 5)
    with open(corpus_path, encoding="utf-8") as fh:
        vocab = build_vocab(fh, min_count=min_count)
    vocab.save(args.vocab)
    print(f"built vocabulary: {len(vocab)} types (min_count={min_count}) -> {args.vocab}")
    return vocab


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train_hdp(args: argparse.Namespace) -> int:
    vocab = _get_vocab(args, args.corpus)
    corpus = load_corpus(args.corpus, vocab)
    if args.subset is not None:
        if args.subset < 1:
            raise ValueError("--subset must be >= 1")
        corpus.documents = corpus.documents[:args.subset]
    config = HdpConfig(gamma=args.gamma, alpha0=args.alpha0, eta=args.eta,
                       max_topics=args.max_topics)
    step = max(1, args.iters // 10)

    def report(state):
        if (state.iteration + 1) % step == 0 or state.iteration == 0:
            print(f"iteration {state.iteration + 1}/{args.iters}: {state.n_topics} topics")

    model = train_hdp(corpus, config, iterations=args.iters, seed=args.seed,
                      prune_threshold=args.prune, on_iteration=report)
    model.save(args.model)
    print(f"trained topic model: K={model.n_topics}, |V|={model.vocab_size} -> {args.model}")
    _emit_manifest(args, [args.corpus, args.vocab], [args.model, args.vocab])
    return 0


def cmd_label(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab)
    model = TopicModel.load(args.model)
    corpus = load_corpus(args.corpus, vocab)
    want_theta = args.doc_topics is not None
    result = label_corpus(model, corpus, seed=args.seed, sweeps=args.sweeps,
                          burn_in=args.burn_in, want_doc_topics=want_theta)
    labels, thetas = result if want_theta else (result, None)
    save_labeling(args.labeling, corpus, labels)
    outputs = [args.labeling]
    if want_theta:
        save_doc_topics(args.doc_topics, thetas)
        outputs.append(args.doc_topics)
    n_tokens = sum(len(z) for z in labels)
    print(f"labeled {len(labels)} documents ({n_tokens} tokens, K={model.n_topics}) -> {args.labeling}")
    _emit_manifest(args, [args.corpus, args.vocab, args.model], outputs)
    return 0


def cmd_train_emb(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.variant in ("htle", "htleadd") and args.labeling is None:
        parser.error(f"--variant {args.variant} requires --labeling")
    if args.variant == "stle" and args.doc_topics is None:
        parser.error("--variant stle requires --doc-topics")
    vocab = _get_vocab(args, args.corpus)
    corpus = load_corpus(args.corpus, vocab)
    n_topics = args.num_topics
    if args.hdp_model is not None:
        hdp = TopicModel.load(args.hdp_model)
        if hdp.vocab_size != len(vocab):
            raise ValueError(f"topic model vocabulary size {hdp.vocab_size} "
                             f"does not match vocabulary {len(vocab)}")
        if n_topics is None:
            n_topics = hdp.n_topics
    labeling = None
    doc_topics = None
    inputs = [args.corpus, args.vocab]
    if args.variant in ("htle", "htleadd"):
        lab_corpus, labeling = load_labeling(args.labeling, vocab)
        if len(lab_corpus.documents) != len(corpus.documents):
            raise ValueError("labeling and corpus have different document counts")
        for doc, lab_doc in zip(corpus.documents, lab_corpus.documents):
            if not np.array_equal(doc.tokens, lab_doc.tokens):
                raise ValueError(f"labeling does not match corpus at document {doc.doc_id}")
        inputs.append(args.labeling)
    elif args.variant == "stle":
        doc_topics = load_doc_topics(args.doc_topics, n_topics=n_topics)
        if doc_topics.shape[0] != len(corpus.documents):
            raise ValueError("doc-topics file and corpus have different document counts")
        inputs.append(args.doc_topics)
    if args.hdp_model is not None:
        inputs.append(args.hdp_model)
    config = TrainConfig(dim=args.dim, window=args.window, negatives=args.negatives,
                         epochs=args.epochs, learning_rate=args.lr, seed=args.seed,
                         variant=args.variant, stle_top_m=args.stle_top_m,
                         subsample=args.subsample, negative_power=args.neg_power,
                         threads=args.threads)
    model = train(corpus, labeling=labeling, doc_topics=doc_topics, config=config,
                  n_topics=n_topics)
    model.save(args.model)
    losses = ", ".join(f"{x:.1f}" for x in model.epoch_losses)
    print(f"trained {args.variant} model: dim={model.dim}, K={model.n_topics} -> {args.model}")
    print(f"epoch losses: {losses}")
    outputs = [args.model]
    if args.text is not None:
        model.save_text(args.text)
        outputs.append(args.text)
    _emit_manifest(args, inputs, outputs)
    return 0


def cmd_nn(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    model = load_model(args.model)
    if model.variant != "sge" and args.topic is None:
        parser.error(f"--topic is required for variant {model.variant}")
    word_id = model.word_id(args.word)
    topic_info = None if model.variant == "sge" else args.topic
    for name, sim in nearest_neighbors(model, word_id, topic_info, k=args.k):
        print(f"{name}\t{sim:.6f}")
    _emit_manifest(args, [args.model], [])
    return 0


def cmd_eval_scws(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    vocab = Vocabulary.load(args.vocab)
    hdp = TopicModel.load(args.hdp_model) if args.hdp_model else None
    if len(vocab) != model.vocab_size:
        raise ValueError(f"vocabulary size {len(vocab)} does not match model {model.vocab_size}")
    instances = load_scws(args.dataset)
    result = eval_scws(model, hdp, vocab, instances, sweeps=args.sweeps,
                       burn_in=args.burn_in, seed=args.seed)
    print(f"instances: {result.n_instances}  oov pairs: {result.n_oov}")
    print(f"spearman rho = {result.rho:.12f}")
    inputs = [args.model, args.vocab, args.dataset]
    if args.hdp_model:
        inputs.append(args.hdp_model)
    outputs = []
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            for inst, sys_score in zip(instances, result.system_scores):
                fh.write(json.dumps({"id": inst.instance_id, "system": sys_score,
                                     "human": inst.human_score}) + "\n")
        outputs.append(args.json)
    _emit_manifest(args, inputs, outputs)
    return 0


def _print_lexsub_report(result: LexsubResult) -> None:
    n = len(result.instances)
    print(f"scorer: {result.scorer}")
    print(f"overall GAP = {result.overall_gap:.12f} over {n} instances"
          + (f" ({result.fallback_count} lexicographic fallbacks)" if result.fallback_count else ""))
    print("pos     gap       n")
    for pos in POS_ORDER:
        if pos in result.pos_gap:
            mean, count = result.pos_gap[pos]
            print(f"{pos:<7} {mean:.4f}  {count:>4}")


def _compare_runs(result: LexsubResult, compare_paths: list[str]) -> None:
    ours = {r.instance_id: r.gap for r in result.instances}
    for path in compare_paths:
        theirs = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if "instance_id" in rec:
                    theirs[rec["instance_id"]] = rec["gap"]
        shared = sorted(set(ours) & set(theirs))
        if not shared:
            print(f"vs {os.path.basename(path)}: no shared instances")
            continue
        mw = mann_whitney([ours[i] for i in shared], [theirs[i] for i in shared])
        marker = mw.marker() or "-"
        print(f"vs {os.path.basename(path)}: U={mw.u:.1f} p={mw.p:.4f} ({mw.method}) {marker}")


def cmd_eval_lexsub(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    vocab = Vocabulary.load(args.vocab)
    hdp = TopicModel.load(args.hdp_model) if args.hdp_model else None
    if len(vocab) != model.vocab_size:
        raise ValueError(f"vocabulary size {len(vocab)} does not match model {model.vocab_size}")
    dataset = load_lexsub(args.dataset)
    if dataset.dropped_multiword or dataset.dropped_instances:
        print(f"dropped {dataset.dropped_multiword} multiword substitutes, "
              f"{dataset.dropped_instances} instances with empty gold")
    result = eval_lexsub(model, hdp, vocab, dataset.instances, scorer=args.scorer,
                         eval_window=args.eval_window, sweeps=args.sweeps,
                         burn_in=args.burn_in, seed=args.seed,
                         reuse_target_topic=args.reuse_target_topic)
    _print_lexsub_report(result)
    if args.compare:
        _compare_runs(result, args.compare)
    inputs = [args.model, args.vocab, args.dataset]
    if args.hdp_model:
        inputs.append(args.hdp_model)
    inputs.extend(args.compare or [])
    outputs = []
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            for rec in result.instances:
                fh.write(json.dumps({"instance_id": rec.instance_id, "pos": rec.pos,
                                     "gap": rec.gap, "fallback": rec.fallback}) + "\n")
        outputs.append(args.json)
    _emit_manifest(args, inputs, outputs)
    return 0


def cmd_make_synthetic(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    corpus_path = os.path.join(args.out, "corpus.txt")
    meta_path = os.path.join(args.out, "meta.json")
    if args.kind == "pseudo":
        data = build_pseudo_corpus(n_docs=args.docs, seed=args.seed)
        with open(corpus_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(data.lines) + "\n")
        instances = build_lexsub_benchmark(data, seed=args.seed + 1)
        lexsub_path = os.path.join(args.out, "lexsub.tsv")
        save_lexsub(lexsub_path, instances)
        for domain in ("a", "b"):
            with open(os.path.join(args.out, f"domain-{domain}.txt"), "w",
                      encoding="utf-8") as fh:
                fh.write("\n".join(data.domain_words[domain]) + "\n")
        meta = {
            "kind": "pseudo",
            "pseudoword": data.pseudoword,
            "sources": data.sources,
            "n_docs": len(data.lines),
            "domain_of_doc": data.domain_of_doc,
            "params": data.params,
        }
        outputs = [corpus_path, lexsub_path,
                   os.path.join(args.out, "domain-a.txt"),
                   os.path.join(args.out, "domain-b.txt"), meta_path]
        print(f"pseudo-sense corpus: {len(data.lines)} documents, "
              f"pseudoword {data.pseudoword!r}, {len(instances)} lexsub instances -> {args.out}")
    else:
        data = build_lda_corpus(n_docs=args.docs, vocab_size=args.vocab_size,
                                doc_len=args.doc_len, n_topics=args.topics,
                                seed=args.seed)
        with open(corpus_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(data.lines) + "\n")
        meta = {"kind": "lda", "words": data.words, "phi": data.phi.tolist(),
                "n_docs": len(data.lines)}
        outputs = [corpus_path, meta_path]
        print(f"admixture corpus: {len(data.lines)} documents, "
              f"{args.topics} topics -> {args.out}")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit_manifest(args, [], outputs)
    return 0


_POS_MAP = {"n": "n.", "v": "v.", "a": "adj.", "j": "adj.", "r": "adv."}


def cmd_convert_lexsub(args: argparse.Namespace) -> int:
    """Convert the original lexsub distribution (preprocessed sentences +
    gold file) into the canonical TSV."""
    contexts = {}
    with open(args.preprocessed, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{args.preprocessed}:{lineno}: expected 4 tab-separated "
                                 f"fields, got {len(parts)}")
            target_pos, iid, idx_str, sentence = parts
            lemma, _, pos_letter = target_pos.rpartition(".")
            pos = _POS_MAP.get(pos_letter)
            if pos is None:
                raise ValueError(f"{args.preprocessed}:{lineno}: unknown pos in {target_pos!r}")
            contexts[(target_pos, iid)] = (lemma, pos, int(idx_str), sentence.lower())
    rows = []
    with open(args.gold, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            head, sep, subs_str = line.partition("::")
            if not sep:
                raise ValueError(f"{args.gold}:{lineno}: missing '::' separator")
            head_parts = head.split()
            if len(head_parts) != 2:
                raise ValueError(f"{args.gold}:{lineno}: malformed head {head!r}")
            target_pos, iid = head_parts
            key = (target_pos, iid)
            if key not in contexts:
                raise ValueError(f"{args.gold}:{lineno}: no sentence for {target_pos} {iid}")
            gold = []
            for item in subs_str.split(";"):
                item = item.strip()
                if not item:
                    continue
                sub, _, w_str = item.rpartition(" ")
                if not sub or not w_str.isdigit():
                    raise ValueError(f"{args.gold}:{lineno}: malformed substitute {item!r}")
                gold.append(f"{sub.lower()}:{int(w_str)}")
            if not gold:
                continue
            lemma, pos, idx, sentence = contexts[key]
            rows.append("\t".join([iid, lemma, pos, str(idx), sentence, ";".join(gold)]))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    print(f"converted {len(rows)} instances -> {args.out}")
    _emit_manifest(args, [args.preprocessed, args.gold], [args.out])
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsembed",
        description="Topic-sensitive word embeddings: train, label, embed, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-hdp", help="train the topic model on a corpus")
    p.add_argument("corpus", help="one document per line")
    p.add_argument("--model", required=True, help="output topic model file")
    p.add_argument("--vocab", required=True,
                   help="vocabulary TSV; built from the corpus if missing")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--alpha0", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--max-topics", type=int, default=500)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--prune", type=float, default=1e-4,
                   help="drop topics below this final token share")
    p.add_argument("--subset", type=int, default=None,
                   help="train on the first N documents only")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_train_hdp)

    p = sub.add_parser("label", help="label a corpus with a trained topic model")
    p.add_argument("corpus")
    p.add_argument("--model", required=True, help="topic model file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--labeling", required=True, help="output word|topic file")
    p.add_argument("--doc-topics", default=None, help="also write doc-topic distributions")
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--burn-in", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-emb", help="train an embedding model")
    p.add_argument("corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True, help="output embedding model file")
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--labeling", default=None, help="word|topic file (htle, htleadd)")
    p.add_argument("--doc-topics", default=None, help="doc-topic file (stle)")
    p.add_argument("--hdp-model", default=None,
                   help="topic model file; pins the topic count and validates the vocabulary")
    p.add_argument("--num-topics", type=int, default=None)
    p.add_argument("--text", default=None, help="also write a text export")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--stle-top-m", type=int, default=10)
    p.add_argument("--subsample", type=float, default=1e-4)
    p.add_argument("--neg-power", type=float, default=0.75)
    p.add_argument("--threads", type=int, default=1,
                   help="training threads; >1 is fast but not reproducible")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=lambda a, _p=p: cmd_train_emb(a, _p))

    p = sub.add_parser("nn", help="nearest neighbors of a word (or word#topic)")
    p.add_argument("--model", required=True, help="embedding model file")
    p.add_argument("--word", required=True)
    p.add_argument("--topic", type=int, default=None)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=lambda a, _p=p: cmd_nn(a, _p))

    p = sub.add_parser("eval-scws", help="similarity-in-context evaluation")
    p.add_argument("dataset", help="canonical similarity TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--hdp-model", default=None)
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--burn-in", type=int, default=5)
    p.add_argument("--json", default=None, help="write per-instance scores as JSON lines")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_eval_scws)

    p = sub.add_parser("eval-lexsub", help="lexical substitution evaluation")
    p.add_argument("dataset", help="canonical lexsub TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--hdp-model", default=None)
    p.add_argument("--scorer", required=True, choices=SCORERS)
    p.add_argument("--eval-window", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--burn-in", type=int, default=5)
    p.add_argument("--reuse-target-topic", action="store_true",
                   help="sampled scorer: reuse the target's topic for the substitute")
    p.add_argument("--json", default=None, help="write per-instance GAPs as JSON lines")
    p.add_argument("--compare", action="append", default=None,
                   help="JSON-lines file from another run; adds a significance test")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_eval_lexsub)

    p = sub.add_parser("make-synthetic", help="generate synthetic corpora and benchmarks")
    p.add_argument("--kind", required=True, choices=("pseudo", "lda"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--docs", type=int, default=None)
    p.add_argument("--vocab-size", type=int, default=30, help="lda only")
    p.add_argument("--doc-len", type=int, default=100, help="lda only")
    p.add_argument("--topics", type=int, default=3, help="lda only")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("convert-lexsub",
                       help="convert an original lexsub distribution to the canonical TSV")
    p.add_argument("--preprocessed", required=True,
                   help="tab-separated: target.pos, id, target index, tokenized sentence")
    p.add_argument("--gold", required=True, help="gold file with :: separated substitutes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert_lexsub)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "make-synthetic" and args.docs is None:
        args.docs = 4200 if args.kind == "pseudo" else 200
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
