"""Command-line entry point wiring the toolkit's experimental recipes.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are the
subcommand's flag names with dashes as underscores); explicit flags override
config values, unknown config keys are rejected, and the resolved config is
logged to stderr. Stochastic steps require an explicit seed.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import constraint_tree as ct
from . import decoder, dep_linearizer, evalkit, plots, probe, scorers, textprep


def _parse_seeds(spec):
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",") if s]


def _parse_int_list(spec):
    return [int(s) for s in spec.split(",") if s]


def _resolve(args, parser_defaults):
    """Merge defaults <- config file <- explicitly provided flags."""
    provided = dict(vars(args))
    provided.pop("func", None)
    config_path = provided.pop("config", None)
    resolved = dict(parser_defaults)
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            cfg = json.load(f)
        unknown = set(cfg) - set(parser_defaults)
        if unknown:
            raise SystemExit(f"error: unknown config keys: {', '.join(sorted(unknown))}")
        resolved.update(cfg)
    resolved.update(provided)
    missing = [k for k, v in resolved.items() if v is _REQUIRED]
    if missing:
        raise SystemExit(f"error: missing required options: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    print("config: " + json.dumps({k: v for k, v in sorted(resolved.items())}), file=sys.stderr)
    return argparse.Namespace(**resolved)


_REQUIRED = object()


class _Sub:
    """Subcommand helper: tracks defaults so config merging can see them."""

    def __init__(self, subparsers, name, help_text):
        self.parser = subparsers.add_parser(name, help=help_text)
        self.parser.add_argument("--config", default=None, help="JSON config file")
        self.defaults = {}

    def arg(self, name, required=False, **kwargs):
        dest = name.lstrip("-").replace("-", "_")
        if kwargs.get("action") in ("store_true",):
            self.defaults[dest] = False
        else:
            self.defaults[dest] = _REQUIRED if required else kwargs.get("default")
        kwargs.pop("default", None)
        self.parser.add_argument(name, default=argparse.SUPPRESS, **kwargs)
        return self

    def run(self, fn):
        defaults = self.defaults

        def wrapper(args):
            return fn(_resolve(args, defaults))

        self.parser.set_defaults(func=wrapper)


# ---------------------------------------------------------------------------
# Shared pipeline pieces

def _load_segmenter(merges_path):
    if not merges_path:
        return lambda w: [w]
    merges = textprep.BpeMerges.load(merges_path)
    return lambda w: textprep.apply_bpe(merges, w)


def _load_scorer(args):
    if getattr(args, "external_scorer", None):
        return scorers.ExternalScorer.from_command(args.external_scorer)
    if getattr(args, "lm", None):
        return scorers.NgramModel.load(
            args.lm,
            smoothing=getattr(args, "smoothing", None) or "kneser_ney",
            discount=getattr(args, "discount", None) or 0.75,
        )
    raise SystemExit("error: need --lm or --external-scorer")


def _scorer_vocab(scorer):
    return scorer.vocab


def _group_words(subwords):
    """Split a flat marker-carrying subword stream into per-word sequences."""
    words = []
    cur = []
    for p in subwords:
        cur.append(p)
        if not p.endswith(textprep.CONT):
            words.append(cur)
            cur = []
    if cur:
        words.append(cur)
    return words


# ---------------------------------------------------------------------------
# Subcommands

def cmd_prep(args):
    sentences = [[textprep.normalize_ptb(t) for t in s] for s in textprep.read_corpus(args.corpus)]
    if args.merges:
        merges = textprep.BpeMerges.load(args.merges)
    else:
        freqs = {}
        for sent in sentences:
            for w in sent:
                freqs[w] = freqs.get(w, 0) + 1
        merges = textprep.learn_bpe(freqs, args.num_merges)
        if args.merges_out:
            merges.save(args.merges_out)
    rows = [(list(s), list(s)) for s in sentences]
    if args.augment:
        rows = textprep.make_augmented(rows, args.augment, args.seed)
    spec = textprep.ShuffleSpec(seed=args.seed, granularity=args.granularity)
    out_rows = []
    for i, (inp_words, tgt_words) in enumerate(rows):
        tgt = [p for w in tgt_words for p in textprep.apply_bpe(merges, w)]
        if args.granularity == "word":
            shuffled = textprep.shuffle(inp_words, spec, salt=i)
            inp = [p for w in shuffled for p in textprep.apply_bpe(merges, w)]
        else:
            flat = [p for w in inp_words for p in textprep.apply_bpe(merges, w)]
            inp = textprep.shuffle(flat, spec, salt=i)
        out_rows.append((inp, tgt))
    textprep.write_dataset(args.out, out_rows)
    print(f"wrote {len(out_rows)} rows to {args.out}")


def cmd_train_lm(args):
    if args.dataset:
        corpus = [tgt for _, tgt in textprep.read_dataset(args.dataset)]
    else:
        corpus = textprep.read_corpus(args.corpus)
    model = scorers.train_ngram(corpus, args.order, smoothing=args.smoothing, discount=args.discount)
    model.save(args.out)
    print(f"trained order-{args.order} {args.smoothing} model on {len(corpus)} sentences -> {args.out}")


def cmd_order(args):
    rows = textprep.read_dataset(args.dataset)
    scorer = _load_scorer(args)
    vocab = _scorer_vocab(scorer)
    config = decoder.DecodeConfig(
        beam_size=args.beam,
        mode=args.mode,
        length_norm=args.length_norm,
        max_len=args.max_len,
        null_input=args.null_input,
    )
    # constraint word sequences exactly as present in the dataset
    side = 1 if args.constraint_from == "target" else 0

    def one(row):
        inp, _ = row
        tree = None
        if config.mode == "constrained":
            seqs = _group_words(row[side])
            tree = ct.build([[vocab.id(p) for p in s] for s in seqs])
        input_ids = [vocab.id(p) for p in inp]
        hyps = decoder.beam_search(input_ids, scorer, config, tree,
                                   bos_id=vocab.bos_id, eos_id=vocab.eos_id, null_id=vocab.null_id)
        pieces = vocab.decode(decoder.output_tokens(hyps[0], bos_id=vocab.bos_id, eos_id=vocab.eos_id))
        return textprep.detokenize(pieces)

    if args.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            outputs = list(pool.map(one, rows))
    else:
        outputs = [one(row) for row in rows]
    with open(args.out, "w", encoding="utf-8") as f:
        for words in outputs:
            f.write(" ".join(words) + "\n")
    if hasattr(scorer, "close"):
        scorer.close()
    print(f"decoded {len(outputs)} sentences -> {args.out}")


def cmd_eval(args):
    hyps = textprep.read_corpus(args.hyps)
    refs = textprep.read_corpus(args.refs)
    report = evalkit.corpus_bleu(hyps, refs)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(evalkit.report_json(report))
    print(f"BLEU = {report.bleu:.2f} (BP={report.brevity_penalty:.3f}, "
          + "/".join(f"{p:.3f}" for p in report.precisions) + ")")


def cmd_errors(args):
    hyps = textprep.read_corpus(args.hyps)
    refs = textprep.read_corpus(args.refs)
    report = evalkit.lexical_errors(hyps, refs, bin_width=args.bin_width)
    prefix = args.out_prefix
    with open(prefix + ".json", "w", encoding="utf-8") as f:
        f.write(evalkit.report_json(report))
    with open(prefix + ".csv", "w", encoding="utf-8") as f:
        f.write(report.to_csv())
    plots.plot_lexical_errors(report, prefix + ".png")
    print(f"missing {report.missing_rate:.4f} redundant {report.redundant_rate:.4f} "
          f"length_ratio {report.length_ratio:.4f} -> {prefix}.{{json,csv,png}}")


def cmd_sensitivity(args):
    refs = textprep.read_corpus(args.corpus)
    dev_set = [(list(r), list(r)) for r in refs]
    scorer = _load_scorer(args)
    vocab = _scorer_vocab(scorer)
    segment = _load_segmenter(args.merges)
    config = decoder.DecodeConfig(beam_size=args.beam, mode="constrained")

    def decode_fn(permuted):
        return evalkit.decode_corpus(permuted, scorer, vocab, config, segment=segment, workers=args.workers)

    seeds = _parse_seeds(args.seeds)
    report = evalkit.sensitivity(dev_set, decode_fn, args.k, seeds)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(evalkit.report_json(report))
    print(report.format())


def cmd_sweep(args):
    refs = textprep.read_corpus(args.corpus)
    dataset = [(list(r), list(r)) for r in refs]
    scorer = _load_scorer(args)
    vocab = _scorer_vocab(scorer)
    segment = _load_segmenter(args.merges)
    mode_map = {m.name: m for m in evalkit.DEFAULT_SWEEP_MODES}
    names = args.modes.split(",") if args.modes else list(mode_map)
    try:
        modes = [mode_map[n] for n in names]
    except KeyError as e:
        raise SystemExit(f"error: unknown sweep mode {e.args[0]!r}; choose from {', '.join(mode_map)}")
    table = evalkit.beam_sweep(dataset, scorer, vocab, _parse_int_list(args.beams),
                               modes=modes, segment=segment, workers=args.workers)
    prefix = args.out_prefix
    with open(prefix + ".txt", "w", encoding="utf-8") as f:
        f.write(evalkit.sweep_table_text(table))
    with open(prefix + ".csv", "w", encoding="utf-8") as f:
        f.write(evalkit.sweep_table_csv(table))
    plots.plot_beam_sweep(table, prefix + ".png")
    print(evalkit.sweep_table_text(table), end="")


def cmd_linearize(args):
    trees = dep_linearizer.read_conll(args.conll)
    segment = _load_segmenter(args.merges)
    rows = []
    for i, tree in enumerate(trees):
        inp = dep_linearizer.serialize_penman(tree, args.mode, shuffle_seed=f"{args.seed}:{i}", segment=segment)
        tgt = [p for w in tree.forms() for p in segment(w)]
        rows.append((inp, tgt))
    textprep.write_dataset(args.out, rows)
    print(f"linearized {len(rows)} trees ({args.mode}) -> {args.out}")


def cmd_sample_partial(args):
    trees = dep_linearizer.read_conll(args.conll)
    segment = _load_segmenter(args.merges)
    cells = (
        [(p, d) for p in (0.0, 0.5, 1.0) for d in (0.0, 0.5, 1.0)]
        if args.grid
        else [(args.p_pos, args.p_dep)]
    )
    for p_pos, p_dep in cells:
        rows = []
        for i, tree in enumerate(trees):
            partial = dep_linearizer.sample_partial(tree, p_pos, p_dep, f"{args.seed}:{i}:{p_pos}:{p_dep}")
            inp = dep_linearizer.serialize_partial(partial, shuffle_seed=f"{args.seed}:{i}", segment=segment)
            tgt = [p for w in tree.forms() for p in segment(w)]
            rows.append((inp, tgt))
        path = f"{args.out_prefix}_p{p_pos:g}_d{p_dep:g}.tsv"
        textprep.write_dataset(path, rows)
        print(f"wrote {path}")


def _probe_config(args):
    return probe.ProbeConfig(rank=args.rank, epochs=args.epochs, batch_size=args.batch_size,
                             lr=args.lr, seed=args.seed)


def cmd_probe_train(args):
    trees = dep_linearizer.read_conll(args.conll)
    sents = probe.load_feature_file(args.features)
    dataset = probe.build_probe_dataset(sents, trees)
    model = probe.train_probe(dataset, _probe_config(args))
    model.save(args.out)
    score = probe.evaluate_probe(model, dataset, trees)
    print(f"loss {probe.probe_loss(model, dataset):.4f} uuas {score:.4f} -> {args.out}")


def cmd_probe_eval(args):
    trees = dep_linearizer.read_conll(args.conll)
    scores = []
    for path in args.features:
        sents = probe.load_feature_file(path)
        dataset = probe.build_probe_dataset(sents, trees)
        if args.model:
            model = probe.ProbeModel.load(args.model)
        else:
            model = probe.train_probe(dataset, _probe_config(args))
        score = probe.evaluate_probe(model, dataset, trees)
        scores.append(score)
        print(f"{path}\tuuas {score:.4f}")
    print(f"average uuas {sum(scores) / len(scores):.4f}")


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="wordorder", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    s = _Sub(subs, "prep", "normalize, BPE-segment, and shuffle a corpus into a dataset")
    s.arg("--corpus", required=True).arg("--out", required=True)
    s.arg("--merges", default=None).arg("--merges-out", default=None)
    s.arg("--num-merges", type=int, default=8000)
    s.arg("--seed", type=int, required=True)
    s.arg("--granularity", choices=("word", "subword"), default="word")
    s.arg("--augment", type=int, default=0)
    s.run(cmd_prep)

    s = _Sub(subs, "train-lm", "train an n-gram language model")
    s.arg("--corpus", default=None).arg("--dataset", default=None)
    s.arg("--order", type=int, default=3)
    s.arg("--smoothing", choices=("mle", "kneser_ney"), default="kneser_ney")
    s.arg("--discount", type=float, default=0.75)
    s.arg("--out", required=True)
    s.run(cmd_train_lm)

    s = _Sub(subs, "order", "decode a dataset with beam search")
    s.arg("--dataset", required=True).arg("--out", required=True)
    s.arg("--lm", default=None).arg("--external-scorer", default=None)
    s.arg("--smoothing", choices=("mle", "kneser_ney"), default="kneser_ney")
    s.arg("--discount", type=float, default=0.75)
    s.arg("--mode", choices=("constrained", "unconstrained"), default="constrained")
    s.arg("--beam", type=int, default=64)
    s.arg("--length-norm", action="store_true")
    s.arg("--null-input", action="store_true")
    s.arg("--max-len", type=int, default=None)
    s.arg("--constraint-from", choices=("input", "target"), default="input")
    s.arg("--workers", type=int, default=1)
    s.run(cmd_order)

    s = _Sub(subs, "eval", "corpus BLEU of hypotheses against references")
    s.arg("--hyps", required=True).arg("--refs", required=True).arg("--out", default=None)
    s.run(cmd_eval)

    s = _Sub(subs, "errors", "lexical-error report with binned CSV and figure")
    s.arg("--hyps", required=True).arg("--refs", required=True)
    s.arg("--bin-width", type=int, default=10)
    s.arg("--out-prefix", required=True)
    s.run(cmd_errors)

    s = _Sub(subs, "sensitivity", "BLEU mean (std) over permuted dev sets")
    s.arg("--corpus", required=True)
    s.arg("--lm", default=None).arg("--external-scorer", default=None)
    s.arg("--smoothing", choices=("mle", "kneser_ney"), default="kneser_ney")
    s.arg("--discount", type=float, default=0.75)
    s.arg("--merges", default=None)
    s.arg("--beam", type=int, default=64)
    s.arg("--k", type=int, default=10)
    s.arg("--seeds", required=True, help="comma list or lo..hi")
    s.arg("--workers", type=int, default=1)
    s.arg("--out", default=None)
    s.run(cmd_sensitivity)

    s = _Sub(subs, "sweep", "BLEU grid over beam sizes and decoding modes")
    s.arg("--corpus", required=True)
    s.arg("--lm", default=None).arg("--external-scorer", default=None)
    s.arg("--smoothing", choices=("mle", "kneser_ney"), default="kneser_ney")
    s.arg("--discount", type=float, default=0.75)
    s.arg("--merges", default=None)
    s.arg("--beams", required=True, help="comma list, e.g. 5,64,512")
    s.arg("--modes", default=None, help="comma list of sweep mode names")
    s.arg("--workers", type=int, default=1)
    s.arg("--out-prefix", required=True)
    s.run(cmd_sweep)

    s = _Sub(subs, "linearize", "dependency trees to PENMAN datasets")
    s.arg("--conll", required=True).arg("--out", required=True)
    s.arg("--mode", choices=dep_linearizer.MODES, default="full")
    s.arg("--seed", type=int, required=True)
    s.arg("--merges", default=None)
    s.run(cmd_linearize)

    s = _Sub(subs, "sample-partial", "partial-tree datasets with sampled features")
    s.arg("--conll", required=True).arg("--out-prefix", required=True)
    s.arg("--p-pos", type=float, default=0.5).arg("--p-dep", type=float, default=0.5)
    s.arg("--grid", action="store_true", help="emit the full 3x3 grid")
    s.arg("--seed", type=int, required=True)
    s.arg("--merges", default=None)
    s.run(cmd_sample_partial)

    s = _Sub(subs, "probe-train", "train a structural probe on feature files")
    s.arg("--features", required=True).arg("--conll", required=True).arg("--out", required=True)
    s.arg("--rank", type=int, default=32).arg("--epochs", type=int, default=30)
    s.arg("--batch-size", type=int, default=40).arg("--lr", type=float, default=1e-3)
    s.arg("--seed", type=int, required=True)
    s.run(cmd_probe_train)

    s = _Sub(subs, "probe-eval", "evaluate (or train-and-evaluate) probes per layer")
    s.arg("--features", nargs="+", required=True).arg("--conll", required=True)
    s.arg("--model", default=None)
    s.arg("--rank", type=int, default=32).arg("--epochs", type=int, default=30)
    s.arg("--batch-size", type=int, default=40).arg("--lr", type=float, default=1e-3)
    s.arg("--seed", type=int, default=0)
    s.run(cmd_probe_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except SystemExit:
        raise
    except (OSError, ValueError, scorers.ScorerError, dep_linearizer.ConllError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
