"""Evaluation: corpus BLEU, lexical-error analysis, permutation-sensitivity
harness, and beam-size sweeps.

BLEU here is case-sensitive, single-reference, 4-gram, corpus-level, with no
smoothing: a zero precision at any order yields BLEU 0, which keeps toy tests
predictable.
"""

from __future__ import annotations

import json
import math
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import constraint_tree as ct
from . import decoder, textprep

MAX_ORDER = 4


@dataclass
class BleuReport:
    bleu: float
    precisions: list
    brevity_penalty: float
    hyp_length: int
    ref_length: int

    def to_dict(self):
        return {
            "bleu": self.bleu,
            "precisions": self.precisions,
            "brevity_penalty": self.brevity_penalty,
            "hyp_length": self.hyp_length,
            "ref_length": self.ref_length,
        }


@dataclass
class LexicalErrorReport:
    missing_rate: float
    redundant_rate: float
    length_ratio: float
    bins: dict  # bin start -> {"missing": ..., "redundant": ..., "length_ratio": ..., "ref_words": ...}
    bin_width: int

    def to_dict(self):
        return {
            "missing_rate": self.missing_rate,
            "redundant_rate": self.redundant_rate,
            "length_ratio": self.length_ratio,
            "bin_width": self.bin_width,
            "bins": {str(k): v for k, v in sorted(self.bins.items())},
        }

    def to_csv(self):
        lines = ["bin_start,missing_rate,redundant_rate,length_ratio,ref_words"]
        for start, row in sorted(self.bins.items()):
            lines.append(
                f"{start},{row['missing']:.6f},{row['redundant']:.6f},"
                f"{row['length_ratio']:.6f},{row['ref_words']}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class SensitivityReport:
    bleus: list
    mean: float
    std: float  # population standard deviation
    seeds: list = field(default_factory=list)

    def format(self):
        return f"{self.mean:.2f} ({self.std:.3f})"

    def to_dict(self):
        return {"bleus": self.bleus, "mean": self.mean, "std": self.std, "seeds": self.seeds}


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hyps, refs):
    """4-gram corpus BLEU with clipped counts and brevity penalty, in [0, 100]."""
    if len(hyps) != len(refs):
        raise ValueError(f"length mismatch: {len(hyps)} hyps vs {len(refs)} refs")
    if not hyps:
        raise ValueError("empty corpus")
    matched = [0] * MAX_ORDER
    total = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            total[n - 1] += sum(hyp_counts.values())
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    precisions = [m / t if t else 0.0 for m, t in zip(matched, total)]
    bp = 1.0 if hyp_len >= ref_len else (math.exp(1 - ref_len / hyp_len) if hyp_len else 0.0)
    if any(p == 0.0 for p in precisions):
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len)


def lexical_errors(hyps, refs, bin_width=10):
    """Multiset missing/redundant word rates, normalized by reference words,
    with a per-reference-length-bin breakdown."""
    if len(hyps) != len(refs):
        raise ValueError(f"length mismatch: {len(hyps)} hyps vs {len(refs)} refs")
    agg = Counter()  # (bin, kind) -> count
    for hyp, ref in zip(hyps, refs):
        b = (len(ref) // bin_width) * bin_width
        ref_c, hyp_c = Counter(ref), Counter(hyp)
        agg[(b, "missing")] += sum((ref_c - hyp_c).values())
        agg[(b, "redundant")] += sum((hyp_c - ref_c).values())
        agg[(b, "ref")] += len(ref)
        agg[(b, "hyp")] += len(hyp)
    bins = {}
    tot = Counter()
    for b in sorted({k[0] for k in agg}):
        ref_words = agg[(b, "ref")]
        bins[b] = {
            "missing": agg[(b, "missing")] / ref_words if ref_words else 0.0,
            "redundant": agg[(b, "redundant")] / ref_words if ref_words else 0.0,
            "length_ratio": agg[(b, "hyp")] / ref_words if ref_words else 0.0,
            "ref_words": ref_words,
        }
        for kind in ("missing", "redundant", "ref", "hyp"):
            tot[kind] += agg[(b, kind)]
    ref_total = tot["ref"] or 1
    return LexicalErrorReport(
        missing_rate=tot["missing"] / ref_total,
        redundant_rate=tot["redundant"] / ref_total,
        length_ratio=tot["hyp"] / ref_total,
        bins=bins,
        bin_width=bin_width,
    )


# ---------------------------------------------------------------------------
# Decoding harness

def decode_corpus(inputs, scorer, vocab, config, segment=None, workers=1):
    """Decode a list of word sequences; returns word sequences.

    Each input sentence is a list of words; ``segment`` maps a word to its
    subword pieces (identity by default). Outputs are detokenized back to
    words and returned in input order.
    """
    segment = segment or (lambda w: [w])

    def one(words):
        seqs = [segment(w) for w in words]
        tree = ct.build([[vocab.id(p) for p in s] for s in seqs]) if config.mode == "constrained" else None
        input_ids = [vocab.id(p) for s in seqs for p in s]
        hyps = decoder.beam_search(
            input_ids,
            scorer,
            config,
            tree,
            bos_id=vocab.bos_id,
            eos_id=vocab.eos_id,
            null_id=vocab.null_id,
        )
        if not hyps:
            return []
        pieces = vocab.decode(decoder.output_tokens(hyps[0], bos_id=vocab.bos_id, eos_id=vocab.eos_id))
        return textprep.detokenize(pieces)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, inputs))
    return [one(words) for words in inputs]


def sensitivity(dev_set, decode_fn, k, seeds):
    """Decode k permuted copies of the dev set and report BLEU mean and
    population standard deviation.

    ``dev_set`` is a list of (input words, reference words); ``decode_fn``
    maps a list of permuted input sentences to a list of hypothesis word
    sequences.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    seeds = list(seeds)
    if len(seeds) != k:
        raise ValueError(f"need {k} seeds, got {len(seeds)}")
    refs = [ref for _, ref in dev_set]
    bleus = []
    for seed in seeds:
        spec = textprep.ShuffleSpec(seed=seed, granularity="word")
        permuted = [textprep.shuffle(inp, spec, salt=i) for i, (inp, _) in enumerate(dev_set)]
        hyps = decode_fn(permuted)
        bleus.append(corpus_bleu(hyps, refs).bleu)
    mean = statistics.fmean(bleus)
    std = statistics.pstdev(bleus)
    return SensitivityReport(bleus=bleus, mean=mean, std=std, seeds=seeds)


@dataclass(frozen=True)
class SweepMode:
    name: str
    mode: str = "constrained"
    null_input: bool = False
    length_norm: bool = False


DEFAULT_SWEEP_MODES = (
    SweepMode("cond-constrained", "constrained"),
    SweepMode("cond-unconstrained", "unconstrained", length_norm=True),
    SweepMode("uncond-constrained", "constrained", null_input=True),
)


def beam_sweep(dataset, scorer, vocab, beams, modes=DEFAULT_SWEEP_MODES, segment=None, workers=1):
    """BLEU per (beam size, mode) over a dataset of (input words, reference)."""
    table = {}
    inputs = [inp for inp, _ in dataset]
    refs = [ref for _, ref in dataset]
    for beam in beams:
        for m in modes:
            config = decoder.DecodeConfig(
                beam_size=beam, mode=m.mode, null_input=m.null_input, length_norm=m.length_norm
            )
            hyps = decode_corpus(inputs, scorer, vocab, config, segment=segment, workers=workers)
            table[(beam, m.name)] = corpus_bleu(hyps, refs).bleu
    return table


def sweep_table_text(table):
    beams = sorted({b for b, _ in table})
    modes = sorted({m for _, m in table})
    width = max(len(m) for m in modes) + 2
    lines = ["mode".ljust(width) + "".join(f"B={b}".rjust(10) for b in beams)]
    for m in modes:
        lines.append(m.ljust(width) + "".join(f"{table[(b, m)]:10.2f}" for b in beams))
    return "\n".join(lines) + "\n"


def sweep_table_csv(table):
    lines = ["beam,mode,bleu"]
    for (beam, mode), bleu in sorted(table.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        lines.append(f"{beam},{mode},{bleu:.4f}")
    return "\n".join(lines) + "\n"


def report_json(report):
    return json.dumps(report.to_dict(), indent=2) + "\n"
