"""Corpus preparation: PTB escape cleanup, BPE segmentation, seeded shuffling,
and permutation-based data augmentation.

All randomness goes through Python's Mersenne Twister (``random.Random``)
seeded with strings of the form ``"{seed}:{granularity}:{salt}"``, which is
platform-independent and pinned by the tests.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
NULL = "<null>"
RESERVED = (BOS, EOS, UNK, NULL)

# Continuation marker: a subword ending in "_" is word-internal, a subword
# without it ends the word ("likes" -> "li_ kes").
CONT = "_"


class Vocab:
    """Bidirectional token/string mapping with fixed reserved ids 0-3."""

    def __init__(self, tokens=()):
        self._tokens = list(RESERVED)
        self._index = {t: i for i, t in enumerate(self._tokens)}
        for t in tokens:
            self.add(t)

    @classmethod
    def from_corpus(cls, sentences):
        v = cls()
        for sent in sentences:
            for tok in sent:
                v.add(tok)
        return v

    @classmethod
    def from_list(cls, tokens):
        """Build from an explicit ordered token list (e.g. a scorer handshake).

        The list must be duplicate-free and is used as-is: reserved tokens are
        not prepended, so external vocabularies control their own layout.
        """
        v = cls.__new__(cls)
        v._tokens = list(tokens)
        v._index = {}
        for i, t in enumerate(v._tokens):
            if t in v._index:
                raise ValueError(f"duplicate token in vocab: {t!r}")
            v._index[t] = i
        if not v._tokens:
            raise ValueError("empty vocab")
        return v

    def add(self, token):
        if token not in self._index:
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
        return self._index[token]

    def id(self, token):
        return self._index.get(token, self._index.get(UNK))

    def token(self, idx):
        return self._tokens[idx]

    def encode(self, tokens):
        return [self.id(t) for t in tokens]

    def decode(self, ids):
        return [self.token(i) for i in ids]

    @property
    def bos_id(self):
        return self._index[BOS]

    @property
    def eos_id(self):
        return self._index[EOS]

    @property
    def unk_id(self):
        return self._index.get(UNK)

    @property
    def null_id(self):
        return self._index.get(NULL)

    @property
    def tokens(self):
        return list(self._tokens)

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index


_PTB_ESCAPES = {
    "-LRB-": "(",
    "-LCB-": "(",
    "-RRB-": ")",
    "-RCB-": ")",
}


def normalize_ptb(token):
    """Reverse PTB punctuation escapes and strip backslashes. Idempotent."""
    token = _PTB_ESCAPES.get(token, token)
    return token.replace("\\", "")


# ---------------------------------------------------------------------------
# BPE

@dataclass
class BpeMerges:
    """Ordered merge rules over marker-carrying symbols."""

    merges: list

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path):
        merges = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                parts = line.split()
                if parts:
                    merges.append((parts[0], parts[1]))
        return cls(merges)


def _char_symbols(word):
    # every non-final char carries the continuation marker
    chars = list(word)
    return [c + CONT for c in chars[:-1]] + [chars[-1]]


def _merge_word(symbols, pair):
    left, right = pair
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            # the left symbol is word-internal, so it ends with the marker
            out.append(left[: -len(CONT)] + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def learn_bpe(word_freqs, num_merges):
    """Greedy most-frequent-pair BPE over a {word: frequency} table.

    Ties are broken by the lexicographically smallest pair so learning is
    deterministic.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    words = {w: _char_symbols(w) for w in word_freqs if w}
    merges = []
    for _ in range(num_merges):
        pairs = {}
        for w, syms in words.items():
            freq = word_freqs[w]
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] = pairs.get((a, b), 0) + freq
        if not pairs:
            break
        top = max(pairs.values())
        best_pair = min(p for p, c in pairs.items() if c == top)
        merges.append(best_pair)
        for w in words:
            words[w] = _merge_word(words[w], best_pair)
    return BpeMerges(merges)


def apply_bpe(merges, word):
    """Segment one word by replaying the learned merges in order."""
    if not word:
        return []
    syms = _char_symbols(word)
    for pair in merges.merges:
        if len(syms) == 1:
            break
        syms = _merge_word(syms, pair)
    return syms


def join_subwords(pieces):
    """Inverse of apply_bpe for a single word."""
    return "".join(p[: -len(CONT)] if p.endswith(CONT) else p for p in pieces)


def detokenize(pieces):
    """Group a flat subword stream back into words via the continuation marker."""
    words = []
    current = []
    for p in pieces:
        current.append(p)
        if not p.endswith(CONT):
            words.append(join_subwords(current))
            current = []
    if current:  # trailing word-internal piece; keep what we have
        words.append(join_subwords(current))
    return words


def segment_words(merges, words):
    """Per-word subword sequences for a sentence."""
    return [apply_bpe(merges, w) for w in words]


# ---------------------------------------------------------------------------
# Shuffling and augmentation

@dataclass(frozen=True)
class ShuffleSpec:
    seed: int
    granularity: str = "word"  # "word" | "subword"

    def __post_init__(self):
        if self.granularity not in ("word", "subword"):
            raise ValueError(f"unknown granularity: {self.granularity}")


def _rng(seed, granularity, salt):
    return random.Random(f"{seed}:{granularity}:{salt}")


def shuffle(tokens, spec, salt=""):
    """Seeded uniform permutation of a token sequence.

    At word granularity the caller passes words (shuffle before BPE); at
    subword granularity the caller passes the segmented stream. ``salt``
    distinguishes sentences within a dataset-level pass.
    """
    out = list(tokens)
    _rng(spec.seed, spec.granularity, salt).shuffle(out)
    return out


def shuffle_dataset(sentences, spec):
    """Shuffle each sentence independently, salted by its index."""
    return [shuffle(sent, spec, salt=i) for i, sent in enumerate(sentences)]


def make_augmented(dataset, k, seed):
    """Emit each (input, target) once plus k copies with fresh input permutations."""
    if k < 0:
        raise ValueError("k must be >= 0")
    out = []
    spec = ShuffleSpec(seed=seed, granularity="word")
    for i, (inp, tgt) in enumerate(dataset):
        out.append((list(inp), tgt))
        for j in range(1, k + 1):
            out.append((shuffle(inp, spec, salt=f"{i}.{j}"), tgt))
    return out


# ---------------------------------------------------------------------------
# File formats

def read_corpus(path):
    """UTF-8 plain text, one tokenized sentence per line."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = line.split()
            if toks:
                sentences.append(toks)
    return sentences


def write_corpus(path, sentences):
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            f.write(" ".join(sent) + "\n")


def read_dataset(path):
    """TSV "input<TAB>target", both sides space-separated subwords."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{ln}: expected 2 tab-separated fields")
            rows.append((parts[0].split(), parts[1].split()))
    return rows


def write_dataset(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for inp, tgt in rows:
            f.write(" ".join(inp) + "\t" + " ".join(tgt) + "\n")
