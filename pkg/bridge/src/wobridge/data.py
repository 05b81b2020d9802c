"""Dataset and vocabulary plumbing shared by training, serving, and dumping.

File formats follow the wordorder toolkit: datasets are TSV rows of
space-separated subwords (input TAB target), and the exported vocabulary
reserves ids 0-3 for <s>, </s>, <unk>, <null> in that order.
"""

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
NULL = "<null>"
RESERVED = (BOS, EOS, UNK, NULL)

# word-internal subwords carry a trailing continuation marker
CONT = "_"


def read_dataset(path):
    rows = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{ln}: expected 2 tab-separated columns")
            rows.append((parts[0].split(), parts[1].split()))
    return rows


def build_vocab(rows):
    """Deterministic token list: reserved ids first, then sorted corpus tokens."""
    seen = set()
    for inp, tgt in rows:
        seen.update(inp)
        seen.update(tgt)
    seen -= set(RESERVED)
    return list(RESERVED) + sorted(seen)


class Vocab:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocab")

    def id(self, token):
        return self.index.get(token, self.index[UNK])

    def encode(self, tokens):
        return [self.id(t) for t in tokens]

    def __len__(self):
        return len(self.tokens)

    @property
    def bos_id(self):
        return self.index[BOS]

    @property
    def eos_id(self):
        return self.index[EOS]

    @property
    def unk_id(self):
        return self.index[UNK]

    @property
    def null_id(self):
        return self.index[NULL]


def word_spans(subwords):
    """Span (start, end) per word in a flat marker-carrying subword list."""
    spans = []
    start = 0
    for i, piece in enumerate(subwords):
        if not piece.endswith(CONT):
            spans.append((start, i + 1))
            start = i + 1
    if start != len(subwords):
        spans.append((start, len(subwords)))
    return spans
