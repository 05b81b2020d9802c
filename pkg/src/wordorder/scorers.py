"""Next-token scorers: a native n-gram language model (unconditional) and a
client for external conditional scorers over a line-delimited JSON protocol.

Every scorer exposes ``next_logprobs(prefix, input_ids)`` returning a dense
natural-log probability vector over its vocabulary (entries may be -inf but
the vector always logsumexps to 0).
"""

from __future__ import annotations

import json
import math
import selectors
import shlex
import socket
import subprocess
from collections import defaultdict

import numpy as np

from .textprep import BOS, EOS, Vocab

PROTOCOL_VERSION = 1


class ScorerError(Exception):
    pass


class UniformScorer:
    """log(1/|V|) everywhere; handy as a protocol reference and in tests."""

    def __init__(self, vocab_size):
        self.vocab_size = vocab_size
        self._vec = np.full(vocab_size, -math.log(vocab_size))

    def next_logprobs(self, prefix, input_ids=None):
        return self._vec


class NgramModel:
    """Count-based n-gram LM with MLE or interpolated Kneser-Ney smoothing.

    Immutable after training; queries are cached per context and safe for
    concurrent readers. The model is unconditional: ``input_ids`` is ignored.
    """

    def __init__(self, order, vocab, smoothing="kneser_ney", discount=0.75):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing not in ("mle", "kneser_ney"):
            raise ValueError(f"unknown smoothing: {smoothing}")
        if smoothing == "kneser_ney" and not (0.0 < discount < 1.0):
            raise ValueError("discount must be in (0, 1)")
        self.order = order
        self.vocab = vocab
        self.smoothing = smoothing
        self.discount = discount
        # raw counts per context length 0..order-1: ctx tuple -> {token: count}
        self.counts = [defaultdict(lambda: defaultdict(int)) for _ in range(order)]
        self._cont = None
        self._cache = {}

    @property
    def vocab_size(self):
        return len(self.vocab)

    # -- training ----------------------------------------------------------

    def _count_sequence(self, ids):
        bos, eos = self.vocab.bos_id, self.vocab.eos_id
        padded = [bos] * (self.order - 1) + list(ids) + [eos]
        start = self.order - 1
        for i in range(start, len(padded)):
            for clen in range(self.order):
                ctx = tuple(padded[i - clen : i])
                self.counts[clen][ctx][padded[i]] += 1

    def _finalize(self):
        # continuation counts for KN lower orders:
        # cont[clen][ctx][w] = |{u : count(u + ctx, w) > 0}|
        self._cont = [defaultdict(lambda: defaultdict(int)) for _ in range(self.order)]
        for clen in range(1, self.order):
            for ctx, toks in self.counts[clen].items():
                for w in toks:
                    self._cont[clen - 1][ctx[1:]][w] += 1
        self._cache = {}

    # -- queries -----------------------------------------------------------

    def _p_kn(self, w, ctx):
        d = self.discount
        table = self.counts[len(ctx)] if len(ctx) == self.order - 1 else self._cont[len(ctx)]
        toks = table.get(ctx)
        if not toks:
            return self._p_kn(w, ctx[1:]) if ctx else 1.0 / self.vocab_size
        total = sum(toks.values())
        num = max(toks.get(w, 0) - d, 0.0) / total
        lam = d * len(toks) / total
        lower = self._p_kn(w, ctx[1:]) if ctx else 1.0 / self.vocab_size
        return num + lam * lower

    def _context(self, prefix):
        ctx = tuple(prefix[-(self.order - 1) :]) if self.order > 1 else ()
        if self.order > 1 and len(ctx) < self.order - 1:
            ctx = (self.vocab.bos_id,) * (self.order - 1 - len(ctx)) + ctx
        return ctx

    def next_logprobs(self, prefix, input_ids=None):
        ctx = self._context(prefix)
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached
        v = self.vocab_size
        if self.smoothing == "mle":
            toks = self.counts[self.order - 1].get(ctx)
            vec = np.full(v, -np.inf)
            if not toks:
                # unseen context: fall back to uniform so the vector stays a
                # distribution (documented MLE fallback)
                vec[:] = -math.log(v)
            else:
                total = sum(toks.values())
                for w, c in toks.items():
                    vec[w] = math.log(c / total)
        else:
            vec = np.array([math.log(self._p_kn(w, ctx)) for w in range(v)])
        vec.setflags(write=False)
        self._cache[ctx] = vec
        return vec

    def logprob(self, token, prefix):
        return float(self.next_logprobs(prefix)[token])

    # -- persistence: sorted plain-text count format -------------------------

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"ngram v1 order={self.order}\n")
            rows = []
            for clen in range(self.order):
                for ctx, toks in self.counts[clen].items():
                    ctx_str = " ".join(self.vocab.token(i) for i in ctx)
                    for w, c in toks.items():
                        rows.append((ctx_str, self.vocab.token(w), c))
            for ctx_str, tok, c in sorted(rows):
                f.write(f"{ctx_str}\t{tok}\t{c}\n")

    @classmethod
    def load(cls, path, smoothing="kneser_ney", discount=0.75):
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 3 or header[0] != "ngram" or header[1] != "v1":
                raise ValueError(f"{path}: not an ngram v1 model file")
            order = int(header[2].split("=", 1)[1])
            rows = []
            vocab = Vocab()
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                ctx_str, tok, c = line.split("\t")
                rows.append((ctx_str.split(), tok, int(c)))
                vocab.add(tok)
                for t in ctx_str.split():
                    vocab.add(t)
        model = cls(order, vocab, smoothing=smoothing, discount=discount)
        for ctx_toks, tok, c in rows:
            ctx = tuple(vocab.id(t) for t in ctx_toks)
            model.counts[len(ctx)][ctx][vocab.id(tok)] += c
        model._finalize()
        return model


def train_ngram(corpus, order, smoothing="kneser_ney", discount=0.75, vocab=None):
    """Train an n-gram model on a corpus of token-string sequences.

    Sequences are padded with (order-1) BOS tokens and closed with one EOS.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if vocab is None:
        vocab = Vocab.from_corpus(corpus)
    model = NgramModel(order, vocab, smoothing=smoothing, discount=discount)
    for sent in corpus:
        model._count_sequence(vocab.encode(sent))
    model._finalize()
    return model


# ---------------------------------------------------------------------------
# External scorer client

class ExternalScorer:
    """Client for the line-delimited JSON scorer protocol.

    One connection serializes requests; request ids are strictly increasing
    and replies are matched by id. Construct via from_command (stdio pipe to
    a child process) or from_socket ("host:port").
    """

    def __init__(self, reader, writer, name, timeout=30.0, proc=None):
        self._reader = reader
        self._writer = writer
        self._name = name
        self._timeout = timeout
        self._proc = proc
        self._next_id = 0
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._reader, selectors.EVENT_READ)
        self._buf = b""
        self.vocab = None
        self._handshake()

    @classmethod
    def from_command(cls, cmd, timeout=30.0):
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(proc.stdout, proc.stdin, name=argv[0], timeout=timeout, proc=proc)

    @classmethod
    def from_socket(cls, endpoint, timeout=30.0):
        host, port = endpoint.rsplit(":", 1)
        sock = socket.create_connection((host, int(port)), timeout=timeout)
        f = sock.makefile("rwb")
        return cls(f, f, name=endpoint, timeout=timeout)

    @property
    def vocab_size(self):
        return len(self.vocab)

    def _readline(self):
        while b"\n" not in self._buf:
            if not self._sel.select(self._timeout):
                raise ScorerError(f"external scorer {self._name}: timeout")
            chunk = self._reader.read1(65536) if hasattr(self._reader, "read1") else self._reader.readline()
            if not chunk:
                raise ScorerError(f"external scorer {self._name}: connection closed")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _request(self, obj):
        rid = self._next_id
        self._next_id += 1
        obj = dict(obj, id=rid)
        try:
            self._writer.write((json.dumps(obj) + "\n").encode("utf-8"))
            self._writer.flush()
        except (BrokenPipeError, OSError) as e:
            raise ScorerError(f"external scorer {self._name}: {e}") from e
        try:
            reply = json.loads(self._readline())
        except json.JSONDecodeError as e:
            raise ScorerError(f"external scorer {self._name}: malformed reply") from e
        if reply.get("id") != rid:
            raise ScorerError(f"external scorer {self._name}: reply id mismatch")
        if "error" in reply:
            raise ScorerError(f"external scorer {self._name}: {reply['error']}")
        return reply

    def _handshake(self):
        reply = self._request({"method": "hello", "version": PROTOCOL_VERSION})
        tokens = reply.get("vocab")
        if not tokens:
            raise ScorerError(f"external scorer {self._name}: empty vocab in handshake")
        try:
            self.vocab = Vocab.from_list(tokens)
        except ValueError as e:
            raise ScorerError(f"external scorer {self._name}: {e}") from e

    def next_logprobs(self, prefix, input_ids=None):
        reply = self._request(
            {
                "method": "next_logprobs",
                "prefix": [int(t) for t in prefix],
                "input": [int(t) for t in (input_ids or [])],
            }
        )
        lp = reply.get("logprobs")
        if lp is None or len(lp) != len(self.vocab):
            raise ScorerError(f"external scorer {self._name}: bad logprobs reply")
        return np.array(lp, dtype=float)

    def close(self):
        try:
            self._sel.close()
            self._writer.close()
            if self._reader is not self._writer:
                self._reader.close()
        except OSError:
            pass
        if self._proc is not None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
