"""Prefix tree restricting beam-search outputs to exact permutations of the
input word multiset after subword segmentation.

The tree is built once per input and shared across hypotheses. Each node
carries the number of input occurrences passing through it (initial_count)
and the number of words ending at it (terminal_count), so words that are
strict prefixes of other words are handled correctly.

Traversal state is value-semantic. Because identical words can overlap
mid-path (e.g. words {"a", "aab"} segmented over a shared alphabet), a single
cursor is not enough to track every consistent segmentation of the emitted
token stream: a state therefore holds a small set of parse configurations and
advances all of them at once, NFA-style. For unambiguous inputs this set has
exactly one element and behaves like the plain pointer of the single-cursor
scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ROOT = 0


@dataclass
class Node:
    subword: int | None  # None for the root
    children: dict = field(default_factory=dict)  # token id -> node index
    initial_count: int = 0
    terminal_count: int = 0


class ConstraintTree:
    """Immutable after build(); shareable across hypotheses and threads."""

    def __init__(self):
        self.nodes = [Node(subword=None)]

    @property
    def total_subwords(self):
        """Number of subword tokens any complete output must emit."""
        return sum(n.initial_count for n in self.nodes[1:])

    @property
    def total_words(self):
        return sum(n.terminal_count for n in self.nodes)


class ConstraintState:
    """Per-hypothesis traversal state: a set of parse configurations.

    Each configuration is (cursor, remaining counts, remaining terminals),
    with the count tuples parallel to tree.nodes. An empty set marks a dead
    state (an invalid token was consumed).
    """

    __slots__ = ("configs",)

    def __init__(self, configs):
        self.configs = tuple(configs)

    @property
    def is_dead(self):
        return not self.configs

    # single-cursor views for the common unambiguous case
    @property
    def cursor(self):
        return self.configs[0][0]

    @property
    def remaining(self):
        return self.configs[0][1]

    @property
    def remaining_terminals(self):
        return self.configs[0][2]

    @property
    def total_remaining(self):
        # invariant across configurations: every advance decrements exactly one count
        return sum(self.configs[0][1]) if self.configs else 0


def build(word_subword_seqs):
    """Compile a multiset of per-word subword sequences into a ConstraintTree."""
    seqs = [tuple(s) for s in word_subword_seqs]
    if not seqs:
        raise ValueError("empty input")
    tree = ConstraintTree()
    for seq in seqs:
        if not seq:
            raise ValueError("empty subword sequence")
        cur = ROOT
        for tok in seq:
            node = tree.nodes[cur]
            nxt = node.children.get(tok)
            if nxt is None:
                nxt = len(tree.nodes)
                tree.nodes.append(Node(subword=tok))
                node.children[tok] = nxt
            tree.nodes[nxt].initial_count += 1
            cur = nxt
        tree.nodes[cur].terminal_count += 1
    return tree


def initial_state(tree):
    rem = tuple(n.initial_count for n in tree.nodes)
    term = tuple(n.terminal_count for n in tree.nodes)
    return ConstraintState([(ROOT, rem, term)])


def _dec(counts, idx):
    return counts[:idx] + (counts[idx] - 1,) + counts[idx + 1 :]


def _enter(tree, nidx, rem, term):
    """Move into node nidx, consuming one occurrence; auto-terminate when the
    word cannot continue."""
    rem = _dec(rem, nidx)
    node = tree.nodes[nidx]
    viable = any(rem[c] > 0 for c in node.children.values())
    if not viable:
        if term[nidx] > 0:
            return (ROOT, rem, _dec(term, nidx))
        return None  # dead end; unreachable via valid_next tokens
    return (nidx, rem, term)


def valid_next(tree, state):
    """Token ids legal as the next output under any live configuration."""
    out = set()
    for cur, rem, term in state.configs:
        node = tree.nodes[cur]
        for tok, child in node.children.items():
            if rem[child] > 0:
                out.add(tok)
        if cur != ROOT and term[cur] > 0:
            # the current word may terminate here and a new word begin
            for tok, child in tree.nodes[ROOT].children.items():
                if rem[child] > 0:
                    out.add(tok)
    return out


def advance(tree, state, subword):
    """Consume one subword; returns a new state, the original untouched.

    An invalid subword yields a dead state: the caller marks the hypothesis
    finished with probability zero.
    """
    succ = []
    seen = set()
    for cur, rem, term in state.configs:
        node = tree.nodes[cur]
        child = node.children.get(subword)
        if child is not None and rem[child] > 0:
            cfg = _enter(tree, child, rem, term)
            if cfg is not None and cfg not in seen:
                seen.add(cfg)
                succ.append(cfg)
        if cur != ROOT and term[cur] > 0:
            root_child = tree.nodes[ROOT].children.get(subword)
            if root_child is not None and rem[root_child] > 0:
                cfg = _enter(tree, root_child, rem, _dec(term, cur))
                if cfg is not None and cfg not in seen:
                    seen.add(cfg)
                    succ.append(cfg)
    return ConstraintState(succ)


def is_exhausted(tree, state):
    """True iff some configuration consumed every word (cursor back at root,
    all counts zero)."""
    for cur, rem, term in state.configs:
        if cur == ROOT and all(v == 0 for v in rem):
            return True
    return False
