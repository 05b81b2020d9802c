"""Dependency trees to bracketed (PENMAN-style) token sequences, with child
shuffling and partial-feature sampling for partial tree linearization.

Word forms are segmented by a caller-provided function (BPE in the full
pipeline); POS tags and dependency labels stay atomic. Labels serialize as
":label" atoms. The root is implicit: the top-level group is the root word.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .textprep import CONT, detokenize

MODES = ("base", "brac", "pos", "udep", "ldep", "full")
_NESTED = ("udep", "ldep", "full")


@dataclass
class DepNode:
    form: str
    pos: str | None = None
    head: int | None = None  # 0 for ROOT, 1-based otherwise; None = arc dropped
    label: str | None = None


@dataclass
class DepTree:
    nodes: list  # surface order retained for gold reference

    def __len__(self):
        return len(self.nodes)

    def root_index(self):
        roots = [i for i, n in enumerate(self.nodes) if n.head == 0]
        return roots[0] if roots else None

    def children_of(self, idx):
        return [j for j, n in enumerate(self.nodes) if n.head == idx + 1]

    def forms(self):
        return [n.form for n in self.nodes]


class ConllError(ValueError):
    pass


def parse_conll(text):
    """Parse one CoNLL-style tree: rows "index form pos head label"."""
    nodes = []
    for ln, line in enumerate(text.strip("\n").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t") if "\t" in line else line.split()
        if len(cols) < 5:
            raise ConllError(f"row {ln}: expected 5 columns, got {len(cols)}")
        idx, form, pos, head, label = cols[0], cols[1], cols[2], cols[3], cols[4]
        try:
            idx, head = int(idx), int(head)
        except ValueError:
            raise ConllError(f"row {ln}: non-integer index or head") from None
        if idx != len(nodes) + 1:
            raise ConllError(f"row {ln}: indices must be consecutive from 1")
        nodes.append(DepNode(form=form, pos=pos, head=head, label=label))
    if not nodes:
        raise ConllError("empty tree")
    n = len(nodes)
    roots = 0
    for ln, node in enumerate(nodes, 1):
        if not 0 <= node.head <= n:
            raise ConllError(f"row {ln}: head {node.head} out of range")
        roots += node.head == 0
    if roots != 1:
        raise ConllError(f"expected exactly one root, found {roots}")
    # cycle check: every node must reach the root
    for start in range(n):
        seen = set()
        cur = start
        while nodes[cur].head != 0:
            if cur in seen:
                raise ConllError(f"row {start + 1}: cycle through node {cur + 1}")
            seen.add(cur)
            cur = nodes[cur].head - 1
    return DepTree(nodes=nodes)


def read_conll(path):
    """Blank-line separated trees from a file."""
    trees = []
    with open(path, encoding="utf-8") as f:
        block = []
        for line in f:
            if line.strip():
                block.append(line)
            elif block:
                trees.append(parse_conll("".join(block)))
                block = []
        if block:
            trees.append(parse_conll("".join(block)))
    return trees


def write_conll(path, trees):
    with open(path, "w", encoding="utf-8") as f:
        for tree in trees:
            for i, n in enumerate(tree.nodes, 1):
                f.write(f"{i}\t{n.form}\t{n.pos or '_'}\t{n.head}\t{n.label or '_'}\n")
            f.write("\n")


# ---------------------------------------------------------------------------
# Serialization

def _default_segment(word):
    return [word]


def _perm(items, seed, salt):
    out = list(items)
    random.Random(f"penman:{seed}:{salt}").shuffle(out)
    return out


def serialize_penman(tree, mode, shuffle_seed=0, segment=None):
    """Emit the tree as a token sequence in one of the six feature modes.

    Children of each head (and word order in the flat modes) are shuffled
    with the seed. Raises ValueError when the mode needs annotations the
    tree lacks.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode}")
    segment = segment or _default_segment
    if mode in ("pos", "full") and any(n.pos is None for n in tree.nodes):
        raise ValueError(f"mode {mode} requires POS tags")
    if mode in ("ldep", "full") and any(n.label is None for n in tree.nodes if n.head != 0):
        raise ValueError(f"mode {mode} requires arc labels")

    if mode in _NESTED:
        root = tree.root_index()
        if root is None:
            raise ValueError("nested modes require a rooted tree")
        return _emit_node(tree, root, mode, shuffle_seed, segment)

    order = _perm(range(len(tree.nodes)), shuffle_seed, "flat")
    out = []
    for i in order:
        node = tree.nodes[i]
        sub = segment(node.form)
        if mode == "base":
            out.extend(sub)
        elif mode == "brac":
            out.extend(["(", *sub, ")"])
        else:  # pos
            out.extend(["(", *sub, node.pos, ")"])
    return out


def _emit_node(tree, idx, mode, seed, segment):
    node = tree.nodes[idx]
    out = ["(", *segment(node.form)]
    if mode == "full":
        out.append(node.pos)
    for child in _perm(tree.children_of(idx), seed, idx):
        if mode in ("ldep", "full"):
            out.append(":" + tree.nodes[child].label)
        out.extend(_emit_node(tree, child, mode, seed, segment))
    out.append(")")
    return out


# ---------------------------------------------------------------------------
# Parsing (inverse, for round-trip validation)

@dataclass
class Group:
    form: str
    tag: str | None = None
    children: list = field(default_factory=list)  # (label or None, Group)


def parse_penman(tokens):
    """Recover groups (tree shape, tags, labels up to child order).

    A sequence without brackets is treated as a flat base-mode bag: words are
    rebuilt from the continuation markers and returned as childless groups.
    """
    tokens = list(tokens)
    if "(" not in tokens:
        return [Group(form=w) for w in detokenize(tokens)]
    groups = []
    i = 0
    while i < len(tokens):
        if tokens[i] != "(":
            raise ValueError(f"unbalanced brackets: unexpected {tokens[i]!r} at top level")
        group, i = _parse_group(tokens, i)
        groups.append(group)
    return groups


def _is_atom(tok):
    return tok not in ("(", ")") and not tok.startswith(":")


def _parse_group(tokens, i):
    i += 1  # consume "("
    pieces = []
    while i < len(tokens) and _is_atom(tokens[i]):
        pieces.append(tokens[i])
        i += 1
        if not pieces[-1].endswith(CONT):
            break
    if not pieces:
        raise ValueError("group without a word")
    tag = None
    if i < len(tokens) and _is_atom(tokens[i]):
        tag = tokens[i]
        i += 1
    children = []
    while i < len(tokens) and tokens[i] != ")":
        label = None
        if tokens[i].startswith(":"):
            label = tokens[i][1:]
            i += 1
        if i >= len(tokens) or tokens[i] != "(":
            raise ValueError("expected child group after label")
        child, i = _parse_group(tokens, i)
        children.append((label, child))
    if i >= len(tokens):
        raise ValueError("unbalanced brackets: missing ')'")
    i += 1  # consume ")"
    words = detokenize(pieces)
    return Group(form=words[0] if words else "", tag=tag, children=children), i


def group_canonical(group, with_tags=True, with_labels=True):
    """Order-insensitive nested tuple for comparing parses to trees."""
    kids = sorted(
        (label if with_labels else None, group_canonical(g, with_tags, with_labels))
        for label, g in group.children
    )
    return (group.form, group.tag if with_tags else None, tuple(kids))


def tree_canonical(tree, idx=None, with_tags=True, with_labels=True):
    if idx is None:
        idx = tree.root_index()
    node = tree.nodes[idx]
    kids = sorted(
        (
            node_label if with_labels else None,
            tree_canonical(tree, c, with_tags, with_labels),
        )
        for c, node_label in ((c, tree.nodes[c].label) for c in tree.children_of(idx))
    )
    return (node.form, node.pos if with_tags else None, tuple(kids))


# ---------------------------------------------------------------------------
# Partial tree sampling

def sample_partial(tree, p_pos, p_dep, seed):
    """Independently keep each POS tag with probability p_pos and each
    labeled arc (label and arc jointly) with probability p_dep.

    Dropped arcs detach the child's subtree to the top level. The root's
    attachment is implicit and never sampled.
    """
    rng = random.Random(f"partial:{seed}")
    nodes = []
    for node in tree.nodes:
        pos = node.pos if rng.random() < p_pos else None
        if node.head == 0:
            head, label = 0, None
        elif rng.random() < p_dep:
            head, label = node.head, node.label
        else:
            head, label = None, None
        nodes.append(DepNode(form=node.form, pos=pos, head=head, label=label))
    return DepTree(nodes=nodes)


def serialize_partial(tree, shuffle_seed=0, segment=None):
    """Serialize a (possibly partial) tree: retained arcs nest with labels,
    retained tags attach to their word, and unattached words become
    top-level bracketed groups."""
    segment = segment or _default_segment
    tops = [i for i, n in enumerate(tree.nodes) if n.head in (0, None)]
    out = []
    for i in _perm(tops, shuffle_seed, "tops"):
        out.extend(_emit_partial(tree, i, shuffle_seed, segment))
    return out


def _emit_partial(tree, idx, seed, segment):
    node = tree.nodes[idx]
    out = ["(", *segment(node.form)]
    if node.pos is not None:
        out.append(node.pos)
    for child in _perm(tree.children_of(idx), seed, idx):
        out.append(":" + tree.nodes[child].label)
        out.extend(_emit_partial(tree, child, seed, segment))
    out.append(")")
    return out


def partial_grid(tree, seed):
    """The nine (p_pos, p_dep) inputs of the partial linearization protocol,
    generated deterministically from one seed."""
    grid = {}
    for p_pos in (0.0, 0.5, 1.0):
        for p_dep in (0.0, 0.5, 1.0):
            grid[(p_pos, p_dep)] = sample_partial(tree, p_pos, p_dep, f"{seed}:{p_pos}:{p_dep}")
    return grid
