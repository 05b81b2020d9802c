"""Structural probe: a rank-k linear map whose squared bilinear distance
approximates dependency-tree path lengths, trained with an L1 objective,
plus MST decoding and undirected attachment scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class ProbeConfig:
    rank: int = 32
    epochs: int = 30
    batch_size: int = 40
    lr: float = 1e-3
    seed: int = 0


class ProbeModel:
    """Distance d(i, j) = ||B (h_i - h_j)||^2 for a learned (rank x dim) B."""

    def __init__(self, b):
        self.b = np.asarray(b, dtype=float)

    @property
    def rank(self):
        return self.b.shape[0]

    @property
    def dim(self):
        return self.b.shape[1]

    def distances(self, features):
        proj = features @ self.b.T  # (n, k)
        diff = proj[:, None, :] - proj[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    def save(self, path):
        np.savez(path, b=self.b)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            return cls(data["b"])


def word_features(subword_vectors, word_spans):
    """Average subword vectors over word spans; spans must partition [0, T)."""
    vectors = np.asarray(subword_vectors, dtype=float)
    expected = 0
    for start, end in word_spans:
        if start != expected or end <= start:
            raise ValueError(f"spans must partition the subword range; bad span ({start}, {end})")
        expected = end
    if expected != len(vectors):
        raise ValueError(f"spans cover {expected} subwords, features have {len(vectors)}")
    return np.stack([vectors[s:e].mean(axis=0) for s, e in word_spans])


def tree_distances(tree):
    """Pairwise shortest-path edge counts in the undirected dependency tree."""
    n = len(tree.nodes)
    adj = [[] for _ in range(n)]
    for i, node in enumerate(tree.nodes):
        if node.head and node.head > 0:
            h = node.head - 1
            adj[i].append(h)
            adj[h].append(i)
    dist = np.full((n, n), -1, dtype=int)
    for src in range(n):
        dist[src, src] = 0
        queue = [src]
        while queue:
            nxt = []
            for u in queue:
                for v in adj[u]:
                    if dist[src, v] < 0:
                        dist[src, v] = dist[src, u] + 1
                        nxt.append(v)
            queue = nxt
    return dist


def _loss_and_grad(b, features, gold):
    """Per-sentence L1 loss (1/n^2) sum |gold - pred| and its gradient in B."""
    n = len(features)
    proj = features @ b.T
    diff = proj[:, None, :] - proj[None, :, :]  # (n, n, k)
    pred = np.einsum("ijk,ijk->ij", diff, diff)
    resid = pred - gold
    loss = np.abs(resid).sum() / (n * n)
    sign = np.sign(resid) / (n * n)
    u = features[:, None, :] - features[None, :, :]  # (n, n, d)
    grad = 2.0 * np.einsum("ij,ijk,ijd->kd", sign, diff, u)
    return loss, grad


def train_probe(dataset, config=None):
    """Minimize the normalized per-sentence L1 distance loss with Adam.

    ``dataset`` is a list of (word feature matrix, gold distance matrix)
    pairs. Deterministic given the config seed.
    """
    config = config or ProbeConfig()
    if not dataset:
        raise ValueError("empty dataset")
    dim = dataset[0][0].shape[1]
    if not 1 <= config.rank <= dim:
        raise ValueError(f"need feature dim >= rank >= 1, got dim={dim} rank={config.rank}")
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(dim)
    b = rng.uniform(-bound, bound, size=(config.rank, dim))
    m = np.zeros_like(b)
    v = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros_like(b)
            loss = 0.0
            for i in batch:
                feats, gold = dataset[i]
                l, g = _loss_and_grad(b, feats, gold)
                loss += l
                grad += g
            grad /= len(batch)
            loss /= len(batch)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite probe loss at epoch {epoch} step {step}: {loss}"
                )
            step += 1
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            mhat = m / (1 - beta1**step)
            vhat = v / (1 - beta2**step)
            b = b - config.lr * mhat / (np.sqrt(vhat) + eps)
    return ProbeModel(b)


def probe_loss(model, dataset):
    total = 0.0
    for feats, gold in dataset:
        l, _ = _loss_and_grad(model.b, feats, gold)
        total += l
    return total / len(dataset)


def mst(dist):
    """Minimum spanning tree over the complete graph of a symmetric distance
    matrix; Kruskal with ties broken by (weight, min endpoint, max endpoint)."""
    dist = np.asarray(dist)
    n = len(dist)
    if n < 2:
        return set()
    edges = sorted(
        (float(dist[i, j]), i, j) for i in range(n) for j in range(i + 1, n)
    )
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = set()
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            out.add((i, j))
            if len(out) == n - 1:
                break
    return out


def gold_edges(tree):
    return {
        tuple(sorted((i, node.head - 1)))
        for i, node in enumerate(tree.nodes)
        if node.head and node.head > 0
    }


def uuas(pred_edges, gold):
    """Undirected attachment score of predicted edges against a gold tree
    (or an explicit gold edge set)."""
    gold_set = gold if isinstance(gold, set) else gold_edges(gold)
    if not gold_set:
        return 1.0
    pred = {tuple(sorted(e)) for e in pred_edges}
    return len(pred & gold_set) / len(gold_set)


def corpus_uuas(pred_edge_sets, gold_trees):
    """Micro-averaged over edges across the corpus."""
    correct = total = 0
    for pred, tree in zip(pred_edge_sets, gold_trees):
        gold = gold_edges(tree) if not isinstance(tree, set) else tree
        pred = {tuple(sorted(e)) for e in pred}
        correct += len(pred & gold)
        total += len(gold)
    return correct / total if total else 1.0


def evaluate_probe(model, dataset, gold_trees):
    """Decode MSTs from probe distances and score corpus UUAS."""
    preds = [mst(model.distances(feats)) for feats, _ in dataset]
    return corpus_uuas(preds, gold_trees)


# ---------------------------------------------------------------------------
# Feature files (line-delimited JSON, one object per sentence)

def load_feature_file(path):
    """Returns a list of dicts with id, vectors (np array), word_spans."""
    out = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            vectors = np.asarray(obj["vectors"], dtype=float)
            if vectors.ndim != 2 or vectors.shape[1] != obj["subword_dims"]:
                raise ValueError(f"{path}:{ln}: vector shape does not match subword_dims")
            out.append(
                {
                    "id": obj["id"],
                    "vectors": vectors,
                    "word_spans": [tuple(s) for s in obj["word_spans"]],
                }
            )
    return out


def save_feature_file(path, sentences):
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            obj = {
                "id": int(sent["id"]),
                "subword_dims": int(np.asarray(sent["vectors"]).shape[1]),
                "vectors": np.asarray(sent["vectors"]).tolist(),
                "word_spans": [list(s) for s in sent["word_spans"]],
            }
            f.write(json.dumps(obj) + "\n")


def build_probe_dataset(feature_sents, gold_trees):
    """Pair feature-file sentences with gold trees into (features, distances)."""
    if len(feature_sents) != len(gold_trees):
        raise ValueError(
            f"feature/gold mismatch: {len(feature_sents)} sentences vs {len(gold_trees)} trees"
        )
    dataset = []
    for sent, tree in zip(feature_sents, gold_trees):
        feats = word_features(sent["vectors"], sent["word_spans"])
        if len(feats) != len(tree.nodes):
            raise ValueError(f"sentence {sent['id']}: {len(feats)} words vs {len(tree.nodes)} gold nodes")
        dataset.append((feats, tree_distances(tree).astype(float)))
    return dataset


def probe_report(models, gold_trees, config=None):
    """Per-model averaged UUAS across layer feature files.

    ``models`` is a list of (name, [feature file paths, one per layer]).
    Trains one probe per layer and averages layer scores per model; the
    report includes deltas against the first model.
    """
    config = config or ProbeConfig()
    results = {}
    for name, layer_files in models:
        scores = []
        for path in layer_files:
            sents = load_feature_file(path)
            dataset = build_probe_dataset(sents, gold_trees)
            model = train_probe(dataset, config)
            scores.append(evaluate_probe(model, dataset, gold_trees))
        results[name] = {"layers": scores, "uuas": float(np.mean(scores))}
    if results:
        base = next(iter(results.values()))["uuas"]
        for row in results.values():
            row["delta"] = row["uuas"] - base
    return results
