import itertools
import random

import numpy as np
import pytest

from wordorder import dep_linearizer as dl
from wordorder import probe


def make_tree(heads):
    """Heads are 1-based with 0 for root, as in the CoNLL convention."""
    nodes = [
        dl.DepNode(form=f"w{i}", pos="NN", head=h, label="root" if h == 0 else "dep")
        for i, h in enumerate(heads)
    ]
    return dl.DepTree(nodes=nodes)


def path_features(tree, dim):
    """Isometric embedding: h_v = sum of indicator vectors for the edges on
    the root path, so ||h_i - h_j||^2 equals the tree path length exactly."""
    n = len(tree.nodes)
    assert dim >= n - 1
    feats = np.zeros((n, dim))
    root = tree.root_index()

    def fill(v, vec, next_edge):
        feats[v] = vec
        for c in tree.children_of(v):
            child_vec = vec.copy()
            child_vec[next_edge[0]] = 1.0
            next_edge[0] += 1
            fill(c, child_vec, next_edge)

    fill(root, np.zeros(dim), [0])
    return feats


def test_word_features_averages_spans():
    vecs = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0]])
    out = probe.word_features(vecs, [(0, 2), (2, 3)])
    assert np.allclose(out, [[2.0, 0.0], [0.0, 2.0]])


def test_word_features_rejects_bad_spans():
    vecs = np.zeros((3, 2))
    with pytest.raises(ValueError, match="partition"):
        probe.word_features(vecs, [(0, 1), (2, 3)])  # gap
    with pytest.raises(ValueError, match="cover"):
        probe.word_features(vecs, [(0, 2)])  # short


def test_tree_distances_fig_tree():
    # Bob <- eats -> food: dist(Bob, food) = 2 through the verb
    tree = make_tree([2, 0, 2])
    dist = probe.tree_distances(tree)
    assert dist[0, 2] == 2
    assert dist[0, 1] == 1
    assert dist[1, 2] == 1
    assert np.all(np.diag(dist) == 0)
    assert np.array_equal(dist, dist.T)


def test_tree_distances_chain():
    tree = make_tree([0, 1, 2, 3])
    dist = probe.tree_distances(tree)
    assert dist[0, 3] == 3
    assert dist[1, 3] == 2


def test_distances_nonnegative_symmetric_zero_diag():
    rng = np.random.default_rng(1)
    model = probe.ProbeModel(rng.normal(size=(4, 7)))
    feats = rng.normal(size=(6, 7))
    d = model.distances(feats)
    assert np.all(d >= -1e-12)
    assert np.allclose(d, d.T)
    assert np.allclose(np.diag(d), 0.0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    feats = rng.normal(size=(5, 6))
    gold = np.abs(rng.normal(size=(5, 5)))
    gold = gold + gold.T
    np.fill_diagonal(gold, 0.0)
    b = rng.normal(size=(3, 6))
    loss, grad = probe._loss_and_grad(b, feats, gold)
    eps = 1e-6
    num = np.zeros_like(b)
    for i in range(b.shape[0]):
        for j in range(b.shape[1]):
            bp = b.copy()
            bp[i, j] += eps
            bm = b.copy()
            bm[i, j] -= eps
            lp, _ = probe._loss_and_grad(bp, feats, gold)
            lm, _ = probe._loss_and_grad(bm, feats, gold)
            num[i, j] = (lp - lm) / (2 * eps)
    rel = np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12)
    assert rel < 1e-4


def test_mst_hand_case():
    # 0-1 cheap, 1-2 cheap, 0-2 expensive
    dist = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
    assert probe.mst(dist) == {(0, 1), (1, 2)}
    assert probe.mst(np.zeros((1, 1))) == set()


def mst_oracle(dist):
    """Exhaustive minimum over all spanning trees (Prufer enumeration),
    with the same (weight, sorted edge list) tie-break as Kruskal."""
    n = len(dist)
    if n < 2:
        return set()
    if n == 2:
        return {(0, 1)}
    best = None
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        edges = []
        deg = list(degree)
        for v in seq:
            leaf = min(u for u in range(n) if deg[u] == 1)
            edges.append(tuple(sorted((leaf, v))))
            deg[leaf] -= 1
            deg[v] -= 1
        rest = [u for u in range(n) if deg[u] == 1]
        edges.append(tuple(sorted(rest)))
        w = sum(dist[i][j] for i, j in edges)
        key = (w, sorted(edges))
        if best is None or key < best:
            best = key
    return set(best[1])


def test_mst_matches_exhaustive_oracle():
    rng = np.random.default_rng(13)
    for n in (2, 3, 4, 5, 6):
        for _ in range(20):
            # distinct weights so the minimum tree is unique
            w = rng.permutation(n * n).reshape(n, n).astype(float)
            dist = np.triu(w, 1)
            dist = dist + dist.T
            got = probe.mst(dist)
            want = mst_oracle(dist)
            assert got == want, (n, dist)


def test_uuas_hand_cases():
    tree = make_tree([2, 0, 2])
    assert probe.uuas({(0, 1), (1, 2)}, tree) == 1.0
    assert probe.uuas({(1, 0), (2, 1)}, tree) == 1.0  # orientation ignored
    assert probe.uuas({(0, 1), (0, 2)}, tree) == 0.5
    assert probe.uuas(set(), make_tree([0])) == 1.0  # no gold edges


def test_corpus_uuas_micro_average():
    trees = [make_tree([2, 0, 2]), make_tree([0, 1])]
    preds = [{(0, 1), (0, 2)}, {(0, 1)}]
    # 1 of 2 edges right in the first tree, 1 of 1 in the second: 2/3
    assert probe.corpus_uuas(preds, trees) == pytest.approx(2 / 3)


def test_probe_recovers_isometric_trees():
    rng = random.Random(19)
    dim = 32
    trees = []
    for _ in range(30):
        n = rng.randint(3, 8)
        heads = [0] + [rng.randint(1, i) for i in range(1, n)]
        trees.append(make_tree(heads))
    dataset = [
        (path_features(t, dim), probe.tree_distances(t).astype(float)) for t in trees
    ]
    config = probe.ProbeConfig(rank=32, epochs=30, batch_size=10, lr=1e-2, seed=0)
    model = probe.train_probe(dataset, config)
    assert probe.evaluate_probe(model, dataset, trees) >= 0.99


def test_train_probe_deterministic():
    rng = np.random.default_rng(3)
    dataset = [
        (rng.normal(size=(4, 8)), probe.tree_distances(make_tree([0, 1, 2, 1])).astype(float))
        for _ in range(3)
    ]
    config = probe.ProbeConfig(rank=4, epochs=2, batch_size=2, lr=1e-3, seed=5)
    m1 = probe.train_probe(dataset, config)
    m2 = probe.train_probe(dataset, config)
    assert np.array_equal(m1.b, m2.b)


def test_train_probe_validation():
    with pytest.raises(ValueError, match="empty"):
        probe.train_probe([])
    feats = np.zeros((3, 4))
    gold = np.zeros((3, 3))
    with pytest.raises(ValueError, match="rank"):
        probe.train_probe([(feats, gold)], probe.ProbeConfig(rank=8))


def test_feature_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    sents = [
        {"id": 0, "vectors": rng.normal(size=(5, 4)), "word_spans": [(0, 2), (2, 5)]},
        {"id": 1, "vectors": rng.normal(size=(2, 4)), "word_spans": [(0, 1), (1, 2)]},
    ]
    path = tmp_path / "feats.jsonl"
    probe.save_feature_file(path, sents)
    loaded = probe.load_feature_file(path)
    assert [s["id"] for s in loaded] == [0, 1]
    for a, b in zip(sents, loaded):
        assert np.allclose(a["vectors"], b["vectors"])
        assert list(map(tuple, a["word_spans"])) == b["word_spans"]


def test_build_probe_dataset_and_report(tmp_path):
    trees = [make_tree([2, 0, 2]), make_tree([0, 1])]
    sents = []
    for i, t in enumerate(trees):
        feats = path_features(t, 8)
        sents.append({"id": i, "vectors": feats, "word_spans": [(j, j + 1) for j in range(len(t.nodes))]})
    path = tmp_path / "layer0.jsonl"
    probe.save_feature_file(path, sents)
    dataset = probe.build_probe_dataset(probe.load_feature_file(path), trees)
    assert len(dataset) == 2
    assert dataset[0][1][0, 2] == 2.0
    config = probe.ProbeConfig(rank=4, epochs=20, batch_size=2, lr=1e-2, seed=1)
    report = probe.probe_report([("m", [str(path)]), ("m2", [str(path)])], trees, config)
    assert set(report) == {"m", "m2"}
    assert report["m"]["delta"] == 0.0
    assert report["m2"]["delta"] == report["m2"]["uuas"] - report["m"]["uuas"]


def test_probe_model_save_load(tmp_path):
    model = probe.ProbeModel(np.arange(12.0).reshape(3, 4))
    path = tmp_path / "probe.npz"
    model.save(path)
    loaded = probe.ProbeModel.load(path)
    assert np.array_equal(loaded.b, model.b)
    assert loaded.rank == 3 and loaded.dim == 4
