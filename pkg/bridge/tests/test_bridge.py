import json
import math
import subprocess
import sys

import numpy as np
import pytest
import torch

from wobridge import data, features, model

# protocol conformance is checked with the toolkit's own client, the same
# harness its echo-stub suite uses
from wordorder.scorers import ExternalScorer, ScorerError


def serve_cmd(checkpoint):
    return f"{sys.executable} -m wobridge.cli serve --checkpoint {checkpoint}"


def test_word_spans():
    assert data.word_spans(["li_", "kes", "mu_", "sic", "x"]) == [(0, 2), (2, 4), (4, 5)]
    assert data.word_spans([]) == []
    # trailing continuation piece still closes a span
    assert data.word_spans(["a_"]) == [(0, 1)]


def test_vocab_layout_and_unk():
    v = data.Vocab(data.build_vocab([(["b"], ["a"])]))
    assert v.tokens[:4] == ["<s>", "</s>", "<unk>", "<null>"]
    assert v.id("a") == 4 and v.id("b") == 5
    assert v.id("zzz") == v.unk_id


def test_read_dataset_rejects_bad_rows(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("a b\n")
    with pytest.raises(ValueError, match="2 tab-separated"):
        data.read_dataset(p)


def test_model_deterministic_given_seed():
    config = model.BridgeConfig(emb=8, hidden=12, layers=2, seed=3)
    m1 = model.BagSeq2Seq(10, config)
    m2 = model.BagSeq2Seq(10, config)
    prefix = torch.tensor([[0, 4, 5]])
    inp = torch.tensor([[4, 5, 6]])
    with torch.no_grad():
        assert torch.equal(m1.logits(prefix, inp), m2.logits(prefix, inp))


def test_checkpoint_round_trip(tmp_path, tiny_checkpoint):
    m, tokens = model.load_checkpoint(tiny_checkpoint)
    path = tmp_path / "again.pt"
    model.save_checkpoint(path, m, tokens)
    m2, tokens2 = model.load_checkpoint(path)
    assert tokens == tokens2
    prefix = torch.tensor([[0, 4]])
    inp = torch.tensor([[4]])
    with torch.no_grad():
        assert torch.equal(m.logits(prefix, inp), m2.logits(prefix, inp))


def test_handshake_and_normalization(tiny_checkpoint):
    with ExternalScorer.from_command(serve_cmd(tiny_checkpoint), timeout=60) as ext:
        assert ext.vocab.tokens[:4] == ["<s>", "</s>", "<unk>", "<null>"]
        for prefix in ([0], [0, 4], [0, 5, 6]):
            lp = ext.next_logprobs(prefix, [4, 5])
            assert len(lp) == len(ext.vocab)
            total = math.log(np.exp(lp - lp.max()).sum()) + lp.max()
            assert abs(total) < 1e-4


def test_scores_are_input_conditional(tiny_checkpoint):
    with ExternalScorer.from_command(serve_cmd(tiny_checkpoint), timeout=60) as ext:
        ids = [ext.vocab.id(t) for t in ("a", "b", "k0", "k1")]
        a = ext.next_logprobs([0], [ids[0], ids[1], ids[2]])
        b = ext.next_logprobs([0], [ids[0], ids[1], ids[3]])
        null = ext.next_logprobs([0], [ext.vocab.null_id])
        assert not np.allclose(a, b)
        assert not np.allclose(a, null)
        # empty input falls back to the null bag: unconditional scoring
        assert np.allclose(null, ext.next_logprobs([0], []))


def test_scores_deterministic_across_connections(tiny_checkpoint):
    with ExternalScorer.from_command(serve_cmd(tiny_checkpoint), timeout=60) as e1, \
         ExternalScorer.from_command(serve_cmd(tiny_checkpoint), timeout=60) as e2:
        assert np.allclose(e1.next_logprobs([0, 4], [5]), e2.next_logprobs([0, 4], [5]))


def raw_session(checkpoint, requests):
    proc = subprocess.Popen(serve_cmd(checkpoint).split(), stdin=subprocess.PIPE,
                            stdout=subprocess.PIPE, text=True)
    out, _ = proc.communicate("\n".join(json.dumps(r) for r in requests) + "\n", timeout=120)
    return [json.loads(line) for line in out.splitlines()]


def test_raw_protocol_error_paths(tiny_checkpoint):
    replies = raw_session(tiny_checkpoint, [
        {"id": 0, "method": "hello", "version": 99},
        {"id": 1, "method": "hello", "version": 1},
        {"id": 2, "method": "frobnicate"},
        {"id": 3, "method": "next_logprobs", "prefix": [999999], "input": []},
    ])
    assert "version" in replies[0]["error"]
    assert replies[1]["vocab"][:4] == ["<s>", "</s>", "<unk>", "<null>"]
    assert "unknown method" in replies[2]["error"]
    assert "out of range" in replies[3]["error"]
    assert [r["id"] for r in replies] == [0, 1, 2, 3]


def test_error_reply_surfaces_through_client(tiny_checkpoint):
    with ExternalScorer.from_command(serve_cmd(tiny_checkpoint), timeout=60) as ext:
        with pytest.raises(ScorerError, match="out of range"):
            ext.next_logprobs([999999])


def test_dump_features_shapes(tmp_path, tiny_checkpoint):
    m, tokens = model.load_checkpoint(tiny_checkpoint)
    vocab = data.Vocab(tokens)
    rows = [(["b", "a"], ["a", "b"]), (["k0"], ["k0"])]
    paths = features.dump_features(m, vocab, rows, str(tmp_path / "f"))
    assert len(paths) == m.config.layers + 1
    for layer, path in enumerate(paths):
        objs = [json.loads(l) for l in open(path)]
        assert [o["id"] for o in objs] == [0, 1]
        for o, (_, tgt) in zip(objs, rows):
            assert len(o["vectors"]) == len(tgt)
            assert o["word_spans"][-1][1] == len(tgt)
        dim = m.config.emb if layer == 0 else m.config.hidden
        assert objs[0]["subword_dims"] == dim


def test_dump_features_reports_mismatched_sentences(tmp_path, tiny_checkpoint):
    m, tokens = model.load_checkpoint(tiny_checkpoint)
    vocab = data.Vocab(tokens)
    rows = [(["a"], ["a"]), (["a"], ["not-in-vocab"]), (["a"], ["also-bad"])]
    with pytest.raises(ValueError, match="sentence ids: 1, 2"):
        features.dump_features(m, vocab, rows, str(tmp_path / "f"))
