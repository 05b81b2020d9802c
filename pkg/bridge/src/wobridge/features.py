"""Decoder-feature dumper in the probe feature format.

For each dataset row the target is fed through the decoder with teacher
forcing, conditioned on the input bag; the vector stored for target position
t is the state that predicts token t (layer 0 is the embedding stream, i.e.
the embedding of the previously consumed token). One JSONL file per layer.
"""

import json

import torch

from .data import word_spans


def dump_features(model, vocab, rows, out_prefix):
    """Write per-layer feature files; returns the list of paths.

    Raises ValueError listing sentence ids whose targets do not tokenize
    under the model vocabulary.
    """
    bad = [i for i, (_, tgt) in enumerate(rows)
           if any(vocab.id(t) == vocab.unk_id and t != "<unk>" for t in tgt)]
    if bad:
        raise ValueError("tokenization mismatch for sentence ids: "
                         + ", ".join(str(i) for i in bad))
    n_layers = model.config.layers + 1  # embedding layer plus each GRU layer
    per_layer = [[] for _ in range(n_layers)]
    model.eval()
    for i, (inp, tgt) in enumerate(rows):
        input_ids = vocab.encode(inp) or [vocab.null_id]
        tgt_ids = vocab.encode(tgt)
        prefix = [vocab.bos_id] + tgt_ids[:-1]  # position t predicts tgt[t]
        with torch.no_grad():
            states = model.layer_states(
                torch.tensor([prefix], dtype=torch.long),
                torch.tensor([input_ids], dtype=torch.long),
            )
        spans = word_spans(tgt)
        for layer, s in enumerate(states):
            vectors = s[0].tolist()
            per_layer[layer].append(
                {
                    "id": i,
                    "subword_dims": len(vectors[0]),
                    "vectors": vectors,
                    "word_spans": [list(sp) for sp in spans],
                }
            )
    paths = []
    for layer, sents in enumerate(per_layer):
        path = f"{out_prefix}_layer{layer}.jsonl"
        with open(path, "w", encoding="utf-8") as f:
            for obj in sents:
                f.write(json.dumps(obj) + "\n")
        paths.append(path)
    return paths
