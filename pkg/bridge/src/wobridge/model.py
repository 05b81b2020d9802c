"""A deliberately small conditional sequence model.

The encoder is a bag: input subword embeddings are averaged and projected,
which suits the ordering task (the input is an unordered multiset anyway)
and makes null-input scoring exactly the <null> embedding. The decoder is a
stack of GRU layers run separately so per-layer states can be dumped for
probing; the state that consumed y_{<t} is the representation that predicts
y_t.
"""

import torch
import torch.nn as nn


class BridgeConfig:
    def __init__(self, emb=48, hidden=96, layers=2, seed=0):
        if layers < 1:
            raise ValueError("need at least one decoder layer")
        self.emb = emb
        self.hidden = hidden
        self.layers = layers
        self.seed = seed

    def to_dict(self):
        return {"emb": self.emb, "hidden": self.hidden, "layers": self.layers, "seed": self.seed}


class BagSeq2Seq(nn.Module):
    def __init__(self, vocab_size, config):
        super().__init__()
        torch.manual_seed(config.seed)
        self.config = config
        self.embedding = nn.Embedding(vocab_size, config.emb)
        self.enc_proj = nn.Linear(config.emb, config.emb)
        grus = [nn.GRU(2 * config.emb, config.hidden, batch_first=True)]
        for _ in range(config.layers - 1):
            grus.append(nn.GRU(config.hidden, config.hidden, batch_first=True))
        self.grus = nn.ModuleList(grus)
        self.out = nn.Linear(config.hidden, vocab_size)

    def encode(self, input_ids, mask=None):
        # (B, S) -> (B, emb); the bag summary broadcast to every decode step
        emb = self.embedding(input_ids)
        if mask is None:
            mean = emb.mean(dim=1)
        else:
            m = mask[:, :, None].to(emb.dtype)
            mean = (emb * m).sum(dim=1) / m.sum(dim=1).clamp(min=1.0)
        return torch.tanh(self.enc_proj(mean))

    def layer_states(self, prefix_ids, input_ids, mask=None):
        """Per-layer states for each prefix position.

        Returns [layer0, ..., layerL] where layer0 is the token embedding
        stream and layer k the k-th GRU's outputs, all (B, T, *).
        """
        enc = self.encode(input_ids, mask)
        emb = self.embedding(prefix_ids)  # (B, T, emb)
        cond = enc[:, None, :].expand(-1, emb.shape[1], -1)
        states = [emb]
        h = torch.cat([emb, cond], dim=-1)
        for gru in self.grus:
            h, _ = gru(h)
            states.append(h)
        return states

    def logits(self, prefix_ids, input_ids, mask=None):
        """Next-token logits at every prefix position, (B, T, V)."""
        return self.out(self.layer_states(prefix_ids, input_ids, mask)[-1])


def save_checkpoint(path, model, vocab_tokens):
    torch.save(
        {
            "state_dict": model.state_dict(),
            "vocab": list(vocab_tokens),
            "config": model.config.to_dict(),
        },
        path,
    )


def load_checkpoint(path):
    ckpt = torch.load(path, map_location="cpu", weights_only=True)
    config = BridgeConfig(**ckpt["config"])
    model = BagSeq2Seq(len(ckpt["vocab"]), config)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt["vocab"]


def train_model(rows, vocab, config, steps=1000, batch_size=32, lr=1e-3):
    """Teacher-forced cross-entropy over (input bag, target) rows."""
    import random

    model = BagSeq2Seq(len(vocab), config)
    rng = random.Random(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss(ignore_index=-100)
    encoded = [
        (vocab.encode(inp), [vocab.bos_id] + vocab.encode(tgt) + [vocab.eos_id])
        for inp, tgt in rows
    ]
    model.train()
    for _ in range(steps):
        batch = [encoded[rng.randrange(len(encoded))] for _ in range(batch_size)]
        in_len = max(len(i) for i, _ in batch)
        tgt_len = max(len(t) for _, t in batch)
        inputs = torch.full((len(batch), in_len), vocab.null_id, dtype=torch.long)
        mask = torch.zeros((len(batch), in_len), dtype=torch.bool)
        prefix = torch.full((len(batch), tgt_len - 1), vocab.eos_id, dtype=torch.long)
        gold = torch.full((len(batch), tgt_len - 1), -100, dtype=torch.long)
        for b, (inp, tgt) in enumerate(batch):
            inputs[b, : len(inp)] = torch.tensor(inp)
            mask[b, : len(inp)] = True
            prefix[b, : len(tgt) - 1] = torch.tensor(tgt[:-1])
            gold[b, : len(tgt) - 1] = torch.tensor(tgt[1:])
        logits = model.logits(prefix, inputs, mask)
        loss = loss_fn(logits.reshape(-1, len(vocab)), gold.reshape(-1))
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.eval()
    return model
