"""Wire-protocol server: line-delimited JSON on stdin/stdout.

Requests carry strictly increasing ids; every reply echoes the request id.
``hello`` returns the exported vocabulary (ids 0-3 reserved), and
``next_logprobs`` returns a log-softmax over exactly that vocabulary, so the
vector logsumexps to 0 up to float precision.
"""

import json
import sys

import torch

PROTOCOL_VERSION = 1


def _score(model, vocab_size, prefix, input_ids, null_id):
    if not prefix:
        prefix = [0]
    if not input_ids:
        input_ids = [null_id]
    with torch.no_grad():
        logits = model.logits(
            torch.tensor([prefix], dtype=torch.long),
            torch.tensor([input_ids], dtype=torch.long),
        )
        lp = torch.log_softmax(logits[0, -1], dim=-1)
    return lp.tolist()


def serve(model, vocab_tokens, reader=None, writer=None):
    reader = reader or sys.stdin
    writer = writer or sys.stdout
    null_id = vocab_tokens.index("<null>") if "<null>" in vocab_tokens else 3
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            reply = {"id": None, "error": "malformed request"}
            writer.write(json.dumps(reply) + "\n")
            writer.flush()
            continue
        rid = req.get("id")
        method = req.get("method")
        if method == "hello":
            if req.get("version") != PROTOCOL_VERSION:
                reply = {"id": rid, "error": f"unsupported protocol version {req.get('version')}"}
            else:
                reply = {"id": rid, "vocab": list(vocab_tokens)}
        elif method == "next_logprobs":
            try:
                prefix = [int(t) for t in req.get("prefix", [])]
                input_ids = [int(t) for t in req.get("input", [])]
                if any(not 0 <= t < len(vocab_tokens) for t in prefix + input_ids):
                    raise ValueError("token id out of range")
                reply = {"id": rid, "logprobs": _score(model, len(vocab_tokens), prefix, input_ids, null_id)}
            except (ValueError, TypeError) as e:
                reply = {"id": rid, "error": str(e)}
        else:
            reply = {"id": rid, "error": f"unknown method {method!r}"}
        writer.write(json.dumps(reply) + "\n")
        writer.flush()
