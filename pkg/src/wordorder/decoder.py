"""Beam search over constrained or unconstrained output spaces.

Scores live in the log domain; "probability zero" for tokens outside the
constraint set becomes -inf with dead-path pruning. Ties are broken by
smaller token id, then older hypothesis index, so decoding is deterministic
across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import constraint_tree as ct


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple  # token ids, beginning with BOS
    logscore: float
    constraint: object = None  # ConstraintState in constrained mode
    finished: bool = False


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 64
    mode: str = "constrained"  # "constrained" | "unconstrained"
    length_norm: bool = False  # unconstrained only
    max_len: int | None = None
    null_input: bool = False

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.mode not in ("constrained", "unconstrained"):
            raise ValueError(f"unknown mode: {self.mode}")


def _final_key(hyp, config):
    n = len(hyp.tokens) - 1  # generated tokens, excluding BOS
    if config.mode == "unconstrained" and config.length_norm:
        return hyp.logscore / max(n, 1)
    return hyp.logscore


def beam_search(input_ids, scorer, config, tree=None, *, bos_id=0, eos_id=1, null_id=3):
    """Run beam search; returns up to beam_size finished hypotheses, best first.

    In constrained mode ``tree`` is required, expansions are limited to
    valid_next tokens, and a hypothesis finishes exactly when its constraint
    is exhausted. In unconstrained mode a hypothesis finishes on EOS or at
    max_len, and final ranking optionally normalizes by output length.
    """
    input_ids = [null_id] if config.null_input else list(input_ids)
    if not input_ids:
        raise ValueError("empty input")
    constrained = config.mode == "constrained"
    if constrained:
        if tree is None:
            raise ValueError("constrained mode requires a constraint tree")
        max_len = max(config.max_len or 0, tree.total_subwords)
        init = Hypothesis(tokens=(bos_id,), logscore=0.0, constraint=ct.initial_state(tree))
    else:
        max_len = config.max_len or (2 * len(input_ids) + 10)
        init = Hypothesis(tokens=(bos_id,), logscore=0.0)

    beams = [init]
    finished = []
    for _ in range(max_len):
        if not beams:
            break
        if constrained:
            beams = _expand_constrained(beams, input_ids, scorer, config, tree, finished)
        else:
            beams = _expand_unconstrained(beams, input_ids, scorer, config, finished, eos_id)
        if not config.length_norm and len(finished) >= config.beam_size and beams:
            kept = sorted(finished, key=lambda h: -h.logscore)[: config.beam_size]
            bound = kept[-1].logscore
            if max(h.logscore for h in beams) < bound:
                break

    if not constrained:
        # force-finish anything still live at max_len
        finished.extend(replace(h, finished=True) for h in beams)

    finished.sort(key=lambda h: (-_final_key(h, config), h.tokens))
    return finished[: config.beam_size]


def _expand_constrained(beams, input_ids, scorer, config, tree, finished):
    candidates = []  # (new score, token, beam index)
    for idx, hyp in enumerate(beams):
        lp = scorer.next_logprobs(hyp.tokens, input_ids)
        for tok in ct.valid_next(tree, hyp.constraint):
            s = float(lp[tok])
            if s == float("-inf"):
                continue
            candidates.append((hyp.logscore + s, tok, idx))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    next_beams = []
    for score, tok, idx in candidates:
        if len(next_beams) >= config.beam_size:
            break
        hyp = beams[idx]
        state = ct.advance(tree, hyp.constraint, tok)
        if state.is_dead:
            continue
        nh = Hypothesis(hyp.tokens + (tok,), score, constraint=state, finished=ct.is_exhausted(tree, state))
        if nh.finished:
            finished.append(nh)
        else:
            next_beams.append(nh)
    return next_beams


def _expand_unconstrained(beams, input_ids, scorer, config, finished, eos_id):
    rows = np.stack([scorer.next_logprobs(h.tokens, input_ids) for h in beams])
    scores = rows + np.array([h.logscore for h in beams])[:, None]
    flat = scores.ravel()
    vocab = rows.shape[1]
    # 2*beam_size candidates is enough to fill the beam even if every kept
    # candidate at the front finishes on EOS
    k = min(2 * config.beam_size, flat.size)
    top = np.argpartition(-flat, k - 1)[:k] if k < flat.size else np.arange(flat.size)
    cands = [(float(flat[i]), int(i % vocab), int(i // vocab)) for i in top if np.isfinite(flat[i])]
    cands.sort(key=lambda c: (-c[0], c[1], c[2]))
    next_beams = []
    for score, tok, idx in cands:
        if len(next_beams) >= config.beam_size:
            break
        hyp = beams[idx]
        nh = Hypothesis(hyp.tokens + (tok,), score, finished=(tok == eos_id))
        if nh.finished:
            finished.append(nh)
        else:
            next_beams.append(nh)
    return next_beams


def rescore(candidates, scorer, input_ids=None, *, bos_id=0):
    """Log-score of each token sequence under the scorer's factorization.

    Sequences are scored as given (BOS prepended when absent); the returned
    value matches beam_search's logscore for its own outputs.
    """
    out = []
    for seq in candidates:
        seq = tuple(seq)
        prefix = seq[:1] if seq[:1] == (bos_id,) else (bos_id,)
        tokens = seq[1:] if seq[:1] == (bos_id,) else seq
        total = 0.0
        for tok in tokens:
            total += float(scorer.next_logprobs(prefix, input_ids)[tok])
            prefix = prefix + (tok,)
        out.append(total)
    return out


def output_tokens(hyp, *, bos_id=0, eos_id=1):
    """Generated tokens with BOS (and trailing EOS) stripped."""
    toks = list(hyp.tokens)
    if toks and toks[0] == bos_id:
        toks = toks[1:]
    if toks and toks[-1] == eos_id:
        toks = toks[:-1]
    return toks
