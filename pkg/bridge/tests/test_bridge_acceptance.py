"""Bridge acceptance: the trained scorer beats the n-gram baseline under the
toolkit's own constrained decoding, and its learned features probe better
than random-init features. The toolkit is exercised strictly through its CLI
and file formats.
"""

import re
import subprocess
import sys

import pytest


def run_cli(*argv):
    proc = subprocess.run([str(a) for a in argv], capture_output=True, text=True,
                          timeout=900)
    assert proc.returncode == 0, proc.stderr or proc.stdout
    return proc.stdout


def wordorder(*argv):
    return run_cli("wordorder", *argv)


def wobridge(*argv):
    return run_cli(sys.executable, "-m", "wobridge.cli", *argv)


def parse_bleu(out):
    m = re.search(r"BLEU = ([\d.]+)", out)
    assert m, out
    return float(m.group(1))


def test_criterion_12_trained_scorer_beats_ngram(tmp_path):
    from corpora import keyed_corpus, write_order_dataset

    corpus = keyed_corpus(400, seed=12)
    train_tsv = tmp_path / "train.tsv"
    write_order_dataset(train_tsv, corpus, seed=12)
    eval_tsv = tmp_path / "eval.tsv"
    eval_rows = open(train_tsv).read().splitlines()[:150]
    eval_tsv.write_text("\n".join(eval_rows) + "\n")
    refs = tmp_path / "refs.txt"
    refs.write_text("\n".join(r.split("\t")[1] for r in eval_rows) + "\n")

    wordorder("train-lm", "--dataset", train_tsv, "--order", "3",
              "--out", tmp_path / "lm.ngram")
    wobridge("train", "--dataset", train_tsv, "--steps", "1200", "--seed", "0",
             "--out", tmp_path / "ck.pt")

    wordorder("order", "--dataset", eval_tsv, "--lm", tmp_path / "lm.ngram",
              "--beam", "5", "--out", tmp_path / "hyp_ngram.txt")
    serve = f"{sys.executable} -m wobridge.cli serve --checkpoint {tmp_path / 'ck.pt'}"
    wordorder("order", "--dataset", eval_tsv, "--external-scorer", serve,
              "--beam", "5", "--out", tmp_path / "hyp_bridge.txt")

    ngram_bleu = parse_bleu(wordorder("eval", "--hyps", tmp_path / "hyp_ngram.txt",
                                      "--refs", refs))
    bridge_bleu = parse_bleu(wordorder("eval", "--hyps", tmp_path / "hyp_bridge.txt",
                                       "--refs", refs))
    assert bridge_bleu > ngram_bleu, (bridge_bleu, ngram_bleu)
    print(f"PASS criterion 12: bridge BLEU {bridge_bleu:.2f} > ngram BLEU {ngram_bleu:.2f}")


def parse_avg_uuas(out):
    m = re.search(r"average uuas ([\d.]+)", out)
    assert m, out
    return float(m.group(1))


def test_criterion_13_trained_features_probe_better(tmp_path):
    from corpora import grammar_corpus, write_order_dataset

    sentences, conll = grammar_corpus(250, seed=13)
    conll_path = tmp_path / "trees.conll"
    conll_path.write_text(conll)
    train_tsv = tmp_path / "train.tsv"
    write_order_dataset(train_tsv, sentences, seed=13)

    wobridge("train", "--dataset", train_tsv, "--steps", "1200", "--seed", "0",
             "--out", tmp_path / "ck.pt")
    wobridge("dump-features", "--dataset", train_tsv, "--checkpoint", tmp_path / "ck.pt",
             "--out-prefix", tmp_path / "trained")
    wobridge("dump-features", "--dataset", train_tsv, "--random-init", "--seed", "1",
             "--out-prefix", tmp_path / "random")

    def avg_uuas(prefix):
        out = wordorder("probe-eval",
                        "--features", f"{prefix}_layer1.jsonl", f"{prefix}_layer2.jsonl",
                        "--conll", conll_path,
                        "--rank", "16", "--epochs", "20", "--seed", "0")
        return parse_avg_uuas(out)

    trained = avg_uuas(tmp_path / "trained")
    rand = avg_uuas(tmp_path / "random")
    assert trained > rand, (trained, rand)
    print(f"PASS criterion 13: trained UUAS {trained:.4f} > random-init UUAS {rand:.4f}")
