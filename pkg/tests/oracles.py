import itertools
import random


def permutation_sequences(word_seqs):
    """Oracle: every complete token sequence, i.e. the subword concatenations
    of all distinct permutations of the word multiset."""
    out = set()
    for perm in set(itertools.permutations(range(len(word_seqs)))):
        out.add(tuple(tok for i in perm for tok in word_seqs[i]))
    return out


def oracle_valid_next(sequences, prefix):
    """Next-token set from the enumerated completions of a prefix."""
    prefix = tuple(prefix)
    n = len(prefix)
    return {s[n] for s in sequences if len(s) > n and s[:n] == prefix}


def random_multiset(rng, max_words=6, max_subwords=3, alphabet=5):
    """Random word multiset over a small token alphabet; duplicates common."""
    n_words = rng.randint(1, max_words)
    return [
        tuple(rng.randrange(alphabet) for _ in range(rng.randint(1, max_subwords)))
        for _ in range(n_words)
    ]


def markov_corpus(n_sentences, seed, vocab_size=40, min_len=5, max_len=10, successors=2):
    """Synthetic memorizable corpus: a sparse word graph where each word has
    few successors, so a trigram model can reconstruct order from the bag."""
    rng = random.Random(f"markov:{seed}")
    words = [f"w{i}" for i in range(vocab_size)]
    nexts = {w: rng.sample(words, successors) for w in words}
    corpus = []
    for _ in range(n_sentences):
        length = rng.randint(min_len, max_len)
        cur = rng.choice(words)
        sent = [cur]
        while len(sent) < length:
            cur = rng.choice(nexts[cur])
            sent.append(cur)
        corpus.append(sent)
    return corpus

