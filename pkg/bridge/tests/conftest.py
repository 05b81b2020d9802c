import pytest

from corpora import keyed_corpus, write_order_dataset


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A quickly trained checkpoint for protocol-level tests."""
    from wobridge import data, model

    tmp = tmp_path_factory.mktemp("tiny")
    corpus = keyed_corpus(60, seed=7)
    write_order_dataset(tmp / "train.tsv", corpus, seed=7)
    rows = data.read_dataset(tmp / "train.tsv")
    vocab = data.Vocab(data.build_vocab(rows))
    config = model.BridgeConfig(emb=16, hidden=24, layers=2, seed=7)
    trained = model.train_model(rows, vocab, config, steps=60, batch_size=16)
    path = tmp / "tiny.pt"
    model.save_checkpoint(path, trained, vocab.tokens)
    return str(path)
