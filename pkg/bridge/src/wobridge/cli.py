"""wobridge command line: train a small conditional scorer, serve it over
the wire protocol, or dump its decoder features for probing."""

import argparse
import sys

from . import data, features, model, serve


def cmd_train(args):
    rows = data.read_dataset(args.dataset)
    vocab = data.Vocab(data.build_vocab(rows))
    config = model.BridgeConfig(emb=args.emb, hidden=args.hidden, layers=args.layers, seed=args.seed)
    trained = model.train_model(rows, vocab, config, steps=args.steps,
                                batch_size=args.batch_size, lr=args.lr)
    model.save_checkpoint(args.out, trained, vocab.tokens)
    print(f"trained {args.steps} steps on {len(rows)} rows -> {args.out}")


def cmd_serve(args):
    m, tokens = model.load_checkpoint(args.checkpoint)
    serve.serve(m, tokens)


def cmd_dump_features(args):
    rows = data.read_dataset(args.dataset)
    if args.random_init:
        vocab = data.Vocab(data.build_vocab(rows))
        config = model.BridgeConfig(emb=args.emb, hidden=args.hidden,
                                    layers=args.layers, seed=args.seed)
        m = model.BagSeq2Seq(len(vocab), config)
        m.eval()
    else:
        if not args.checkpoint:
            raise SystemExit("error: need --checkpoint or --random-init")
        m, tokens = model.load_checkpoint(args.checkpoint)
        vocab = data.Vocab(tokens)
    paths = features.dump_features(m, vocab, rows, args.out_prefix)
    for p in paths:
        print(f"wrote {p}")


def build_parser():
    parser = argparse.ArgumentParser(prog="wobridge", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train the scorer on a TSV dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--emb", type=int, default=48)
    p.add_argument("--hidden", type=int, default=96)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("serve", help="answer the scorer wire protocol on stdio")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_serve)

    p = subs.add_parser("dump-features", help="write per-layer probe feature files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--random-init", action="store_true",
                   help="same architecture, fresh random weights")
    p.add_argument("--emb", type=int, default=48)
    p.add_argument("--hidden", type=int, default=96)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dump_features)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SystemExit:
        raise
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
