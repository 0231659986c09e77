"""Write a synthetic headline corpus in the JSON-lines layout the loader expects.

    python scripts/make_synthetic_corpus.py --n 4000 --seed 7 --out surrogate.jsonl
"""
import argparse

from sarcnet.synthetic import generate_corpus, write_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--incongruity-share", type=float, default=0.5)
    parser.add_argument("--noise", type=float, default=0.05)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()
    records = generate_corpus(args.n, seed=args.seed, incongruity_share=args.incongruity_share, noise=args.noise)
    write_corpus(records, args.out)
    print(f"wrote {len(records)} records ({sum(r.is_sarcastic for r in records)} sarcastic) to {args.out}")


if __name__ == "__main__":
    main()
