"""Train a small hybrid model on the synthetic corpus and export attention for a few headlines.

    python scripts/attention_demo.py --out runs/attention
"""
import argparse
from pathlib import Path

from sarcnet.cli import main as sarcnet
from sarcnet.synthetic import generate_corpus, write_corpus

HEADLINES = [
    "nation excited for another round of budget cuts",
    "nation mourns budget cuts ahead of annual excited for",
    "local man thrilled about rising rent",
    "officials says update on record drought",
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=8)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = out / "corpus.jsonl"
    write_corpus(generate_corpus(2000, seed=1), corpus)
    (out / "demo.cfg").write_text(f"epochs = {args.epochs}\n", encoding="utf-8")
    (out / "headlines.txt").write_text("\n".join(HEADLINES) + "\n", encoding="utf-8")
    for argv in (["train", "--dataset", str(corpus), "--config", str(out / "demo.cfg"), "--out", str(out / "model")],
                 ["attend", "--checkpoint", str(out / "model" / "model.ckpt"), "--input", str(out / "headlines.txt"),
                  "--out", str(out / "attention")]):
        code = sarcnet(argv)
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
