"""Hybrid vs baseline at desk scale: random 50-d embeddings, 10 epochs, three seeds.

Runs the same ``sarcnet train`` pipeline the CLI uses and prints a TSV of test
accuracies. Without --dataset a synthetic corpus is generated.

    python scripts/desk_experiment.py --out runs/desk
    python scripts/desk_experiment.py --dataset Sarcasm_Headlines_Dataset_v2.json --out runs/desk
"""
import argparse
import json
from pathlib import Path

from sarcnet.cli import main as sarcnet
from sarcnet.synthetic import generate_corpus, write_corpus

CONFIG = """\
embedding_dim = 50
hidden_units = 64
out_channels = 64
filter_width = 3
epochs = 10
patience = 10
"""


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset")
    parser.add_argument("--records", type=int, default=3000, help="size of the synthetic corpus")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = args.dataset
    if dataset is None:
        dataset = out / "surrogate.jsonl"
        write_corpus(generate_corpus(args.records, seed=7), dataset)
    config = out / "desk.cfg"
    config.write_text(CONFIG, encoding="utf-8")

    rows = []
    for seed in args.seeds:
        accs = {}
        for variant in ("baseline", "hybrid"):
            run = out / f"{variant}-seed{seed}"
            code = sarcnet(["train", "--dataset", str(dataset), "--config", str(config), "--out", str(run),
                            "--variant", variant, "--seed", str(seed)])
            if code:
                raise SystemExit(code)
            accs[variant] = json.loads((run / "manifest.json").read_text())["results"]["test_accuracy"]
        rows.append((seed, accs["baseline"], accs["hybrid"]))

    print("seed\tbaseline\thybrid\tgap")
    for seed, b, h in rows:
        print(f"{seed}\t{b:.4f}\t{h:.4f}\t{h - b:+.4f}")
    wins = sum(h > b for _, b, h in rows)
    print(f"hybrid ahead on {wins}/{len(rows)} seeds")


if __name__ == "__main__":
    main()
