"""Write a labeled synthetic corpus (JSONL) and unlabeled pretraining text.

    python demos/make_synthetic.py OUT_DIR [--labeled 2500] [--unlabeled 30000] [--seed 0]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from admelabel.annotator import write_corpus
from admelabel.synthetic import generate_corpus, generate_unlabeled


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--labeled", type=int, default=2500)
    parser.add_argument("--unlabeled", type=int, default=30000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(generate_corpus(args.labeled, seed=args.seed), args.out_dir / "corpus.jsonl")
    texts = generate_unlabeled(args.unlabeled, seed=10_000 + args.seed)
    (args.out_dir / "unlabeled.txt").write_text("\n".join(texts) + "\n", encoding="utf-8")
    print(f"wrote {args.labeled} labeled and {args.unlabeled} unlabeled texts to {args.out_dir}")


if __name__ == "__main__":
    main()
