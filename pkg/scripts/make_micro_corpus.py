#!/usr/bin/env python3
"""Generate the seeded demo micro-corpus (WAVs + manifest)."""

import argparse

from emopred.synthcorpus import generate_micro_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="directory to create the corpus in")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--per-emotion", type=int, default=3)
    args = parser.parse_args()
    manifest = generate_micro_corpus(args.out_dir, seed=args.seed,
                                     per_emotion=args.per_emotion)
    print(manifest)


if __name__ == "__main__":
    main()
