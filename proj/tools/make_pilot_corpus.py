#!/usr/bin/env python3
"""Build the short-word morphology corpus from arbitrary word lists.

Every whitespace-separated token is lower-cased; tokens made only of the
letters a-z and no longer than --max-chars are kept, de-duplicated, shuffled
with a fixed seed and split into a training and a validation list.
"""
import argparse
import random
import re
import sys


def extract(paths, max_chars):
    pattern = re.compile(r"[a-z]{1,%d}" % max_chars)
    words = set()
    for path in paths:
        with open(path, encoding="utf-8", errors="ignore") as f:
            for line in f:
                for tok in line.split():
                    tok = tok.lower()
                    if pattern.fullmatch(tok):
                        words.add(tok)
    return sorted(words)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("inputs", nargs="+", help="word list or text files")
    ap.add_argument("--max-chars", type=int, default=3)
    ap.add_argument("--valid", type=int, default=90, help="validation words")
    ap.add_argument("--seed", type=int, default=2018)
    ap.add_argument("--train-out", required=True)
    ap.add_argument("--valid-out", required=True)
    args = ap.parse_args(argv)

    words = extract(args.inputs, args.max_chars)
    if len(words) <= args.valid:
        sys.exit("not enough words: %d" % len(words))
    random.Random(args.seed).shuffle(words)
    valid, train = sorted(words[: args.valid]), sorted(words[args.valid:])
    for path, items in ((args.train_out, train), (args.valid_out, valid)):
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(items) + "\n")
    print("train=%d valid=%d" % (len(train), len(valid)))


if __name__ == "__main__":
    main()
