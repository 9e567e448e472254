"""Subsample the MOSES training split into data/moses_60k.smi.gz."""
import gzip
import random
import sys

src = sys.argv[1] if len(sys.argv) > 1 else "train.csv.gz"
with gzip.open(src, "rt") as f:
    lines = [l.strip() for l in f][1:]
random.Random(20211115).shuffle(lines)
with gzip.GzipFile("data/moses_60k.smi.gz", "wb", mtime=0) as out:
    out.write(("\n".join(lines[:60000]) + "\n").encode())
