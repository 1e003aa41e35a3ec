#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into gzipped IDX files.

Usage: npm_mnist_to_idx.py <npm package dir> <out dir> [--test 2000] [--seed 0]

The package ships 10,000 MNIST digits as per-class JSON arrays of
pixel/255 values (rounded to three decimals). They are rescaled to u8,
shuffled with a fixed seed, and split into train/test IDX pairs.
"""
import argparse
import gzip
import json
import os
import random
import struct


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package")
    ap.add_argument("out")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        with open(os.path.join(args.package, "src", "digits", f"{digit}.json")) as f:
            data = json.load(f)["data"]
        for k in range(len(data) // 784):
            px = bytes(min(255, max(0, round(v * 255))) for v in data[k * 784:(k + 1) * 784])
            samples.append((px, digit))

    random.Random(args.seed).shuffle(samples)
    splits = {"t10k": samples[: args.test], "train": samples[args.test:]}
    os.makedirs(args.out, exist_ok=True)
    for name, rows in splits.items():
        write_idx(os.path.join(args.out, f"{name}-images-idx3-ubyte.gz"), 0x803,
                  [len(rows), 28, 28], b"".join(p for p, _ in rows))
        write_idx(os.path.join(args.out, f"{name}-labels-idx1-ubyte.gz"), 0x801,
                  [len(rows)], bytes(l for _, l in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main()
