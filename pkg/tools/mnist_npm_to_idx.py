#!/usr/bin/env python
"""Convert the digits bundled in the npm ``mnist`` package (10,000 MNIST
samples, 1,000 per class, pixels stored as byte/255 rounded to 3 decimals)
into IDX files that ``tae`` reads.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python tools/mnist_npm_to_idx.py package/src/digits data/mnist

The samples are interleaved with a fixed permutation so that any prefix is
close to class-balanced. Bytes are recovered exactly: the stored rounding
error is at most 0.0005 * 255 < 0.5.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from tae.data_io import write_idx


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"], dtype=np.float64)
        if raw.size % 784:
            raise SystemExit(f"{digit}.json: {raw.size} values is not a multiple of 784")
        px = np.rint(raw * 255.0)
        if np.abs(px / 255.0 - raw).max() > 0.0006:
            raise SystemExit(f"{digit}.json: values are not rounded bytes")
        images.append(px.astype(np.uint8).reshape(-1, 28, 28))
        labels.append(np.full(len(images[-1]), digit))
    images, labels = np.concatenate(images), np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(labels))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train-images-idx3-ubyte", images[order], labels[order])
    print(f"{len(labels)} images, class counts {np.bincount(labels).tolist()} -> {args.out_dir}")


if __name__ == "__main__":
    main()
