#!/usr/bin/env python3
"""Build a 10k-digit MNIST subset in IDX format.

The full MNIST archives are not always reachable from build sandboxes. The
npm package `mnist` ships 10,000 real MNIST digits as JSON (pixels divided by
255 and rounded to three decimals). This script fetches that package with
`npm pack`, recovers the 8-bit pixels, shuffles with a fixed seed and writes
an 8,000 / 2,000 train/test split as gzip-compressed IDX files.

If the official IDX files are available, point the CLI at them instead.
"""
import argparse
import gzip
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist-subset")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20200101)
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(pathlib.Path(tmp) / "mnist-1.1.0.tgz") as tar:
            tar.extractall(tmp)
        samples = []
        for digit in range(10):
            raw = json.loads((pathlib.Path(tmp) / "package/src/digits" /
                              f"{digit}.json").read_text())["data"]
            assert len(raw) % 784 == 0
            for k in range(len(raw) // 784):
                px = [max(0, min(255, round(v * 255)))
                      for v in raw[k * 784:(k + 1) * 784]]
                samples.append((px, digit))

    random.Random(args.seed).shuffle(samples)
    test, train = samples[:args.test], samples[args.test:]
    for name, part in (("train", train), ("t10k", test)):
        write_images(out / f"{name}-images-idx3-ubyte.gz", [s[0] for s in part])
        write_labels(out / f"{name}-labels-idx1-ubyte.gz", [s[1] for s in part])
    print(f"wrote {len(train)} train / {len(test)} test digits to {out}")


if __name__ == "__main__":
    main()
