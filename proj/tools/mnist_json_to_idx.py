#!/usr/bin/env python3
"""Convert the digit JSON files shipped by the npm `mnist` package into IDX files.

The npm package (https://github.com/cazala/mnist, MIT) carries 10,000 MNIST
digits as per-class JSON arrays of 28x28 intensities in [0, 1]. This script
re-quantizes them to bytes and writes a gzip-compressed IDX image/label pair.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_json_to_idx.py package/src/digits data/mnist10k
"""

import argparse
import gzip
import json
import pathlib
import struct

SIDE = 28


def load_digits(src: pathlib.Path):
    per_class = []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(raw) // (SIDE * SIDE)
        images = [raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE] for i in range(count)]
        per_class.append(images)
    return per_class


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    args = parser.parse_args()

    per_class = load_digits(args.digits_dir)
    images, labels = [], []
    # Round-robin over classes so that any prefix of the file is roughly balanced.
    longest = max(len(c) for c in per_class)
    for i in range(longest):
        for digit, samples in enumerate(per_class):
            if i < len(samples):
                images.append(samples[i])
                labels.append(digit)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    pixels = bytearray()
    for img in images:
        pixels.extend(min(255, max(0, round(v * 255))) for v in img)

    with gzip.GzipFile(args.out_dir / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        f.write(pixels)
    with gzip.GzipFile(args.out_dir / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} samples to {args.out_dir}")


if __name__ == "__main__":
    main()
