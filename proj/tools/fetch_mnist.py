#!/usr/bin/env python3
"""Fetch the MNIST digit subset bundled with the npm `mnist` package and
convert it to gzipped IDX files under data/mnist/.

The package ships 1001 examples per digit class as JSON arrays of pixels
normalized to v/255. We restore the raw bytes exactly (round(v*255)) and
interleave classes so any prefix of the file is class-balanced.

Usage: python3 tools/fetch_mnist.py [--out data/mnist]
Requires `npm` with registry access.
"""

import argparse
import gzip
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def fetch_package(workdir: pathlib.Path) -> pathlib.Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    tarball = next(workdir.glob("mnist-*.tgz"))
    with tarfile.open(tarball) as tf:
        tf.extractall(workdir)
    return workdir / "package" / "src" / "digits"


def load_digits(digits_dir: pathlib.Path):
    per_class = []
    for digit in range(10):
        raw = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
        if len(raw) % 784 != 0:
            sys.exit(f"digit {digit}: payload not a multiple of 784")
        images = [bytes(round(v * 255) for v in raw[i:i + 784])
                  for i in range(0, len(raw), 784)]
        per_class.append(images)
    return per_class


def interleave(per_class):
    count = sum(len(c) for c in per_class)
    images, labels = [], []
    i = 0
    while len(images) < count:
        digit = i % 10
        idx = i // 10
        if idx < len(per_class[digit]):
            images.append(per_class[digit][idx])
            labels.append(digit)
        i += 1
    return images, labels


def write_idx(out_dir: pathlib.Path, images, labels):
    out_dir.mkdir(parents=True, exist_ok=True)
    img_payload = struct.pack(">iiii", IMAGES_MAGIC, len(images), 28, 28)
    img_payload += b"".join(images)
    lbl_payload = struct.pack(">ii", LABELS_MAGIC, len(labels))
    lbl_payload += bytes(labels)
    # mtime=0 for reproducible archives
    for name, payload in [("train-images-idx3-ubyte.gz", img_payload),
                          ("train-labels-idx1-ubyte.gz", lbl_payload)]:
        with open(out_dir / name, "wb") as f:
            with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(payload)
    print(f"wrote {len(images)} images to {out_dir}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data/mnist")
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        digits_dir = fetch_package(pathlib.Path(tmp))
        per_class = load_digits(digits_dir)
        images, labels = interleave(per_class)
        write_idx(pathlib.Path(args.out), images, labels)


if __name__ == "__main__":
    main()
