#!/usr/bin/env python3
"""Lay out MNIST and Fashion-MNIST as IDX files under $LUTNET_DATA_DIR.

MNIST is copied from the `mnist-data` npm tarball, which ships the original
IDX files. Fashion-MNIST comes from the `fashion-mnist` npm tarball (one JSON
array of 784-byte images per class); the first 6000 images of each class form
the training split and the remainder the test split. The package's class 0
file carries two empty arrays; records that are not 784 bytes are dropped.

    npm pack mnist-data fashion-mnist
    tar xzf mnist-data-*.tgz -C mnist-pkg
    tar xzf fashion-mnist-*.tgz -C fashion-pkg
    prepare_datasets.py --mnist mnist-pkg/package --fashion fashion-pkg/package --out $LUTNET_DATA_DIR
"""
import argparse
import json
import random
import shutil
import struct
from pathlib import Path

MNIST_FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]


def write_idx(prefix: Path, images, labels):
    assert all(len(img) == 28 * 28 for img in images)
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mnist", type=Path, required=True)
    ap.add_argument("--fashion", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--train-per-class", type=int, default=6000)
    args = ap.parse_args()

    mnist_out = args.out / "mnist"
    mnist_out.mkdir(parents=True, exist_ok=True)
    for name in MNIST_FILES:
        shutil.copyfile(args.mnist / "data" / name, mnist_out / name)

    train, test = [], []
    for cls in range(10):
        data = json.loads((args.fashion / "src" / "clothes" / f"{cls}.json").read_text())["data"]
        kept = [img for img in data if len(img) == 28 * 28]
        if len(kept) != len(data):
            print(f"fashion class {cls}: dropped {len(data) - len(kept)} malformed records")
        data = kept
        train += [(img, cls) for img in data[: args.train_per_class]]
        test += [(img, cls) for img in data[args.train_per_class :]]
    rng = random.Random(0)
    rng.shuffle(train)
    rng.shuffle(test)
    fashion_out = args.out / "fashion"
    fashion_out.mkdir(parents=True, exist_ok=True)
    write_idx(fashion_out / "train", [i for i, _ in train], [c for _, c in train])
    write_idx(fashion_out / "t10k", [i for i, _ in test], [c for _, c in test])
    print(f"mnist: copied {len(MNIST_FILES)} files; fashion: {len(train)} train / {len(test)} test")


if __name__ == "__main__":
    main()
