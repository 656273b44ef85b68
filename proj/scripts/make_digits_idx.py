#!/usr/bin/env python3
"""Export the scikit-learn 8x8 digits set as IDX files under data/."""

import os
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx_images(path, images):
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">BBBB", 0, 0, 0x08, 3))
        f.write(struct.pack(">III", n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">BBBB", 0, 0, 0x08, 1))
        f.write(struct.pack(">I", len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "..", "data")
    os.makedirs(out_dir, exist_ok=True)

    digits = load_digits()
    images = np.round(digits.images / 16.0 * 255.0).astype(np.uint8)
    labels = digits.target

    n_train = 1200
    write_idx_images(os.path.join(out_dir, "train-images.idx"), images[:n_train])
    write_idx_labels(os.path.join(out_dir, "train-labels.idx"), labels[:n_train])
    write_idx_images(os.path.join(out_dir, "test-images.idx"), images[n_train:])
    write_idx_labels(os.path.join(out_dir, "test-labels.idx"), labels[n_train:])
    print(f"wrote {n_train} train / {len(labels) - n_train} test examples")


if __name__ == "__main__":
    main()
