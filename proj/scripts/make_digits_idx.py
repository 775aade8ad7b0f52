#!/usr/bin/env python3
"""Build an augmented 28x28 handwritten-digit dataset in IDX format.

Upsamples scikit-learn's 8x8 digits to 28x28 and augments them with random
rotations and shifts to the requested train/test sizes. Source digits are
split 80/20 before augmentation so no source image leaks across the split.
Fully deterministic for a fixed seed.
"""

import argparse
import pathlib
import struct

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits


def write_idx_images(path, imgs):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(imgs), 28, 28))
        f.write(np.ascontiguousarray(imgs, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def augment(img8, rng):
    img = ndimage.zoom(img8 / 16.0, 28 / 8, order=1)
    img = ndimage.rotate(img, rng.uniform(-12, 12), reshape=False, order=1)
    img = ndimage.shift(img, rng.uniform(-2.5, 2.5, size=2), order=1)
    img = np.clip(img, 0.0, 1.0)
    return (img * 255 + 0.5).astype(np.uint8)


def build(pool_images, pool_labels, n, rng):
    by_class = [np.flatnonzero(pool_labels == c) for c in range(10)]
    images = np.empty((n, 28, 28), dtype=np.uint8)
    labels = np.empty(n, dtype=np.uint8)
    for i in range(n):
        c = i % 10
        src = pool_images[rng.choice(by_class[c])]
        images[i] = augment(src, rng)
        labels[i] = c
    perm = rng.permutation(n)
    return images[perm], labels[perm]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="data")
    ap.add_argument("--n-train", type=int, default=10000)
    ap.add_argument("--n-test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    digits = load_digits()
    images = digits.images.astype(float)
    labels = digits.target

    rng = np.random.default_rng(args.seed)
    train_pool, test_pool = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        cut = int(0.8 * len(idx))
        train_pool.extend(idx[:cut])
        test_pool.extend(idx[cut:])
    train_pool = np.array(train_pool)
    test_pool = np.array(test_pool)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr_img, tr_lbl = build(images[train_pool], labels[train_pool], args.n_train, rng)
    te_img, te_lbl = build(images[test_pool], labels[test_pool], args.n_test, rng)
    write_idx_images(out / "digits-train-images.idx", tr_img)
    write_idx_labels(out / "digits-train-labels.idx", tr_lbl)
    write_idx_images(out / "digits-test-images.idx", te_img)
    write_idx_labels(out / "digits-test-labels.idx", te_lbl)
    print(f"wrote {args.n_train} train / {args.n_test} test images to {out}")


if __name__ == "__main__":
    main()
