"""Write a small MNIST subset as IDX files.

Source: the `mnist` npm package (10k digits stored as JSON, intensities / 255).
Usage: npm pack mnist && tar xzf mnist-*.tgz && python3 mnist_subset.py package/src/digits OUT_DIR
"""
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 300
TEST_PER_CLASS = 100


def write_images(path, images):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            fh.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(bytes(labels))


def main(src, out):
    src, out = Path(src), Path(out)
    train, test = [], []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        imgs = [
            [int(round(v * 255)) for v in data[i * 784 : (i + 1) * 784]]
            for i in range(len(data) // 784)
        ]
        train += [(i, digit, img) for i, img in enumerate(imgs[:TRAIN_PER_CLASS])]
        test += [
            (i, digit, img)
            for i, img in enumerate(imgs[TRAIN_PER_CLASS : TRAIN_PER_CLASS + TEST_PER_CLASS])
        ]
    # interleave classes so prefixes of the files are balanced
    train.sort(key=lambda t: (t[0], t[1]))
    test.sort(key=lambda t: (t[0], t[1]))
    write_images(out / "train-images-idx3-ubyte", [t[2] for t in train])
    write_labels(out / "train-labels-idx1-ubyte", [t[1] for t in train])
    write_images(out / "t10k-images-idx3-ubyte", [t[2] for t in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [t[1] for t in test])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
