"""Smoke test for the shadowhash Python extension.

Build the module and put it on the path first, e.g.

    cargo build -p shadowhash-py --features extension-module
    cp target/debug/libshadowhash_py.so crates/python/python/shadowhash.so
    python crates/python/python/smoke_test.py
"""

import os
import random
import tempfile

import shadowhash as sh


def check_codes(tmp):
    rows = [[1, -1, 1, 1], [-1, -1, 1, -1], [1, -1, 1, 1]]
    codes = sh.PackedCodes.from_signs(rows)
    assert len(codes) == 3 and codes.bits == 4
    assert codes.unpack() == rows
    assert codes.hamming(0, 1) == 2 and codes.hamming(0, 2) == 0
    path = os.path.join(tmp, "codes.hlpc")
    codes.save(path)
    assert sh.PackedCodes.load(path).unpack() == rows
    assert sh.PackedCodes.binarize([[0.0, -0.5], [2.0, 0.1]]).unpack() == [[1, -1], [1, 1]]

    # ties broken by ascending id
    assert sh.rank(codes, 0, codes) == [(0, 0), (2, 0), (1, 2)]
    labels = [0, 1, 0]
    assert sh.mean_average_precision(codes, codes, labels, labels) == 1.0
    try:
        sh.PackedCodes.from_signs([[1, 0]])
    except ValueError:
        pass
    else:
        raise AssertionError("0 is not a valid code entry")


def check_losses():
    rng = random.Random(3)
    b = [[rng.uniform(-1, 1) for _ in range(4)] for _ in range(5)]
    u = sh.shadow_update(b)
    assert all(x == (1 if v >= 0 else -1) for r, ur in zip(b, u) for v, x in zip(r, ur))
    classes = [0, 1, 0, 2, 1]
    pair, shadow, norm, grad = sh.srh_loss(b, u, classes, 0.3, 0.2)

    def total(m):
        p, s, n, _ = sh.srh_loss(m, u, classes, 0.3, 0.2)
        return p + s + n

    h = 1e-6
    for i, j in [(0, 0), (2, 3), (4, 1)]:
        plus = [r[:] for r in b]
        minus = [r[:] for r in b]
        plus[i][j] += h
        minus[i][j] -= h
        fd = (total(plus) - total(minus)) / (2 * h)
        assert abs(fd - grad[i][j]) < 1e-4 * max(1.0, abs(fd)), (fd, grad[i][j])


def check_training(tmp):
    pixels, labels = sh.synthetic_images(2, 6, 0.1, 5)
    assert len(pixels) == 12 * 3072 and len(labels) == 12
    net, shadow, trace = sh.train(pixels, labels, 8, 0.5, 0.5, epochs=3, batch_size=12, seed=1)
    assert net.bits == 8 and len(shadow) == 12 and len(trace) == 3
    codes = net.encode(pixels)
    assert len(codes) == 12 and codes.bits == 8
    outputs = net.forward(pixels)
    assert sh.PackedCodes.binarize(outputs).unpack() == codes.unpack()
    path = os.path.join(tmp, "net.hlck")
    net.save(path)
    again = sh.Network.load(path)
    assert again.encode(pixels).unpack() == codes.unpack()


def check_cnnh():
    h, relaxed, binary = sh.cnnh_factorize_labels([0, 0, 1, 1, 1, 0], 2, sweeps=20, seed=0)
    assert len(h) == 6 and len(h[0]) == 2
    assert relaxed <= binary + 1e-9 or binary == 0.0
    assert binary == 0.0


def main():
    with tempfile.TemporaryDirectory() as tmp:
        check_codes(tmp)
        check_losses()
        check_training(tmp)
        check_cnnh()
    print("shadowhash python smoke test: ok")


if __name__ == "__main__":
    main()
