"""Smoke test for the csfkit extension module.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import csfkit


def main():
    d = csfkit.ncd(b"abc" * 100, b"abc" * 100)
    assert 0.0 <= d <= 0.15, d
    m = csfkit.ncd_matrix([b"aaaa" * 64, b"bbbb" * 64, b"aaab" * 64])
    assert len(m) == 3 and all(m[i][j] == m[j][i] for i in range(3) for j in range(3))

    labels = csfkit.cluster([[0, 0.1, 1, 1], [0.1, 0, 1, 1], [1, 1, 0, 0.1], [1, 1, 0.1, 0]], 2, seed=1)
    assert labels[0] == labels[1] and labels[2] == labels[3] and labels[0] != labels[2]

    c = csfkit.CsfCurve([5, 5, 2, 2], [0.5, 0.5, 0.1, 0.1])
    assert c.select_one_std() == 3
    assert c.feature_vector() == c.mean + c.std

    points, truth = csfkit.gen_mixture(6.0, 40, seed=3)
    assert len(points) == 120 and sorted(set(truth)) == [0, 1, 2]
    curve = csfkit.point_csf(points, kmax=5, samples=20, seed=3)
    assert len(curve) == 5 and len(curve.feature_vector()) == 10
    assert csfkit.mixture_k(points, "bic", kmax=6, seed=3) == 3
    assert 1 <= csfkit.gap_k(points, kmax=6, refs=5, seed=3) <= 6

    values = csfkit.exact_csf([0, 1, 2, 3, 4, 5], "bandwidth_sum")
    assert values[-1] == 0 and all(a >= b for a, b in zip(values, values[1:]))

    items = [bytes([i % 3 * 80 + (j % 5)] * 8 + [j]) * 8 for i in range(12) for j in [i]]
    bc = csfkit.byte_csf(items, kmax=3, samples=10, seed=2)
    assert bc.kmax == 3

    img = [[1.0 if 2 <= x < 5 and 2 <= y < 5 else 0.0 for x in range(10)] for y in range(10)]
    square = [(x, y) for y in range(2, 5) for x in range(2, 5)]
    selected, scores = csfkit.ensemble(img, [square, [(8, 8)]])
    assert len(scores) == 2 and selected == [0, 1]

    print("csfkit", csfkit.__version__, "smoke test OK")


if __name__ == "__main__":
    main()
