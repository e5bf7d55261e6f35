import numpy as np

from msamp.streams import substream


def test_independent_of_creation_order():
    a1 = substream(1, "noise").random(4)
    substream(1, "signals").random(100)
    a2 = substream(1, "noise").random(4)
    assert np.array_equal(a1, a2)


def test_labels_distinguish():
    xs = [substream(0, *k).random(3) for k in [("a",), ("b",), ("a", 1), ("a", 2), (1, "a")]]
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            assert not np.array_equal(xs[i], xs[j])
    assert not np.array_equal(substream(0, "a").random(3), substream(1, "a").random(3))
