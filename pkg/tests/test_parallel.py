# -*- coding: utf-8 -*-
import threading
import time

import pytest

from hiereval.parallel import map_ordered


def test_order_matches_input():
    def slow_square(x):
        time.sleep(0.001 * (10 - x))
        return x * x

    assert map_ordered(slow_square, range(10), workers=4) == [x * x for x in range(10)]


def test_concurrency_is_bounded():
    lock = threading.Lock()
    running, peak = [0], [0]

    def track(_):
        with lock:
            running[0] += 1
            peak[0] = max(peak[0], running[0])
        time.sleep(0.01)
        with lock:
            running[0] -= 1

    map_ordered(track, range(12), workers=3)
    assert 1 <= peak[0] <= 3


def test_sequential_and_empty():
    assert map_ordered(str, [], workers=8) == []
    assert map_ordered(str, [1, 2], workers=1) == ["1", "2"]
    with pytest.raises(ValueError):
        map_ordered(str, [1], workers=0)
