import numpy as np

from evslice.events import EventStream, SensorGeometry


def random_stream(rng: np.random.Generator, max_events=10_000, max_side=128, duration_us=None):
    W = int(rng.integers(1, max_side + 1))
    H = int(rng.integers(1, max_side + 1))
    n = int(np.floor(np.exp(rng.uniform(0, np.log(max_events + 1))))) - 1
    if duration_us is None:
        duration_us = int(rng.integers(1, 3_000_000))
    t0 = int(rng.integers(0, 1_000_000))
    t = np.sort(rng.integers(t0, t0 + duration_us + 1, size=n))
    if n > 4 and rng.random() < 0.5:
        # bursts of equal timestamps
        dup = rng.random(n) < 0.3
        dup[0] = False
        idx = np.maximum.accumulate(np.where(dup, 0, np.arange(n)))
        t = t[idx]
    x = rng.integers(0, W, size=n)
    y = rng.integers(0, H, size=n)
    p = rng.choice(np.array([-1, 1]), size=n)
    return EventStream.from_arrays(SensorGeometry(W, H), t, x, y, p)
