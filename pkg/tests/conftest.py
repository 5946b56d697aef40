import numpy as np
import pytest

from hedgecast.engine import Observation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_stream(T, m, seed=0, dates=False):
    """Small well-behaved stream: targets near a fixed combination of bases."""
    import datetime

    gen = np.random.default_rng(seed)
    w = gen.uniform(0.0, 1.0, size=m)
    w /= w.sum()
    stream = []
    for t in range(T):
        z = np.sin(0.05 * t + np.arange(m)) + 0.1 * gen.standard_normal(m)
        y = float(w @ z) + 0.05 * gen.standard_normal()
        ts = datetime.date(2020, 1, 1) + datetime.timedelta(days=t) if dates else t
        stream.append(Observation(timestamp=ts, y=y, z=z))
    return stream
