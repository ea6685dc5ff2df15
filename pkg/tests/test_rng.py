import math

import numpy as np

from horolab.rng import SampleStreams


def test_deterministic_across_instances():
    a = SampleStreams(12345).uniforms(np.arange(1000), 3)
    b = SampleStreams(12345).uniforms(np.arange(1000), 3)
    assert np.array_equal(a, b)


def test_partition_invariance():
    st = SampleStreams(7)
    full = st.uniforms(np.arange(10_000), 0)
    pieces = np.concatenate(
        [st.uniforms(np.arange(lo, lo + 2500), 0) for lo in range(0, 10_000, 2500)]
    )
    assert np.array_equal(full, pieces)


def test_range_and_uniformity():
    u = SampleStreams(99).uniforms(np.arange(100_000), 1)
    assert u.min() >= 0.0 and u.max() < 1.0
    # Kolmogorov-Smirnov against uniform, 1% critical value 1.63/sqrt(n)
    s = np.sort(u)
    n = s.size
    d = np.max(np.abs(s - (np.arange(1, n + 1) / n)))
    assert d < 1.63 / math.sqrt(n)


def test_slots_and_seeds_differ():
    st = SampleStreams(5)
    a = st.uniforms(np.arange(100), 0)
    b = st.uniforms(np.arange(100), 1)
    c = SampleStreams(6).uniforms(np.arange(100), 0)
    assert np.abs(a - b).min() > 0
    assert np.abs(a - c).min() > 0


def test_substream_independent():
    st = SampleStreams(5)
    a = st.substream(1).uniforms(np.arange(200), 0)
    b = st.substream(2).uniforms(np.arange(200), 0)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.2
