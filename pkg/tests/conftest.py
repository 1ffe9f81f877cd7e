"""Shared strategies and helpers for the test suite."""

import numpy as np
from hypothesis import strategies as st

from mirrorwyner.prob import JointPmf2, JointPmf3, Pmf, PrivacyMapping


def _normalize(values):
    arr = np.asarray(values, dtype=float)
    return arr / arr.sum()


@st.composite
def pmfs(draw, min_size=2, max_size=6):
    n = draw(st.integers(min_size, max_size))
    vals = draw(st.lists(st.floats(1e-3, 1.0), min_size=n, max_size=n))
    return Pmf(_normalize(vals))


@st.composite
def joint2(draw, max_size=5):
    a = draw(st.integers(2, max_size))
    b = draw(st.integers(2, max_size))
    vals = draw(st.lists(st.floats(1e-3, 1.0), min_size=a * b, max_size=a * b))
    return JointPmf2(_normalize(vals).reshape(a, b))


@st.composite
def joint3(draw, max_size=4):
    dims = tuple(draw(st.integers(2, max_size)) for _ in range(3))
    k = int(np.prod(dims))
    vals = draw(st.lists(st.floats(1e-3, 1.0), min_size=k, max_size=k))
    return JointPmf3(_normalize(vals).reshape(dims))


@st.composite
def channels(draw, n_in=None, n_out=None, max_size=5):
    n_in = n_in or draw(st.integers(2, max_size))
    n_out = n_out or draw(st.integers(2, max_size))
    rows = [
        _normalize(draw(st.lists(st.floats(1e-3, 1.0),
                                 min_size=n_out, max_size=n_out)))
        for _ in range(n_in)
    ]
    return PrivacyMapping(np.vstack(rows))
