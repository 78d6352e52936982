"""Hypothesis strategies for admissible parameters."""

from __future__ import annotations

from hypothesis import assume
from hypothesis import strategies as st

from pmeshrink.params import Params


@st.composite
def admissible_params(draw, max_m: float = 4.0, max_extra_sigma: float = 8.0, max_N: int = 3):
    m = draw(st.floats(1.05, max_m))
    q = draw(st.floats(0.05, 0.95))
    threshold = 2.0 * (1.0 - q) / (m - 1.0)
    sigma = threshold + draw(st.floats(1e-3, max_extra_sigma))
    assume(sigma > threshold)
    N = draw(st.integers(1, max_N))
    return Params(m, q, sigma, N)
