import os
import sys

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from dnls_gauge.spectral import SpectralFunction  # noqa: E402

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=300, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def spectral_functions(draw, min_cutoff=0, max_cutoff=6, scale=1.0):
    N = draw(st.integers(min_cutoff, max_cutoff))
    re = draw(st.lists(finite, min_size=2 * N + 1, max_size=2 * N + 1))
    im = draw(st.lists(finite, min_size=2 * N + 1, max_size=2 * N + 1))
    return SpectralFunction(N, scale * (np.array(re) + 1j * np.array(im)))


def random_u(rng, N, decay=1.0, scale=1.0):
    n = np.abs(np.arange(-N, N + 1))
    c = (rng.standard_normal(2 * N + 1) + 1j * rng.standard_normal(2 * N + 1)) / (1 + n) ** decay
    return SpectralFunction(N, scale * c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report their verdicts here; printed once at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(k: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
