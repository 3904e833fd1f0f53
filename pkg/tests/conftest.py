import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))
import sample_corpus  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SMALL = 256


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return sample_corpus.build(sample_corpus.default_dir())


@pytest.fixture(scope="session")
def small_images(corpus_dir):
    from zbwm.bench.corpus import Corpus

    c = Corpus.from_dir(corpus_dir, SMALL)
    return [c.load(i) for i in range(len(c))]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_surrogate(small_images):
    """Small-mode surrogate decoder with a whitener fitted on the even half."""
    from zbwm.zerobit import SurrogateDecoder, augmented_decodes, fit_whitener

    dec = SurrogateDecoder(seed=0, m=256, shape=(SMALL, SMALL, 3))
    fit = small_images[0::2]
    return dec, fit_whitener(augmented_decodes(dec, fit, 2560, np.random.default_rng(0)))


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
