import numpy as np
import pytest

from wordmap.embeddings import EmbeddingSpace, Vocabulary

ACCEPTANCE_RESULTS = []


def make_space(vectors, prefix="w", rank=None):
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    tokens = [f"{prefix}{i}" for i in range(len(vectors))]
    return EmbeddingSpace(Vocabulary(tokens, rank), vectors)


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
