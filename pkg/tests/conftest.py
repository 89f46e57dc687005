import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # expose tests/oracles.py

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def toy_spec():
    from aram.backends import load_toy_spec

    return load_toy_spec(FIXTURES / "toy_table_spec.json")


@pytest.fixture(scope="session")
def qa_examples():
    from aram.evaluation import load_fixtures

    return load_fixtures(FIXTURES / "qa_fixture.jsonl")


@pytest.fixture(scope="session")
def qa_backend():
    from aram.backends import count_backend

    corpus = [
        line.strip()
        for line in (FIXTURES / "qa_corpus.txt").read_text().splitlines()
        if line.strip()
    ]
    return count_backend(corpus, context_weight=0.9)


def random_pair(seed: int, vocab_size: int | None = None):
    """Floored random distribution pair shared by several test modules."""
    from aram.dists import ProbVector

    rng = np.random.default_rng(seed)
    v = int(rng.integers(2, 65)) if vocab_size is None else vocab_size
    return (
        ProbVector(rng.dirichlet(np.ones(v))).floored(),
        ProbVector(rng.dirichlet(np.ones(v))).floored(),
    )
