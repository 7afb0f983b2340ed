"""Shared fixtures.

The expensive pieces (corpus synthesis and model training at the reference
settings) are session-scoped and built lazily, so unit-test runs stay fast
while the full suite trains each model exactly once. Training wall time
accumulates into ``training_times`` for the budget assertion.
"""
import time

import pytest

from goaldial.corpus import (ablate, build_candidate_pool,
                             extract_training_examples, split_by_seeker)
from goaldial.synth import SynthConfig, generate_synthetic_corpus

# reference corpus: 50 seekers x 4 dialogs = 200 dialogs, seed 7. The graph
# is sized so a good share of test-split facts never surface in training
# dialogs; knowledge grounding then has something real to contribute.
CORPUS_PARAMS = dict(n_seekers=50, dialogs_per_seeker=4, graph_size=350,
                     seed=7)
SPLIT_SEED = 7
POOL_SEED_BASE = 1000


def _pool_seed(i: int) -> int:
    return POOL_SEED_BASE + i


@pytest.fixture(scope="session")
def training_times():
    return {}


@pytest.fixture(scope="session")
def corpus():
    return generate_synthetic_corpus(SynthConfig(**CORPUS_PARAMS))


@pytest.fixture(scope="session")
def graph(corpus):
    return corpus[0]


@pytest.fixture(scope="session")
def records(corpus):
    return corpus[1]


@pytest.fixture(scope="session")
def splits(records):
    return split_by_seeker(records, seed=SPLIT_SEED)


@pytest.fixture(scope="session")
def train_examples(splits):
    return [e for r in splits["train"] for e in extract_training_examples(r)]


@pytest.fixture(scope="session")
def test_examples(splits):
    return [e for r in splits["test"] for e in extract_training_examples(r)]


@pytest.fixture(scope="session")
def train_bank(train_examples):
    return sorted({e.response.text for e in train_examples})


@pytest.fixture(scope="session")
def test_pools(test_examples, train_bank):
    return [build_candidate_pool(e, train_bank, seed=_pool_seed(i))
            for i, e in enumerate(test_examples)]


def _timed(training_times, key, fn):
    t0 = time.process_time()
    out = fn()
    training_times[key] = time.process_time() - t0
    return out


@pytest.fixture(scope="session")
def trained_planner(splits, graph, training_times):
    from goaldial.planner import PlannerConfig, train_planner
    model, _ = _timed(training_times, "planner",
                      lambda: train_planner(PlannerConfig(), splits["train"],
                                            graph, seed=0))
    return model


@pytest.fixture(scope="session")
def trained_ranker(train_examples, graph, training_times):
    from goaldial.ranker import RankerConfig, train_ranker
    model, _ = _timed(training_times, "ranker",
                      lambda: train_ranker(RankerConfig(), train_examples,
                                           seed=0, graph=graph))
    return model


@pytest.fixture(scope="session")
def trained_ranker_ablated(train_examples, graph, training_times):
    from goaldial.ranker import RankerConfig, train_ranker
    stripped = [ablate(e, drop_goal=True, drop_knowledge=True)
                for e in train_examples]
    model, _ = _timed(training_times, "ranker_ablated",
                      lambda: train_ranker(RankerConfig(), stripped,
                                           seed=0, graph=graph))
    return model


@pytest.fixture(scope="session")
def trained_generator(train_examples, graph, training_times):
    from goaldial.generator import GeneratorConfig, train_generator
    model, _ = _timed(training_times, "generator",
                      lambda: train_generator(GeneratorConfig(),
                                              train_examples, seed=0,
                                              graph=graph))
    return model


@pytest.fixture(scope="session")
def trained_generator_ablated(train_examples, graph, training_times):
    from goaldial.generator import GeneratorConfig, train_generator
    stripped = [ablate(e, drop_goal=True, drop_knowledge=True)
                for e in train_examples]
    model, _ = _timed(training_times, "generator_ablated",
                      lambda: train_generator(GeneratorConfig(), stripped,
                                              seed=0, graph=graph))
    return model


# small corpus for integration tests that need realistic data but not the
# reference training budget
@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(
        SynthConfig(n_seekers=12, dialogs_per_seeker=2, graph_size=80,
                    seed=3))


@pytest.fixture(scope="session")
def small_models(small_corpus):
    """Quickly trained planner + ranker on the small corpus; adequate for
    plumbing tests, useless for accuracy claims."""
    from goaldial.planner import PlannerConfig, train_planner
    from goaldial.ranker import RankerConfig, train_ranker
    graph, records = small_corpus
    examples = [e for r in records for e in extract_training_examples(r)]
    planner, _ = train_planner(PlannerConfig(epochs=2), records, graph,
                               seed=1)
    ranker, _ = train_ranker(
        RankerConfig(epochs=1, n_negatives=2, hard_negatives=0), examples,
        seed=1)
    return {"graph": graph, "records": records, "planner": planner,
            "ranker": ranker}
