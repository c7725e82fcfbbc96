import numpy as np
import pytest

from stochrank.data import CandidateResponse, DialogueInstance
from stochrank.ranker import TrainConfig, train
from stochrank.synth import SyntheticCorpusSpec, generate_synthetic_corpus
from stochrank.text import corpus_stats


def make_instance(inst_id="q0", context=("hello world", "how are you"), texts=None, rel=0):
    texts = texts or ["fine thanks and you", "purple monkey dishwasher", "the weather is nice"]
    cands = tuple(
        CandidateResponse(id=f"{inst_id}-r{j}", text=t, provenance="ground_truth" if j == rel else "sampled_random")
        for j, t in enumerate(texts)
    )
    labels = tuple(1 if j == rel else 0 for j in range(len(texts)))
    return DialogueInstance(id=inst_id, context=context, candidates=cands, labels=labels)


@pytest.fixture(scope="session")
def small_corpus():
    spec = SyntheticCorpusSpec(
        instance_count=60, vocab_size=120, relevant_overlap=0.6, distractor_overlap=0.1, seed=0
    )
    return generate_synthetic_corpus(spec)


@pytest.fixture(scope="session")
def small_stats(small_corpus):
    return corpus_stats(small_corpus)


@pytest.fixture(scope="session")
def trained_params(small_corpus, small_stats):
    return train(small_corpus, TrainConfig(epochs=3), 0, small_stats)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
