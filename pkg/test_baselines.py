import math

import numpy as np
import pytest

from conftest import make_dialogue
from src.baselines import CoSimScorer, StopwordList, cosim_score, random_rank
from src.dialogue import DialoguePair
from src.metrics import pairwise_accuracy
from utils.custom_exception import UsageError

VECTORS = {
    "cat": np.array([1.0, 0.0]),
    "dog": np.array([0.0, 1.0]),
    "fish": np.array([1.0, 1.0]),
}


@pytest.fixture(scope="module")
def stopwords():
    return StopwordList.load()


def test_stopword_file_loads(stopwords):
    assert len(stopwords) > 500
    for word in ("the", "a", "is", "and", "very"):
        assert word in stopwords
    assert "The" in stopwords
    assert "captain" not in stopwords
    assert "# SMART English stop word list" not in stopwords


def test_missing_stopword_file(tmp_path):
    with pytest.raises(UsageError):
        StopwordList.load(str(tmp_path / "none.txt"))


def test_identical_utterances_score_one(stopwords):
    dial = make_dialogue("same", ["the cat", "a cat"])
    assert cosim_score(dial, VECTORS, stopwords) == pytest.approx(1.0)


def test_orthogonal_utterances_score_zero(stopwords):
    dial = make_dialogue("orth", ["cat", "dog"])
    assert cosim_score(dial, VECTORS, stopwords) == pytest.approx(0.0)


def test_three_utterance_hand_computation(stopwords):
    dial = make_dialogue("three", ["the cat", "a dog", "cat and fish"])
    expected = (0.0 + 0.5 / math.sqrt(1.25)) / 2
    assert cosim_score(dial, VECTORS, stopwords) == pytest.approx(expected, abs=1e-12)


def test_fallbacks(stopwords):
    assert cosim_score(make_dialogue("one", ["cat"]), VECTORS, stopwords) == 0.0
    assert cosim_score(make_dialogue("empty", ["the", "cat"]), VECTORS, stopwords) == 0.0
    assert cosim_score(make_dialogue("oov", ["zebra", "cat"]), VECTORS, stopwords) == 0.0


def test_stopwords_do_not_change_the_score(stopwords):
    plain = make_dialogue("plain", ["cat fish", "dog", "fish cat dog"])
    padded = make_dialogue("padded", ["cat fish the", "is dog very", "a fish cat dog and"])
    assert cosim_score(plain, VECTORS, stopwords) == pytest.approx(cosim_score(padded, VECTORS, stopwords), abs=1e-12)


def test_scorer_separates_perturbations_of_one_source(stopwords):
    scorer = CoSimScorer(VECTORS, stopwords)
    first = make_dialogue("src#uo", ["cat", "cat", "dog"])
    second = make_dialogue("src#uo", ["cat", "dog", "cat"])
    assert scorer(first) == pytest.approx(0.5)
    assert scorer(second) == pytest.approx(0.0)


def test_random_rank_is_a_fair_coin():
    rng = np.random.default_rng(0)
    dial = make_dialogue("x", ["a", "b"])
    pair = DialoguePair("x:uo:0:0", dial, make_dialogue("x#uo", ["b", "a"]), 0, "uo")
    heads = sum(random_rank(pair, rng) for _ in range(10_000))
    assert abs(heads / 10_000 - 0.5) <= 0.015


def test_random_baseline_accuracy_is_near_half():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 2, size=2000)
    coins = rng.integers(0, 2, size=2000)
    scored = [(1.0, 0.0, int(label)) if c == 0 else (0.0, 1.0, int(label)) for c, label in zip(coins, labels)]
    assert 0.47 <= pairwise_accuracy(scored).accuracy <= 0.53


def test_scorer_reports_vector_coverage_of_content_words(stopwords):
    scorer = CoSimScorer(VECTORS, stopwords)
    dialogues = [make_dialogue("a", ["the cat", "a zebra"]), make_dialogue("b", ["dog and fish", "the"])]
    assert scorer.coverage(dialogues) == pytest.approx(3 / 4)
    assert scorer.coverage([make_dialogue("c", ["the", "is"])]) == 0.0
