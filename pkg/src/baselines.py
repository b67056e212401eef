"""Random and CoSim coherence baselines."""
import os
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from src.dialogue import Dialogue, DialoguePair
from src.embeddings import tokenize
from utils.custom_exception import UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

STOPWORDS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "resources", "smart_stopwords.txt")


class StopwordList:
    """Lowercased stop words; membership is exact string equality after lowercasing."""

    def __init__(self, words: Iterable[str]):
        self.words = frozenset(w.strip().lower() for w in words if w.strip())

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.words

    def __len__(self):
        return len(self.words)

    @classmethod
    def load(cls, path: str = STOPWORDS_PATH) -> "StopwordList":
        if not os.path.exists(path):
            raise UsageError(f"Stop word list not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            stopwords = cls(line for line in f if not line.startswith("#"))
        logger.info(f"Loaded {len(stopwords)} stop words from {path}")
        return stopwords


def random_rank(pair: DialoguePair, rng: np.random.Generator) -> int:
    """Fair coin: the predicted preference label for `pair`."""
    return int(rng.integers(2))


def _utterance_vector(text: str, embeddings: Mapping[str, np.ndarray], stopwords: StopwordList, dim: int) -> np.ndarray:
    vectors = [embeddings[t] for t in tokenize(text) if t not in stopwords and t in embeddings]
    if not vectors:
        return np.zeros(dim)
    return np.mean(vectors, axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    return 0.0 if norm == 0.0 else float(a @ b / norm)


def cosim_score(dial: Dialogue, embeddings: Mapping[str, np.ndarray], stopwords: StopwordList) -> float:
    """
    Mean cosine similarity of adjacent utterance vectors, where an utterance
    vector averages the embeddings of its non-stopword tokens. Utterances with no
    content word get a zero vector; a cosine involving a zero vector is 0; a
    single-utterance dialogue scores 0.
    """
    if len(dial) < 2:
        return 0.0
    dim = len(next(iter(embeddings.values()))) if embeddings else 1
    vectors = [_utterance_vector(u, embeddings, stopwords, dim) for u in dial.utterances]
    return float(np.mean([_cosine(vectors[k], vectors[k + 1]) for k in range(len(vectors) - 1)]))


class CoSimScorer:
    """Caches CoSim scores per utterance sequence; perturbed dialogues share their source id."""

    def __init__(self, embeddings: Mapping[str, np.ndarray], stopwords: StopwordList):
        self.embeddings = embeddings
        self.stopwords = stopwords
        self._cache: Dict[Tuple[str, ...], float] = {}
        logger.info(f"CoSim scorer with {len(embeddings)} word vectors and {len(stopwords)} stop words")

    def coverage(self, dialogues: Iterable[Dialogue]) -> float:
        """Share of content (non-stop-word) tokens that have a vector."""
        content = [t for d in dialogues for u in d.utterances for t in tokenize(u) if t not in self.stopwords]
        if not content:
            return 0.0
        covered = sum(1 for t in content if t in self.embeddings)
        logger.info(f"CoSim vector coverage {covered}/{len(content)} content tokens")
        return covered / len(content)

    def __call__(self, dial: Dialogue) -> float:
        key = dial.text_key
        if key not in self._cache:
            self._cache[key] = cosim_score(dial, self.embeddings, self.stopwords)
        return self._cache[key]
