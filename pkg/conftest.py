import os
import tempfile

os.environ.setdefault("DICOH_LOGS_DIR", tempfile.mkdtemp(prefix="dicoh-logs-"))

import numpy as np
import pytest

from config.config import DAILYDIALOG_LABELS, RunConfig
from src.data_loader import parse_dailydialog
from src.dialogue import Dialogue
from src.embeddings import EmbeddingMatrix, Vocabulary
from src.model import CoherenceModel

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures", "dailydialog")
FIXTURE_TEXT = os.path.join(FIXTURE_DIR, "dialogues_text.txt")
FIXTURE_ACTS = os.path.join(FIXTURE_DIR, "dialogues_act.txt")


def make_dialogue(dialogue_id, utterances, speakers=None, da_labels=None):
    speakers = speakers if speakers is not None else [k % 2 for k in range(len(utterances))]
    if da_labels is None:
        da_labels = [k % len(DAILYDIALOG_LABELS) for k in range(len(utterances))]
    return Dialogue(id=dialogue_id, utterances=list(utterances), speakers=list(speakers), da_labels=list(da_labels))


def synthetic_dialogues(n, rng, min_len=3, max_len=6, vocab_size=30):
    """Dialogues of random words; utterance k of dialogue d is unique by construction."""
    dialogues = []
    for d in range(n):
        m = int(rng.integers(min_len, max_len + 1))
        utterances = []
        for k in range(m):
            words = [f"w{int(rng.integers(vocab_size))}" for _ in range(int(rng.integers(2, 6)))]
            utterances.append(" ".join(words + [f"d{d}u{k}"]))
        labels = [int(rng.integers(len(DAILYDIALOG_LABELS))) for _ in range(m)]
        dialogues.append(make_dialogue(f"syn-{d:04d}", utterances, da_labels=labels))
    return dialogues


def fine_grained_dialogues(n=12, n_labels=10):
    """SwitchBoard-like dialogues: uneven turn taking and act labels 0..n_labels-1, all present."""
    dialogues = []
    for d in range(n):
        m = 4 + d % 3
        utterances = [f"caller {d} mentions topic{k} and detail{d}x{k}" for k in range(m)]
        speakers = [(k // 2) % 2 for k in range(m)]
        labels = [(d + k) % n_labels for k in range(m)]
        dialogues.append(make_dialogue(f"sw-{d:03d}", utterances, speakers=speakers, da_labels=labels))
    return dialogues


def build_tiny_model(dialogues, seed=0, utt_hidden=3, dial_hidden=3, dim=5, dropout_p=0.0, **kwargs):
    vocab = Vocabulary.build([u for d in dialogues for u in d.utterances])
    embedding = EmbeddingMatrix.random(vocab, dim, np.random.default_rng(seed), scale=0.5)
    model = CoherenceModel(embedding, DAILYDIALOG_LABELS, utt_hidden=utt_hidden, dial_hidden=dial_hidden,
                           dropout_p=dropout_p, seed=seed, **kwargs)
    return model, vocab


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixture_dialogues():
    return parse_dailydialog(FIXTURE_TEXT, FIXTURE_ACTS)


@pytest.fixture
def uncle_charles(fixture_dialogues):
    return fixture_dialogues[0]


@pytest.fixture
def testing_config():
    return RunConfig.from_preset("testing")
