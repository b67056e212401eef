"""Inference over a trained model: pair discrimination, DA prediction and attention inspection."""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.dialogue import Dialogue, DialoguePair, unique_dialogues
from src.embeddings import EncodedUtterance, Vocabulary, encode_utterance, tokenize
from src.metrics import EvalReport, macro_f1, pairwise_accuracy
from src.model import CoherenceModel, score_dialogue
from utils.custom_exception import DataError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

TextKey = Tuple[str, ...]


class CoherenceScorer:
    """
    Scores dialogues with a CoherenceModel in eval mode. Token encodings are
    cached per utterance text; scores are never cached since parameters change
    between training epochs.
    """

    def __init__(self, model: CoherenceModel, vocab: Vocabulary, n_max: int, batch_size: int = 64):
        if batch_size < 1:
            raise PreconditionError(f"batch_size must be positive, got {batch_size}")
        self.model = model
        self.vocab = vocab
        self.n_max = n_max
        self.batch_size = batch_size
        self._encoded: Dict[str, EncodedUtterance] = {}

    def encode(self, dial: Dialogue) -> List[EncodedUtterance]:
        out = []
        for text in dial.utterances:
            if text not in self._encoded:
                self._encoded[text] = encode_utterance(tokenize(text), self.vocab, self.n_max)
            out.append(self._encoded[text])
        return out

    def score_dialogues(self, dialogues: Sequence[Dialogue]) -> Dict[TextKey, float]:
        """Score every distinct dialogue once; keyed by utterance text sequence."""
        distinct: Dict[TextKey, Dialogue] = {}
        for dial in dialogues:
            distinct.setdefault(dial.text_key, dial)
        keys = list(distinct)
        scores: Dict[TextKey, float] = {}
        for start in range(0, len(keys), self.batch_size):
            chunk = keys[start:start + self.batch_size]
            batch = self.model.score([self.encode(distinct[k]) for k in chunk], training=False)
            for key, value in zip(chunk, batch.scores.values):
                scores[key] = float(value)
        return scores

    def score(self, dial: Dialogue) -> float:
        return self.score_dialogues([dial])[dial.text_key]

    def evaluate_pairs(self, pairs: Sequence[DialoguePair], problem_domain: str = "", model_name: str = "") -> EvalReport:
        """Pairwise discrimination accuracy; DA labels are never read."""
        if not pairs:
            raise PreconditionError("evaluate_pairs: no pairs")
        scores = self.score_dialogues(unique_dialogues(pairs))
        report = pairwise_accuracy(((scores[p.dial_a.text_key], scores[p.dial_b.text_key], p.label) for p in pairs),
                                   problem_domain, model_name)
        logger.info(f"{model_name or 'model'} on {problem_domain or 'pairs'}: "
                    f"{report.correct}/{report.total} = {report.accuracy:.4f}")
        return report

    def predict_dialogue_acts(self, dialogues: Sequence[Dialogue]) -> List[np.ndarray]:
        """Argmax DA label per utterance, one array per dialogue."""
        out: List[np.ndarray] = []
        for start in range(0, len(dialogues), self.batch_size):
            chunk = dialogues[start:start + self.batch_size]
            flat = [u for d in chunk for u in self.encode(d)]
            vectors, _, _ = self.model.encode(flat, training=False, rng=None)
            labels = np.argmax(self.model.predict_dialogue_acts(vectors).values, axis=-1)
            offset = 0
            for dial in chunk:
                out.append(labels[offset:offset + len(dial)])
                offset += len(dial)
        return out

    def evaluate_dap(self, dialogues: Sequence[Dialogue], problem_domain: str = "", model_name: str = "") -> EvalReport:
        """Per-label P/R/F1 and macro-F1 over the utterances of labeled dialogues."""
        if not dialogues:
            raise PreconditionError("evaluate_dap: no dialogues")
        for dial in dialogues:
            if dial.da_labels is None:
                raise DataError(f"Dialogue '{dial.id}' has no DA labels")
        predictions = np.concatenate(self.predict_dialogue_acts(dialogues))
        gold = np.concatenate([np.asarray(d.da_labels, dtype=np.int64) for d in dialogues])
        report = macro_f1(predictions, gold, self.model.dap.labels, problem_domain, model_name)
        logger.info(f"{model_name or 'model'} DAP on {len(dialogues)} dialogues: macro-F1 {report.macro_f1:.4f}")
        return report

    def inspect(self, dial: Dialogue) -> Tuple[float, List[dict]]:
        """
        Coherence score plus one record per utterance: its tokens with word
        attention weights (summing to 1) and the utterance's dialogue attention weight.
        """
        encoded = self.encode(dial)
        s, _, weights = score_dialogue(self.model.encoder, self.model.dialogue, encoded,
                                       training=False, rng=None, dropout_p=self.model.dropout_p)
        records = []
        for k, text in enumerate(dial.utterances):
            tokens = tokenize(text)[:self.n_max]
            records.append({
                "dialogue_id": dial.id,
                "utterance": k,
                "speaker": dial.speakers[k],
                "tokens": tokens,
                "word_attention": [float(w) for w in weights.words[k]],
                "utterance_attention": float(weights.utterances[k]),
            })
        return s.item(), records


def dap_dialogues(pairs: Sequence[DialoguePair]) -> List[Dialogue]:
    """The distinct original dialogues of a pair set."""
    return [d for d in unique_dialogues(pairs) if d.is_original]


def format_inspection(score: float, records: Sequence[dict]) -> str:
    """Aligned text rendering: one line per utterance, word weights in parentheses."""
    lines = [f"score: {score:.6f}"]
    for record in records:
        words = " ".join(f"{t}({w:.3f})" for t, w in zip(record["tokens"], record["word_attention"]))
        lines.append(f"[{record['utterance_attention']:.3f}] {record['speaker']}: {words}")
    return "\n".join(lines)


def evaluate_for_regime(scorer: CoherenceScorer, pairs: Sequence[DialoguePair], regime_selects_dap: bool,
                        problem_domain: str = "", model_name: str = "") -> EvalReport:
    if regime_selects_dap:
        return scorer.evaluate_dap(dap_dialogues(pairs), problem_domain, model_name)
    return scorer.evaluate_pairs(pairs, problem_domain, model_name)
