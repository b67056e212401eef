"""
Shared utterance encoder, dialogue coherence scorer and dialogue-act head.

Utterances of a whole batch are encoded together: token indices form a
(utterances, timesteps) matrix and every layer runs over the leading axis at
once. Dialogues are then regrouped into (dialogues, slots) with fully masked
slots for shorter dialogues.
"""
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src import autodiff as ad
from src.autodiff import Tensor
from src.embeddings import EmbeddingMatrix, EncodedUtterance, PAD_INDEX
from src.layers import AttentionParams, LstmCellParams, attend, bilstm, dropout
from src.losses import LossBalance
from utils.custom_exception import DimensionError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class UtteranceEncoderParams:
    embedding: Tensor
    forward: LstmCellParams
    backward: LstmCellParams
    attention: AttentionParams

    @property
    def output_size(self) -> int:
        return 2 * self.forward.hidden_size


@dataclass
class DialogueEncoderParams:
    forward: LstmCellParams
    backward: LstmCellParams
    attention: AttentionParams
    scorer_w: Tensor
    scorer_b: Tensor

    @property
    def output_size(self) -> int:
        return 2 * self.forward.hidden_size


@dataclass
class DapHeadParams:
    W: Tensor
    b: Tensor
    labels: Tuple[str, ...]


@dataclass
class AttentionWeights:
    """Word weights per utterance (each row sums to 1 over real tokens) and utterance weights per dialogue."""
    words: List[np.ndarray]
    utterances: np.ndarray


@dataclass
class BatchScores:
    scores: Tensor                 # (dialogues,)
    utterance_vectors: Tensor      # (utterances, 2*utt_hidden), before dropout
    coherence_inputs: Tensor       # what the dialogue encoder consumed
    word_attention: np.ndarray     # (utterances, timesteps)
    utterance_attention: np.ndarray  # (dialogues, slots)
    offsets: np.ndarray            # first utterance row of each dialogue
    lengths: np.ndarray            # utterances per dialogue


def expected_parameter_count(vocab_size: int, embedding_dim: int, utt_hidden: int, dial_hidden: int, n_labels: int) -> int:
    def lstm(input_size, hidden):
        return 4 * (input_size * hidden + hidden * hidden + 2 * hidden)
    utt_out, dial_out = 2 * utt_hidden, 2 * dial_hidden
    return (vocab_size * embedding_dim
            + 2 * lstm(embedding_dim, utt_hidden) + utt_out
            + 2 * lstm(utt_out, dial_hidden) + dial_out
            + dial_out + 1
            + n_labels * utt_out + n_labels
            + 2)


def stack_utterances(utterances: Sequence[EncodedUtterance]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack into (U, T) index/mask matrices trimmed to the longest real utterance."""
    width = max(u.length for u in utterances)
    indices = np.stack([u.indices[:width] for u in utterances])
    mask = np.stack([u.mask[:width] for u in utterances])
    return indices, mask


def encode_utterance_batch(enc: UtteranceEncoderParams, indices: np.ndarray, mask: np.ndarray) -> Tuple[Tensor, Tensor]:
    """Emb -> BiLSTM -> masked attention for a (U, T) batch. Returns (vectors, word attention)."""
    if not np.all(mask.any(axis=1)):
        raise PreconditionError("every utterance needs at least one unmasked token")
    steps = [ad.embedding(enc.embedding, indices[:, t], padding_idx=PAD_INDEX) for t in range(indices.shape[1])]
    step_mask = [mask[:, t] for t in range(indices.shape[1])]
    hidden = bilstm(enc.forward, enc.backward, steps, step_mask)
    return attend(enc.attention, hidden, step_mask)


def encode_utterance_vector(enc: UtteranceEncoderParams, u: EncodedUtterance, training: bool,
                            rng: np.random.Generator, dropout_p: float = 0.1) -> Tensor:
    """Vector of a single utterance; dropout applies in training mode."""
    if u.length < 1:
        raise PreconditionError("utterance has no unmasked token")
    vectors, _ = encode_utterance_batch(enc, u.indices[None, :u.length], u.mask[None, :u.length])
    return dropout(ad.reshape(vectors, (enc.output_size,)), dropout_p, training, rng)


def score_dialogue_batch(dec: DialogueEncoderParams, utterance_vectors: Tensor, lengths: Sequence[int]) -> Tuple[Tensor, Tensor]:
    """Dialogue BiLSTM + attention + linear scorer over utterance rows grouped by `lengths`."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if len(lengths) == 0 or np.any(lengths < 1):
        raise PreconditionError("every dialogue needs at least one utterance")
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    slots = int(lengths.max())
    steps, step_mask = [], []
    for k in range(slots):
        present = lengths > k
        steps.append(ad.take_rows(utterance_vectors, np.where(present, offsets + k, -1)))
        step_mask.append(present)
    hidden = bilstm(dec.forward, dec.backward, steps, step_mask)
    d, alpha = attend(dec.attention, hidden, step_mask)
    return ad.matvec(d, dec.scorer_w) + dec.scorer_b, alpha


def predict_dialogue_acts(head: DapHeadParams, utterance_vectors: Tensor) -> Tensor:
    """softmax(W u + b) per utterance row."""
    if utterance_vectors.shape[-1] != head.W.shape[1]:
        raise DimensionError(f"DAP head expects {head.W.shape[1]}-dim utterance vectors, got {utterance_vectors.shape[-1]}")
    return ad.softmax(ad.linear(utterance_vectors, head.W, head.b))


class CoherenceModel:
    """
    Every trainable tensor of the coherence model: embedding, utterance and
    dialogue encoders, scorer, DAP head and the two loss-balance parameters.
    """

    def __init__(self, embedding: EmbeddingMatrix, labels: Sequence[str], utt_hidden: int = 128,
                 dial_hidden: int = 256, dropout_p: float = 0.1, init_gamma: float = 2.0,
                 dap_after_dropout: bool = False, seed: int = 42):
        rng = np.random.default_rng(seed)
        dim = embedding.dim
        self.dropout_p = dropout_p
        self.dap_after_dropout = dap_after_dropout
        self.trainable_embeddings = embedding.trainable
        self.encoder = UtteranceEncoderParams(
            embedding=ad.parameter(embedding.values, "embedding"),
            forward=LstmCellParams.init(dim, utt_hidden, rng, "utt_lstm.forward"),
            backward=LstmCellParams.init(dim, utt_hidden, rng, "utt_lstm.backward"),
            attention=AttentionParams.init(2 * utt_hidden, rng, "utt_attention"),
        )
        self.encoder.embedding.requires_grad = embedding.trainable
        bound = 1.0 / math.sqrt(2 * dial_hidden)
        self.dialogue = DialogueEncoderParams(
            forward=LstmCellParams.init(2 * utt_hidden, dial_hidden, rng, "dial_lstm.forward"),
            backward=LstmCellParams.init(2 * utt_hidden, dial_hidden, rng, "dial_lstm.backward"),
            attention=AttentionParams.init(2 * dial_hidden, rng, "dial_attention"),
            scorer_w=ad.parameter(rng.uniform(-bound, bound, 2 * dial_hidden), "scorer.w"),
            scorer_b=ad.parameter(0.0, "scorer.b"),
        )
        bound = 1.0 / math.sqrt(2 * utt_hidden)
        self.dap = DapHeadParams(
            W=ad.parameter(rng.uniform(-bound, bound, (len(labels), 2 * utt_hidden)), "dap.W"),
            b=ad.parameter(np.zeros(len(labels)), "dap.b"),
            labels=tuple(labels),
        )
        self.balance = LossBalance.init(init_gamma)

        expected = expected_parameter_count(embedding.values.shape[0], dim, utt_hidden, dial_hidden, len(labels))
        actual = self.parameter_count()
        if actual != expected:
            raise DimensionError(f"Model has {actual} parameters, expected {expected}")
        logger.info(f"Built coherence model with {actual} parameters "
                    f"(vocab={embedding.values.shape[0]}, emb={dim}, utt={utt_hidden}, dial={dial_hidden}, labels={len(labels)})")

    @property
    def utt_hidden(self) -> int:
        return self.encoder.forward.hidden_size

    @property
    def dial_hidden(self) -> int:
        return self.dialogue.forward.hidden_size

    @property
    def embedding_dim(self) -> int:
        return self.encoder.embedding.shape[1]

    def named_parameters(self, groups: Sequence[str] = ("encoder", "dialogue", "dap", "balance")) -> Iterator[Tuple[str, Tensor]]:
        if "encoder" in groups:
            yield "embedding", self.encoder.embedding
            for direction in ("forward", "backward"):
                for name, t in getattr(self.encoder, direction).named_parameters():
                    yield f"utt_lstm.{direction}.{name}", t
            yield "utt_attention.W", self.encoder.attention.W
        if "dialogue" in groups:
            for direction in ("forward", "backward"):
                for name, t in getattr(self.dialogue, direction).named_parameters():
                    yield f"dial_lstm.{direction}.{name}", t
            yield "dial_attention.W", self.dialogue.attention.W
            yield "scorer.w", self.dialogue.scorer_w
            yield "scorer.b", self.dialogue.scorer_b
        if "dap" in groups:
            yield "dap.W", self.dap.W
            yield "dap.b", self.dap.b
        if "balance" in groups:
            yield "eta1", self.balance.eta1
            yield "eta2", self.balance.eta2

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def parameter_count(self) -> int:
        return int(sum(t.values.size for _, t in self.named_parameters()))

    def zero_grad(self) -> None:
        for _, t in self.named_parameters():
            t.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        if missing:
            raise DimensionError(f"State is missing parameters: {missing}")
        for name, tensor in params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise DimensionError(f"Parameter '{name}' has shape {tensor.shape}, state has {values.shape}")
            tensor.values[...] = values

    def encode(self, utterances: Sequence[EncodedUtterance], training: bool,
               rng: Optional[np.random.Generator]) -> Tuple[Tensor, Tensor, np.ndarray]:
        """Returns (vectors before dropout, vectors after dropout, word attention)."""
        indices, mask = stack_utterances(utterances)
        vectors, alpha = encode_utterance_batch(self.encoder, indices, mask)
        return vectors, dropout(vectors, self.dropout_p, training, rng), alpha.values

    def score(self, dialogues: Sequence[Sequence[EncodedUtterance]], training: bool = False,
              rng: Optional[np.random.Generator] = None) -> BatchScores:
        """Coherence scores for a batch of dialogues, each a sequence of encoded utterances."""
        if not dialogues or any(len(d) == 0 for d in dialogues):
            raise PreconditionError("score: every dialogue needs at least one utterance")
        lengths = np.array([len(d) for d in dialogues], dtype=np.int64)
        flat = [u for d in dialogues for u in d]
        raw, dropped, word_alpha = self.encode(flat, training, rng)
        scores, utt_alpha = score_dialogue_batch(self.dialogue, dropped, lengths)
        return BatchScores(
            scores=scores, utterance_vectors=raw, coherence_inputs=dropped,
            word_attention=word_alpha, utterance_attention=utt_alpha.values,
            offsets=np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths=lengths,
        )

    def dap_inputs(self, batch: BatchScores) -> Tensor:
        return batch.coherence_inputs if self.dap_after_dropout else batch.utterance_vectors

    def predict_dialogue_acts(self, utterance_vectors: Tensor) -> Tensor:
        return predict_dialogue_acts(self.dap, utterance_vectors)


def score_dialogue(enc: UtteranceEncoderParams, dec: DialogueEncoderParams, dial: Sequence[EncodedUtterance],
                   training: bool, rng: Optional[np.random.Generator],
                   dropout_p: float = 0.1) -> Tuple[Tensor, List[Tensor], AttentionWeights]:
    """
    Score one dialogue.

    Returns:
        (s, utterance vectors, attention weights); the vectors are taken before
        dropout, the scorer consumes them after dropout.
    """
    if len(dial) == 0:
        raise PreconditionError("score_dialogue: empty dialogue")
    indices, mask = stack_utterances(dial)
    vectors, word_alpha = encode_utterance_batch(enc, indices, mask)
    scores, utt_alpha = score_dialogue_batch(dec, dropout(vectors, dropout_p, training, rng), [len(dial)])
    rows = [ad.getitem(vectors, k) for k in range(len(dial))]
    words = [word_alpha.values[k, :dial[k].length].copy() for k in range(len(dial))]
    return ad.reshape(scores, ()), rows, AttentionWeights(words=words, utterances=utt_alpha.values[0].copy())
