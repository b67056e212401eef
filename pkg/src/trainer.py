"""Pairwise coherence training loop with optional dialogue-act multi-task loss."""
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from config.config import RunConfig
from src import autodiff as ad
from src.autodiff import Tensor
from src.checkpoint import save_checkpoint
from src.dialogue import DialoguePair
from src.embeddings import Vocabulary
from src.evaluator import CoherenceScorer, evaluate_for_regime
from src.losses import TrainingRegime, coherence_loss, dap_loss_per_dialogue, total_loss
from src.model import CoherenceModel
from src.optimizer import Adam
from utils.custom_exception import ConfigurationError, DataError, DivergenceError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_NAME = "best.npz"
EPOCH_LOG_NAME = "epochs.jsonl"


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 20
    learning_rate: float = 0.0005
    dropout_p: float = 0.1
    seed: int = 42
    n_max: int = 40
    regime: TrainingRegime = TrainingRegime.M_DICOH

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "TrainConfig":
        return cls(batch_size=config.batch_size, epochs=config.epochs, learning_rate=config.learning_rate,
                   dropout_p=config.dropout_p, seed=config.seed, n_max=config.n_max,
                   regime=TrainingRegime.parse(config.regime)).validate()

    def validate(self) -> "TrainConfig":
        for key in ("batch_size", "epochs", "n_max"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"'{key}' must be positive, got {getattr(self, key)}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"'learning_rate' must be positive, got {self.learning_rate}")
        self.regime = TrainingRegime.parse(self.regime)
        return self

    def to_dict(self) -> dict:
        record = asdict(self)
        record["regime"] = TrainingRegime.parse(self.regime).value
        return record


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    gamma1: float
    gamma2: float
    val_metric: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    best_epoch: int
    best_metric: float
    checkpoint_path: str
    history: List[EpochRecord] = field(default_factory=list)


class Trainer:
    def __init__(self, config: TrainConfig, model: CoherenceModel, vocab: Vocabulary,
                 checkpoint_config: Optional[dict] = None):
        """
        Args:
            config: loop settings
            model: model to train in place
            vocab: vocabulary the model's embedding rows follow
            checkpoint_config: full run config recorded in checkpoints; defaults to `config`
        """
        self.config = config.validate()
        self.model = model
        self.vocab = vocab
        self.regime = config.regime
        self.checkpoint_config = dict(checkpoint_config or {})
        self.checkpoint_config.update(config.to_dict())
        self.checkpoint_config.update(utt_hidden=model.utt_hidden, dial_hidden=model.dial_hidden,
                                      embedding_dim=model.embedding_dim, dropout_p=model.dropout_p,
                                      trainable_embeddings=model.trainable_embeddings,
                                      dap_after_dropout=model.dap_after_dropout)
        self.rng = np.random.default_rng(config.seed)
        self.scorer = CoherenceScorer(model, vocab, config.n_max)

        params = {name: t for name, t in model.named_parameters(self.regime.parameter_groups) if t.requires_grad}
        self.optimizer = Adam(params, learning_rate=config.learning_rate)
        logger.info(f"Regime {self.regime.value}: optimizing groups {list(self.regime.parameter_groups)}")

    def batch_loss(self, batch: Sequence[DialoguePair]) -> Tensor:
        """Mean regime loss over one batch; must run inside an active tape."""
        size = len(batch)
        dialogues = [p.dial_a for p in batch] + [p.dial_b for p in batch]
        encoded = [self.scorer.encode(d) for d in dialogues]

        if self.regime.uses_coherence:
            scores = self.model.score(encoded, training=True, rng=self.rng)
            dap_inputs = self.model.dap_inputs(scores)
            lengths = scores.lengths
            l_coh = ad.mean(coherence_loss(scores.scores[:size], scores.scores[size:], [p.label for p in batch]))
        else:
            raw, dropped, _ = self.model.encode([u for d in encoded for u in d], training=True, rng=self.rng)
            dap_inputs = dropped if self.model.dap_after_dropout else raw
            lengths = np.array([len(d) for d in dialogues], dtype=np.int64)
            l_coh = None

        if not self.regime.uses_dap:
            return l_coh

        gold = []
        for dial in dialogues:
            if dial.da_labels is None:
                raise DataError(f"Regime {self.regime.value} needs DA labels, dialogue '{dial.id}' has none")
            gold.extend(dial.da_labels)
        per_dialogue = dap_loss_per_dialogue(self.model.predict_dialogue_acts(dap_inputs), gold, lengths)
        l_da_a = ad.mean(per_dialogue[:size])
        l_da_b = ad.mean(per_dialogue[size:])
        if self.regime.is_multitask:
            return total_loss(l_coh, l_da_a, l_da_b, self.model.balance)
        return (l_da_a + l_da_b) / 2.0

    def train_epoch(self, epoch: int, pairs: Sequence[DialoguePair]) -> float:
        order = self.rng.permutation(len(pairs))
        losses = []
        for batch_index, start in enumerate(range(0, len(pairs), self.config.batch_size)):
            batch = [pairs[int(k)] for k in order[start:start + self.config.batch_size]]
            self.optimizer.zero_grad()
            with ad.Tape() as tape:
                loss = self.batch_loss(batch)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(epoch, batch_index, value)
            tape.backward(loss)
            self.optimizer.step()
            losses.append(value)
        return float(np.mean(losses))

    def validate(self, pairs: Sequence[DialoguePair]) -> float:
        return evaluate_for_regime(self.scorer, pairs, self.regime.selects_on_dap, model_name=self.regime.value).metric

    def fit(self, train_pairs: Sequence[DialoguePair], val_pairs: Sequence[DialoguePair], out_dir: str) -> TrainResult:
        """
        Train for config.epochs, validating after every epoch. The checkpoint with
        the best validation metric is kept; ties keep the earlier epoch.
        """
        if not train_pairs or not val_pairs:
            raise PreconditionError("training needs non-empty training and validation pair sets")
        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
        log_path = os.path.join(out_dir, EPOCH_LOG_NAME)
        open(log_path, "w", encoding="utf-8").close()

        history: List[EpochRecord] = []
        best_epoch, best_metric = 0, -np.inf
        for epoch in range(1, self.config.epochs + 1):
            train_loss = self.train_epoch(epoch, train_pairs)
            metric = self.validate(val_pairs)
            record = EpochRecord(epoch=epoch, train_loss=train_loss, gamma1=self.model.balance.gamma1,
                                 gamma2=self.model.balance.gamma2, val_metric=metric)
            history.append(record)
            with open(log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            logger.info(f"epoch {epoch}: loss {train_loss:.6f} gamma1 {record.gamma1:.6f} "
                        f"gamma2 {record.gamma2:.6f} val {metric:.6f}")
            if metric > best_metric:
                best_epoch, best_metric = epoch, metric
                save_checkpoint(checkpoint_path, self.model, self.vocab, self.checkpoint_config,
                                adam=self.optimizer.state, epoch=epoch, metric=metric)

        logger.info(f"Best validation metric {best_metric:.6f} at epoch {best_epoch}")
        return TrainResult(best_epoch=best_epoch, best_metric=float(best_metric),
                           checkpoint_path=checkpoint_path, history=history)


def train(config: TrainConfig, train_pairs: Sequence[DialoguePair], val_pairs: Sequence[DialoguePair],
          model: CoherenceModel, vocab: Vocabulary, out_dir: str, checkpoint_config: Optional[Dict] = None) -> TrainResult:
    return Trainer(config, model, vocab, checkpoint_config).fit(train_pairs, val_pairs, out_dir)
