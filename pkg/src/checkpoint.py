"""
Checkpoint container: one .npz archive holding every parameter tensor, the Adam
moments and a JSON metadata record (training config, vocabulary and its hash,
DA labels, Adam hyperparameters and step, seed, epoch, validation metric).
Arrays are stored as float64, so a save/load round trip is bit-exact.
"""
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.embeddings import EmbeddingMatrix, Vocabulary
from src.model import CoherenceModel
from src.optimizer import AdamState
from utils.custom_exception import CompatibilityError, ParseError, UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

FORMAT_VERSION = 1
PARAM_PREFIX = "param."
ADAM_M_PREFIX = "adam_m."
ADAM_V_PREFIX = "adam_v."
METADATA_KEY = "metadata"


@dataclass
class Checkpoint:
    state: Dict[str, np.ndarray]
    vocab: Vocabulary
    labels: Tuple[str, ...]
    config: dict
    adam: Optional[AdamState] = None
    epoch: int = 0
    metric: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def regime(self) -> str:
        return self.config["regime"]

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def vocab_hash(self) -> str:
        return self.vocab.fingerprint()

    def build_model(self) -> CoherenceModel:
        """Instantiate a CoherenceModel with the stored architecture and load the stored parameters."""
        embedding = EmbeddingMatrix(values=np.array(self.state["embedding"]),
                                    trainable=bool(self.config.get("trainable_embeddings", True)))
        model = CoherenceModel(
            embedding, self.labels,
            utt_hidden=int(self.config["utt_hidden"]), dial_hidden=int(self.config["dial_hidden"]),
            dropout_p=float(self.config["dropout_p"]), init_gamma=float(self.config.get("init_gamma", 2.0)),
            dap_after_dropout=bool(self.config.get("dap_after_dropout", False)), seed=self.seed,
        )
        model.load_state_dict(self.state)
        return model

    def verify_vocab(self, vocab: Vocabulary) -> None:
        if vocab.fingerprint() != self.vocab_hash:
            raise CompatibilityError(
                f"Vocabulary hash {vocab.fingerprint()[:12]} does not match checkpoint vocabulary {self.vocab_hash[:12]}")


def save_checkpoint(path: str, model: CoherenceModel, vocab: Vocabulary, config: dict,
                    adam: Optional[AdamState] = None, epoch: int = 0, metric: Optional[float] = None,
                    extra: Optional[dict] = None) -> str:
    """Write the archive to `path` (exactly that name) and `vocab.txt` next to it."""
    arrays = {PARAM_PREFIX + name: values for name, values in model.state_dict().items()}
    metadata = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "labels": list(model.dap.labels),
        "vocab": list(vocab.itos),
        "vocab_hash": vocab.fingerprint(),
        "epoch": epoch,
        "metric": metric,
        "extra": extra or {},
    }
    if adam is not None:
        metadata["adam"] = {"learning_rate": adam.learning_rate, "beta1": adam.beta1, "beta2": adam.beta2,
                            "epsilon": adam.epsilon, "step": adam.step}
        arrays.update({ADAM_M_PREFIX + name: m for name, m in adam.m.items()})
        arrays.update({ADAM_V_PREFIX + name: v for name, v in adam.v.items()})
    arrays[METADATA_KEY] = np.array(json.dumps(metadata, sort_keys=True))

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    vocab.save(os.path.join(os.path.dirname(os.path.abspath(path)), "vocab.txt"))
    logger.info(f"Saved checkpoint (epoch {epoch}, metric {metric}) to {path}")
    return path


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise UsageError(f"Checkpoint not found: {path}")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise ParseError(f"not a checkpoint archive ({e})", path)
    with archive:
        if METADATA_KEY not in archive.files:
            raise ParseError("checkpoint has no metadata record", path)
        metadata = json.loads(str(archive[METADATA_KEY]))
        state, m, v = {}, {}, {}
        for key in archive.files:
            if key.startswith(PARAM_PREFIX):
                state[key[len(PARAM_PREFIX):]] = archive[key]
            elif key.startswith(ADAM_M_PREFIX):
                m[key[len(ADAM_M_PREFIX):]] = archive[key]
            elif key.startswith(ADAM_V_PREFIX):
                v[key[len(ADAM_V_PREFIX):]] = archive[key]

    if metadata.get("format_version") != FORMAT_VERSION:
        raise CompatibilityError(f"{path}: unsupported checkpoint format {metadata.get('format_version')}")
    vocab = Vocabulary(metadata["vocab"][2:])
    if vocab.fingerprint() != metadata["vocab_hash"]:
        raise CompatibilityError(f"{path}: stored vocabulary does not match its hash")
    adam = None
    if "adam" in metadata:
        adam = AdamState(m=m, v=v, **metadata["adam"])
    return Checkpoint(state=state, vocab=vocab, labels=tuple(metadata["labels"]), config=metadata["config"],
                      adam=adam, epoch=int(metadata["epoch"]), metric=metadata["metric"],
                      extra=metadata.get("extra", {}))
