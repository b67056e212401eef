"""Dialogue-act, pairwise coherence and uncertainty-weighted multi-task losses."""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from src import autodiff as ad
from src.autodiff import Tensor
from utils.custom_exception import ConfigurationError, DataError, DimensionError


class TrainingRegime(str, Enum):
    S_DICOH = "s-dicoh"
    M_DICOH = "m-dicoh"
    S_DAP = "s-dap"
    M_DAP = "m-dap"

    @classmethod
    def parse(cls, value) -> "TrainingRegime":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("_", "-")
        for regime in cls:
            if regime.value == text:
                return regime
        raise ConfigurationError(f"Unknown training regime '{value}', expected one of {[r.value for r in cls]}")

    @property
    def uses_coherence(self) -> bool:
        return self is not TrainingRegime.S_DAP

    @property
    def uses_dap(self) -> bool:
        return self is not TrainingRegime.S_DICOH

    @property
    def is_multitask(self) -> bool:
        return self in (TrainingRegime.M_DICOH, TrainingRegime.M_DAP)

    @property
    def selects_on_dap(self) -> bool:
        """DAP regimes select checkpoints on validation macro-F1, the others on pairwise accuracy."""
        return self in (TrainingRegime.S_DAP, TrainingRegime.M_DAP)

    @property
    def parameter_groups(self) -> Tuple[str, ...]:
        if self is TrainingRegime.S_DICOH:
            return ("encoder", "dialogue")
        if self is TrainingRegime.S_DAP:
            return ("encoder", "dap")
        return ("encoder", "dialogue", "dap", "balance")


@dataclass
class LossBalance:
    """gamma_i = exp(eta_i) keeps both balance weights positive."""
    eta1: Tensor
    eta2: Tensor

    @classmethod
    def init(cls, gamma: float = 2.0) -> "LossBalance":
        if gamma <= 0:
            raise ConfigurationError(f"initial gamma must be positive, got {gamma}")
        return cls(eta1=ad.parameter(math.log(gamma), "eta1"), eta2=ad.parameter(math.log(gamma), "eta2"))

    @property
    def gamma1(self) -> float:
        return float(np.exp(self.eta1.values))

    @property
    def gamma2(self) -> float:
        return float(np.exp(self.eta2.values))


def dap_loss(predictions: Tensor, gold_labels: Sequence[int]) -> Tensor:
    """Average cross-entropy -(1/m) sum_k log p(u_k)[a_k] over the rows of `predictions`."""
    gold = np.asarray(gold_labels, dtype=np.int64)
    m = predictions.shape[0]
    if m < 1 or gold.shape != (m,):
        raise DimensionError(f"dap_loss: {m} predictions for {gold.shape[0] if gold.ndim else 0} labels")
    n_labels = predictions.shape[-1]
    bad = np.flatnonzero((gold < 0) | (gold >= n_labels))
    if bad.size:
        k = int(bad[0])
        raise DataError(f"DA label {int(gold[k])} at utterance position {k} is outside [0, {n_labels})")
    picked = predictions[np.arange(m), gold]
    return -ad.mean(ad.log(picked))


def dap_loss_per_dialogue(predictions: Tensor, gold_labels: Sequence[int], lengths: Sequence[int]) -> Tensor:
    """dap_loss of every dialogue of a batch whose utterance rows are grouped by `lengths`."""
    gold = np.asarray(gold_labels, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    n_labels = predictions.shape[-1]
    bad = np.flatnonzero((gold < 0) | (gold >= n_labels))
    if bad.size:
        k = int(bad[0])
        raise DataError(f"DA label {int(gold[k])} at utterance row {k} is outside [0, {n_labels})")
    log_picked = ad.log(predictions[np.arange(gold.shape[0]), gold])
    averaging = np.zeros((lengths.shape[0], gold.shape[0]))
    start = 0
    for row, length in enumerate(lengths):
        averaging[row, start:start + length] = 1.0 / length
        start += length
    return -ad.linear(log_picked, ad.Tensor(averaging))


def coherence_loss(s_i, s_j, label) -> Tensor:
    """
    Pairwise hinge max(0, 1 - s_preferred + s_other); dial_i is preferred when label == 0.
    Works elementwise for score vectors with a label vector.
    """
    s_i, s_j = ad.as_tensor(s_i), ad.as_tensor(s_j)
    label = np.asarray(label)
    if np.any((label != 0) & (label != 1)):
        raise DataError(f"preference label must be 0 or 1, got {label}")
    first = label == 0
    preferred = ad.where(first, s_i, s_j)
    other = ad.where(first, s_j, s_i)
    return ad.relu(1.0 - preferred + other)


def total_loss(l_coh, l_da_i, l_da_j, bal: LossBalance) -> Tensor:
    """l_coh/gamma1^2 + (l_da_i + l_da_j)/gamma2^2 + log gamma1 + log gamma2 with gamma = exp(eta)."""
    gamma1 = ad.exp(bal.eta1)
    gamma2 = ad.exp(bal.eta2)
    return (ad.as_tensor(l_coh) / (gamma1 * gamma1)
            + (ad.as_tensor(l_da_i) + ad.as_tensor(l_da_j)) / (gamma2 * gamma2)
            + ad.log(gamma1) + ad.log(gamma2))
