"""Pairwise discrimination accuracy, dialogue-act macro-F1 and multi-seed summaries."""
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import precision_recall_fscore_support

from utils.custom_exception import PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class EvalReport:
    problem_domain: str
    model: str
    total: int = 0
    correct: int = 0
    accuracy: Optional[float] = None
    per_label: Dict[str, Dict[str, float]] = field(default_factory=dict)
    macro_f1: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def metric(self) -> float:
        return self.accuracy if self.accuracy is not None else self.macro_f1


def pairwise_accuracy(scored_pairs: Iterable[Tuple[float, float, int]], problem_domain: str = "",
                      model: str = "") -> EvalReport:
    """
    Fraction of pairs whose preferred dialogue scores strictly higher.

    Args:
        scored_pairs: (s_a, s_b, label) with label 0 when dial_a is preferred; ties count as wrong
    """
    scored = np.asarray(list(scored_pairs), dtype=np.float64)
    if scored.size == 0:
        raise PreconditionError("pairwise_accuracy: no pairs")
    s_a, s_b, label = scored[:, 0], scored[:, 1], scored[:, 2]
    preferred = np.where(label == 0, s_a, s_b)
    other = np.where(label == 0, s_b, s_a)
    correct = int(np.count_nonzero(preferred > other))
    total = int(scored.shape[0])
    return EvalReport(problem_domain=problem_domain, model=model, total=total, correct=correct,
                      accuracy=correct / total)


def macro_f1(predictions: Sequence[int], gold: Sequence[int], label_set: Sequence[str],
             problem_domain: str = "", model: str = "") -> EvalReport:
    """Per-label P/R/F1 (0/0 := 0) and their unweighted mean over labels seen in gold or predictions."""
    predictions = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size == 0 or predictions.shape != gold.shape:
        raise PreconditionError(f"macro_f1: need equal non-empty inputs, got {predictions.shape} and {gold.shape}")
    present = sorted(set(gold.tolist()) | set(predictions.tolist()))
    precision, recall, f1, support = precision_recall_fscore_support(
        gold, predictions, labels=present, average=None, zero_division=0)
    per_label = {}
    for k, label in enumerate(present):
        name = label_set[label] if 0 <= label < len(label_set) else str(label)
        per_label[name] = {"precision": float(precision[k]), "recall": float(recall[k]),
                           "f1": float(f1[k]), "support": int(support[k])}
    total = int(gold.size)
    correct = int(np.count_nonzero(predictions == gold))
    return EvalReport(problem_domain=problem_domain, model=model, total=total, correct=correct,
                      per_label=per_label, macro_f1=float(np.mean(f1)))


@dataclass
class SeedSummary:
    values: List[float]
    mean: float
    std: float

    def format(self) -> str:
        return format_mean_std(self.mean, self.std)


def format_mean_std(mean: float, std: float) -> str:
    """Percent with two decimals and the leading zero of the deviation dropped: '94.23 ± .74'."""
    spread = f"{100.0 * std:.2f}"
    if spread.startswith("0."):
        spread = spread[1:]
    return f"{100.0 * mean:.2f} ± {spread}"


def summarize_seeds(values: Sequence[float]) -> SeedSummary:
    """Mean and sample (n-1) standard deviation over repeated runs."""
    if len(values) < 2:
        raise PreconditionError(f"a multi-seed summary needs at least 2 runs, got {len(values)}")
    series = pd.Series(list(values), dtype="float64")
    # offsets from the first run are exactly zero when every run agrees
    offsets = series - series.iloc[0]
    return SeedSummary(values=list(map(float, values)), mean=float(series.iloc[0] + offsets.mean()),
                       std=float(offsets.std(ddof=1)))


def run_five_seeds(run: Callable[[int], float], seeds: Sequence[int] = (0, 1, 2, 3, 4)) -> SeedSummary:
    """Run `run(seed)` for every seed and summarize the returned metric."""
    if len(seeds) < 2:
        raise PreconditionError(f"need at least 2 seeds, got {len(seeds)}")
    values = []
    for seed in seeds:
        value = float(run(seed))
        logger.info(f"seed {seed}: metric {value:.6f}")
        values.append(value)
    summary = summarize_seeds(values)
    logger.info(f"{len(seeds)} seeds: {summary.format()}")
    return summary


def report_table(reports: Sequence[EvalReport], domains: Sequence[str] = ()) -> pd.DataFrame:
    """Rows = models, columns = problem domains, cells = accuracy (or macro-F1) in percent."""
    records = [{"model": r.model, "domain": r.problem_domain, "value": round(100.0 * r.metric, 2)} for r in reports]
    table = pd.DataFrame(records).pivot_table(index="model", columns="domain", values="value", sort=False)
    ordered = [d for d in domains if d in table.columns] + [c for c in table.columns if c not in domains]
    return table[ordered]
