import json
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.dialogue import CorpusSplit, Dialogue, DialoguePair, LabelSet
from utils.custom_exception import DataError, ParseError, PreconditionError, UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

EOU = "__eou__"
SPLIT_NAMES = ("train", "validation", "test")
LABELS_FILE = "labels.txt"


def parse_dailydialog(text_path: str, act_path: str, id_prefix: str = "dd",
                      labels: Optional[LabelSet] = None) -> List[Dialogue]:
    """
    Parse the DailyDialog distribution format.

    Args:
        text_path: one dialogue per line, utterances separated by "__eou__"
        act_path: one line per dialogue, space-separated 1-based acts (one per utterance)
        id_prefix: dialogue ids are "<id_prefix>-<line number>"
        labels: act inventory bounding the act numbers, DailyDialog's four acts by default

    Returns:
        Dialogues with alternating speakers 0,1,0,... and 0-based DA labels.
    """
    for path in (text_path, act_path):
        if not os.path.exists(path):
            raise UsageError(f"Corpus file not found: {path}")
    with open(text_path, "r", encoding="utf-8") as f:
        text_lines = f.read().splitlines()
    with open(act_path, "r", encoding="utf-8") as f:
        act_lines = f.read().splitlines()
    if len(act_lines) < len(text_lines):
        raise ParseError(f"act file has {len(act_lines)} lines for {len(text_lines)} dialogues", act_path, len(act_lines) + 1)

    n_labels = (labels or LabelSet.dailydialog()).size
    dialogues: List[Dialogue] = []
    skipped = 0
    for line_number, (text_line, act_line) in enumerate(zip(text_lines, act_lines), start=1):
        segments = [s.strip() for s in text_line.split(EOU)]
        while segments and not segments[-1]:
            segments.pop()
        if not segments:
            logger.warning(f"{text_path}:{line_number}: empty dialogue line skipped")
            skipped += 1
            continue
        try:
            acts = [int(a) for a in act_line.split()]
        except ValueError:
            raise ParseError(f"non-integer dialogue act in '{act_line.strip()}'", act_path, line_number)
        if len(acts) != len(segments):
            raise ParseError(f"{len(segments)} utterances but {len(acts)} dialogue acts", text_path, line_number)
        for act in acts:
            if not 1 <= act <= n_labels:
                raise ParseError(f"dialogue act {act} outside 1-{n_labels}", act_path, line_number)
        dialogues.append(Dialogue(
            id=f"{id_prefix}-{line_number:05d}",
            utterances=segments,
            speakers=[k % 2 for k in range(len(segments))],
            da_labels=[a - 1 for a in acts],
        ))
    logger.info(f"Parsed {len(dialogues)} dialogues from {text_path} ({skipped} empty lines skipped)")
    return dialogues


def split_sizes(n: int, fractions: Sequence[float]) -> Tuple[int, ...]:
    exact = np.asarray(fractions, dtype=np.float64) * n
    sizes = np.floor(exact).astype(int)
    # stable sort keeps the earlier split first among equal remainders
    for k in np.argsort(-(exact - sizes), kind="stable")[:n - int(sizes.sum())]:
        sizes[k] += 1
    return tuple(int(s) for s in sizes)


def split_corpus(dialogues: Sequence[Dialogue], fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1),
                 seed: int = 42) -> Tuple[CorpusSplit, CorpusSplit, CorpusSplit]:
    """
    Seeded shuffle then contiguous slicing. Sizes use largest-remainder rounding, so
    each split is within 1 of its exact share; ties in the remainder favour train.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise PreconditionError(f"split fractions must be 3 non-negative values summing to 1, got {fractions}")
    n = len(dialogues)
    if n < 3:
        raise PreconditionError(f"split_corpus needs at least 3 dialogues, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val, n_test = split_sizes(n, fractions)
    shuffled = [dialogues[int(k)] for k in order]
    return (CorpusSplit("train", shuffled[:n_train]),
            CorpusSplit("validation", shuffled[n_train:n_train + n_val]),
            CorpusSplit("test", shuffled[n_train + n_val:]))


def write_canonical(path: str, split: CorpusSplit) -> None:
    """One JSON record per line: id, utterances, speakers and (optional) da_labels."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for dial in split.dialogues:
            f.write(json.dumps(dial.to_dict(), ensure_ascii=False) + "\n")


def read_canonical(path: str, name: Optional[str] = None) -> CorpusSplit:
    if not os.path.exists(path):
        raise UsageError(f"Corpus file not found: {path}")
    dialogues: List[Dialogue] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                dialogues.append(Dialogue.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError, DataError) as e:
                raise ParseError(f"malformed dialogue record ({e})", path, line_number)
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return CorpusSplit(name, dialogues)


def write_pairs(path: str, pairs: Sequence[DialoguePair]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pair in pairs:
            f.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")


def read_pairs(path: str) -> List[DialoguePair]:
    if not os.path.exists(path):
        raise UsageError(f"Pair file not found: {path}")
    pairs: List[DialoguePair] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                pairs.append(DialoguePair.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError, DataError) as e:
                raise ParseError(f"malformed pair record ({e})", path, line_number)
    return pairs


def check_unique_ids(splits: Sequence[CorpusSplit]) -> None:
    seen: Dict[str, str] = {}
    for split in splits:
        for dial in split.dialogues:
            if dial.id in seen:
                raise DataError(f"Dialogue id '{dial.id}' appears in '{seen[dial.id]}' and '{split.name}'")
            seen[dial.id] = split.name


def corpus_stats(splits: Sequence[CorpusSplit], n_labels: Optional[int] = None) -> pd.DataFrame:
    """Per-split and overall statistics: dialogues, DA labels, avg utterances/dialogue, avg words/utterance."""
    rows = []
    everything: List[Dialogue] = []
    for split in splits:
        everything.extend(split.dialogues)
        rows.append(_stats_row(split.name, split.dialogues, n_labels))
    rows.append(_stats_row("all", everything, n_labels))
    return pd.DataFrame(rows).set_index("split")


def _stats_row(name: str, dialogues: Sequence[Dialogue], n_labels: Optional[int]) -> dict:
    utterances = [u for d in dialogues for u in d.utterances]
    labels = {a for d in dialogues if d.da_labels for a in d.da_labels}
    return {
        "split": name,
        "dialogues": len(dialogues),
        "utterances": len(utterances),
        "da_labels": n_labels if n_labels is not None else len(labels),
        "avg_utterances_per_dialogue": round(len(utterances) / len(dialogues), 4) if dialogues else 0.0,
        "avg_words_per_utterance": round(float(np.mean([len(u.split()) for u in utterances])), 4) if utterances else 0.0,
    }


def find_official_layout(raw_dir: str) -> Optional[Dict[str, Tuple[str, str]]]:
    """{split: (text_path, act_path)} when raw_dir holds train/validation/test subdirectories."""
    layout = {}
    for name in SPLIT_NAMES:
        text_path = os.path.join(raw_dir, name, f"dialogues_{name}.txt")
        act_path = os.path.join(raw_dir, name, f"dialogues_act_{name}.txt")
        if not (os.path.exists(text_path) and os.path.exists(act_path)):
            return None
        layout[name] = (text_path, act_path)
    return layout


class DailyDialogLoader:
    def __init__(self, raw_path: str, out_dir: str, act_path: Optional[str] = None, seed: int = 42,
                 labels: Optional[LabelSet] = None):
        """
        Initialize the corpus loader

        Args:
            raw_path: a DailyDialog directory with official splits, a dialogues text file
                      (with act_path), or a canonical .jsonl corpus
            out_dir: where canonical split files and statistics are written
            act_path: dialogue-act file accompanying a raw text file
            seed: shuffling seed for corpora without official splits
            labels: configured act inventory; otherwise DailyDialog's for raw files, and for a
                    canonical corpus a sibling labels.txt or generic names up to the largest label
        """
        self.raw_path = raw_path
        self.out_dir = out_dir
        self.act_path = act_path
        self.seed = seed
        self.labels = labels

    def load_splits(self) -> Tuple[CorpusSplit, CorpusSplit, CorpusSplit]:
        if not os.path.exists(self.raw_path):
            raise UsageError(f"Corpus path not found: {self.raw_path}")
        if os.path.isdir(self.raw_path):
            layout = find_official_layout(self.raw_path)
            if layout is None:
                raise UsageError(f"{self.raw_path} has no train/validation/test DailyDialog layout")
            logger.info(f"Using official splits under {self.raw_path}")
            return tuple(CorpusSplit(name, parse_dailydialog(*layout[name], id_prefix=f"dd-{name}", labels=self.labels))
                         for name in SPLIT_NAMES)
        if self.act_path:
            dialogues = parse_dailydialog(self.raw_path, self.act_path, labels=self.labels)
        else:
            dialogues = read_canonical(self.raw_path).dialogues
        logger.info(f"Splitting {len(dialogues)} dialogues 80/10/10 with seed {self.seed}")
        return split_corpus(dialogues, seed=self.seed)

    def load_and_process(self) -> Dict[str, str]:
        """Write canonical train/validation/test files and a statistics report; returns split -> path."""
        try:
            splits = self.load_splits()
            check_unique_ids(splits)
            label_set = self.resolve_labels(splits)
            os.makedirs(self.out_dir, exist_ok=True)
            if label_set is not None:
                label_set.save(os.path.join(self.out_dir, LABELS_FILE))
                logger.info(f"Dialogue-act inventory: {label_set.size} labels")
            paths = {}
            for split in splits:
                path = os.path.join(self.out_dir, f"{split.name}.jsonl")
                write_canonical(path, split)
                paths[split.name] = path
                logger.info(f"Wrote {len(split)} dialogues to {path}")
            self.create_data_summary(splits, label_set)
            return paths
        except Exception as e:
            logger.error(f"Error preparing corpus: {e}")
            raise

    def resolve_labels(self, splits: Sequence[CorpusSplit]) -> Optional[LabelSet]:
        everything = [d for split in splits for d in split.dialogues]
        if self.labels is not None:
            label_set = self.labels
        elif os.path.isdir(self.raw_path) or self.act_path is not None:
            label_set = LabelSet.dailydialog()
        else:
            sibling = os.path.join(os.path.dirname(os.path.abspath(self.raw_path)), LABELS_FILE)
            label_set = LabelSet.load(sibling) if os.path.exists(sibling) else LabelSet.infer(everything)
        if label_set is not None:
            label_set.check(everything)
        return label_set

    def create_data_summary(self, splits: Sequence[CorpusSplit], label_set: Optional[LabelSet] = None) -> pd.DataFrame:
        """Statistics of the prepared corpus, comparable to the usual corpus table"""
        stats = corpus_stats(splits, n_labels=label_set.size if label_set is not None else None)

        logger.info("Corpus Summary:")
        for name, row in stats.iterrows():
            logger.info(f"  {name}: {row.to_dict()}")

        with open(os.path.join(self.out_dir, "stats.json"), "w", encoding="utf-8") as f:
            json.dump(stats.reset_index().to_dict(orient="records"), f, indent=2)
        with open(os.path.join(self.out_dir, "stats.txt"), "w", encoding="utf-8") as f:
            f.write(stats.to_string() + "\n")
        return stats
