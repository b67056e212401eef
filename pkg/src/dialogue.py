"""Dialogue records shared by corpus IO, perturbations and training."""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from config.config import DAILYDIALOG_LABELS
from utils.custom_exception import DataError


@dataclass
class PerturbationSpec:
    """
    Seeded description of one transformation of a source dialogue.

    detail by kind:
        uo:  {"permutation": [...]}               new position k holds original utterance permutation[k]
        ui:  {"removed_index": i, "reinsert_index": j}
        ur:  {"replaced_index": i, "donor_dialogue_id": id, "donor_utterance_index": k}
        euo: {"speaker": s, "permutation": [...]} permutation of that speaker's positions
    """
    kind: str
    source_dialogue_id: str
    seed: int
    detail: Dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "source_dialogue_id": self.source_dialogue_id,
                "seed": self.seed, "detail": self.detail}

    @classmethod
    def from_dict(cls, record: dict) -> "PerturbationSpec":
        return cls(kind=record["kind"], source_dialogue_id=record["source_dialogue_id"],
                   seed=int(record["seed"]), detail=dict(record["detail"]))


@dataclass
class Dialogue:
    id: str
    utterances: List[str]
    speakers: List[int]
    da_labels: Optional[List[int]] = None
    perturbation: Optional[PerturbationSpec] = None

    def __post_init__(self):
        if len(self.utterances) == 0:
            raise DataError(f"Dialogue '{self.id}' has no utterances")
        if len(self.speakers) != len(self.utterances):
            raise DataError(f"Dialogue '{self.id}': {len(self.speakers)} speakers for {len(self.utterances)} utterances")
        if self.da_labels is not None and len(self.da_labels) != len(self.utterances):
            raise DataError(f"Dialogue '{self.id}': {len(self.da_labels)} DA labels for {len(self.utterances)} utterances")

    def __len__(self):
        return len(self.utterances)

    @property
    def is_original(self) -> bool:
        return self.perturbation is None

    @property
    def text_key(self) -> Tuple[str, ...]:
        return tuple(self.utterances)

    def to_dict(self) -> dict:
        record = {"id": self.id, "utterances": list(self.utterances), "speakers": list(self.speakers)}
        if self.da_labels is not None:
            record["da_labels"] = list(self.da_labels)
        if self.perturbation is not None:
            record["perturbation"] = self.perturbation.to_dict()
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "Dialogue":
        labels = record.get("da_labels")
        spec = record.get("perturbation")
        return cls(
            id=str(record["id"]),
            utterances=[str(u) for u in record["utterances"]],
            speakers=[int(s) for s in record["speakers"]],
            da_labels=None if labels is None else [int(a) for a in labels],
            perturbation=None if spec is None else PerturbationSpec.from_dict(spec),
        )


@dataclass
class DialoguePair:
    """(dial_a, dial_b) with label 0 when dial_a is the preferred (original) dialogue."""
    pair_id: str
    dial_a: Dialogue
    dial_b: Dialogue
    label: int
    problem_domain: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"Pair '{self.pair_id}': label must be 0 or 1, got {self.label}")

    @property
    def preferred(self) -> Dialogue:
        return self.dial_a if self.label == 0 else self.dial_b

    def to_dict(self) -> dict:
        return {"pair_id": self.pair_id, "problem_domain": self.problem_domain, "label": self.label,
                "dial_a": self.dial_a.to_dict(), "dial_b": self.dial_b.to_dict()}

    @classmethod
    def from_dict(cls, record: dict) -> "DialoguePair":
        return cls(pair_id=str(record["pair_id"]), dial_a=Dialogue.from_dict(record["dial_a"]),
                   dial_b=Dialogue.from_dict(record["dial_b"]), label=int(record["label"]),
                   problem_domain=str(record["problem_domain"]))


@dataclass
class LabelSet:
    """Dialogue-act inventory; label k of a dialogue names `names[k]`."""
    names: Tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.names)

    @classmethod
    def dailydialog(cls) -> "LabelSet":
        return cls(tuple(DAILYDIALOG_LABELS))

    @classmethod
    def parse(cls, text: str) -> "LabelSet":
        """Comma-separated names, as in the `da_labels` setting."""
        return cls(tuple(n.strip() for n in text.split(",")))

    @classmethod
    def infer(cls, dialogues: Iterable[Dialogue]) -> Optional["LabelSet"]:
        """Generic names da0..daK for the largest label seen; None when no dialogue is labeled."""
        top = max((a for d in dialogues if d.da_labels for a in d.da_labels), default=None)
        if top is None:
            return None
        return cls(tuple(f"da{k}" for k in range(top + 1)))

    def check(self, dialogues: Iterable[Dialogue]) -> None:
        for d in dialogues:
            for position, a in enumerate(d.da_labels or ()):
                if not 0 <= a < self.size:
                    raise DataError(f"Dialogue '{d.id}': DA label {a} at utterance {position} "
                                    f"is outside the {self.size}-label set")

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(self.names) + "\n")

    @classmethod
    def load(cls, path: str) -> "LabelSet":
        with open(path, "r", encoding="utf-8") as f:
            names = tuple(line.strip() for line in f if line.strip())
        if not names:
            raise DataError(f"Label file {path} is empty")
        return cls(names)


@dataclass
class CorpusSplit:
    name: str
    dialogues: List[Dialogue] = field(default_factory=list)

    def __len__(self):
        return len(self.dialogues)


def unique_dialogues(pairs: Sequence[DialoguePair]) -> List[Dialogue]:
    """Dialogues referenced by `pairs`, first occurrence order, deduplicated by id and utterance sequence."""
    seen = {}
    for pair in pairs:
        for dial in (pair.dial_a, pair.dial_b):
            seen.setdefault((dial.id, dial.text_key), dial)
    return list(seen.values())
