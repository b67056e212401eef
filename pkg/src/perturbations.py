"""
Problem-domain perturbations (UO, UI, UR, EUO) and the pair-dataset builder.

Every generator returns a PerturbationSpec; apply_perturbation turns a spec
into the perturbed Dialogue. DA labels and speaker tags move with their
utterances, except that a UR replacement keeps the slot's speaker and takes the
donor utterance's DA label; an unlabeled donor leaves the result unlabeled.
"""
import hashlib
import itertools
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.config import PROBLEM_DOMAINS
from src.dialogue import Dialogue, DialoguePair, PerturbationSpec
from utils.custom_exception import NotPerturbable, PreconditionError, UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

MAX_ATTEMPTS = 100
ENUMERATION_LIMIT = 5000


def dialogue_seed(seed: int, dialogue_id: str) -> int:
    """Per-dialogue seed derived from (global seed, dialogue id), stable across processes."""
    digest = hashlib.sha256(f"{seed}:{dialogue_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _reorder(dial: Dialogue, order: Sequence[int], spec: PerturbationSpec) -> Dialogue:
    return Dialogue(
        id=f"{dial.id}#{spec.kind}",
        utterances=[dial.utterances[k] for k in order],
        speakers=[dial.speakers[k] for k in order],
        da_labels=None if dial.da_labels is None else [dial.da_labels[k] for k in order],
        perturbation=spec,
    )


def _ui_order(m: int, removed: int, reinsert: int) -> List[int]:
    order = [k for k in range(m) if k != removed]
    order.insert(reinsert, removed)
    return order


def _euo_order(dial: Dialogue, speaker: int, permutation: Sequence[int]) -> List[int]:
    positions = [k for k, s in enumerate(dial.speakers) if s == speaker]
    order = list(range(len(dial)))
    for slot, source in zip(positions, permutation):
        order[slot] = positions[source]
    return order


def apply_perturbation(dial: Dialogue, spec: PerturbationSpec, corpus: Optional[Mapping[str, Dialogue]] = None,
                       suffix: str = "") -> Dialogue:
    """Materialize `spec` on its source dialogue. UR needs `corpus` to look up the donor."""
    detail = spec.detail
    if spec.kind == "uo":
        result = _reorder(dial, detail["permutation"], spec)
    elif spec.kind == "ui":
        result = _reorder(dial, _ui_order(len(dial), detail["removed_index"], detail["reinsert_index"]), spec)
    elif spec.kind == "euo":
        result = _reorder(dial, _euo_order(dial, detail["speaker"], detail["permutation"]), spec)
    elif spec.kind == "ur":
        if corpus is None or detail["donor_dialogue_id"] not in corpus:
            raise PreconditionError(f"UR donor dialogue '{detail['donor_dialogue_id']}' is not available")
        donor = corpus[detail["donor_dialogue_id"]]
        i, k = detail["replaced_index"], detail["donor_utterance_index"]
        utterances = list(dial.utterances)
        utterances[i] = donor.utterances[k]
        labels = None
        # an unlabeled donor utterance leaves the whole perturbed dialogue unlabeled
        if dial.da_labels is not None and donor.da_labels is not None:
            labels = list(dial.da_labels)
            labels[i] = donor.da_labels[k]
        result = Dialogue(id=f"{dial.id}#ur", utterances=utterances, speakers=list(dial.speakers),
                          da_labels=labels, perturbation=spec)
    else:
        raise UsageError(f"Unknown problem domain '{spec.kind}', expected one of {list(PROBLEM_DOMAINS)}")
    if suffix:
        result.id = f"{result.id}{suffix}"
    return result


def _differs(dial: Dialogue, order: Sequence[int]) -> bool:
    return any(dial.utterances[k] != dial.utterances[pos] for pos, k in enumerate(order))


def perturb_uo(dial: Dialogue, rng: np.random.Generator, seed: int = 0) -> PerturbationSpec:
    """Uniformly random non-identity permutation of all utterance positions."""
    m = len(dial)
    if m < 2:
        raise NotPerturbable(f"UO needs at least 2 utterances, dialogue '{dial.id}' has {m}")
    for _ in range(MAX_ATTEMPTS):
        order = [int(k) for k in rng.permutation(m)]
        if _differs(dial, order):
            return PerturbationSpec("uo", dial.id, seed, {"permutation": order})
    raise NotPerturbable(f"UO found no reordering of dialogue '{dial.id}' that changes its text")


def ui_candidates(m: int) -> List[Tuple[int, int]]:
    """Every (removed_index, reinsert_index) pair with reinsert != removed."""
    return [(i, j) for i in range(m) for j in range(m) if i != j]


def perturb_ui(dial: Dialogue, rng: np.random.Generator, seed: int = 0) -> PerturbationSpec:
    """Remove one utterance and re-insert it at a different position."""
    m = len(dial)
    if m < 2:
        raise NotPerturbable(f"UI needs at least 2 utterances, dialogue '{dial.id}' has {m}")
    for _ in range(MAX_ATTEMPTS):
        i = int(rng.integers(m))
        j = int(rng.integers(m - 1))
        if j >= i:
            j += 1
        if _differs(dial, _ui_order(m, i, j)):
            return PerturbationSpec("ui", dial.id, seed, {"removed_index": i, "reinsert_index": j})
    raise NotPerturbable(f"UI found no re-insertion of dialogue '{dial.id}' that changes its text")


def perturb_ur(dial: Dialogue, corpus: Sequence[Dialogue], rng: np.random.Generator, seed: int = 0) -> PerturbationSpec:
    """Replace one utterance with a random utterance of another dialogue."""
    if len(corpus) < 2:
        raise PreconditionError("UR needs a corpus of at least 2 dialogues")
    donors = [d for d in corpus if d.id != dial.id]
    if not donors:
        raise PreconditionError(f"UR: no dialogue other than '{dial.id}' in the corpus")
    m = len(dial)
    for _ in range(MAX_ATTEMPTS):
        i = int(rng.integers(m))
        donor = donors[int(rng.integers(len(donors)))]
        k = int(rng.integers(len(donor)))
        if donor.utterances[k] != dial.utterances[i]:
            return PerturbationSpec("ur", dial.id, seed, {
                "replaced_index": i, "donor_dialogue_id": donor.id, "donor_utterance_index": k})
    raise NotPerturbable(f"UR found no donor utterance differing from dialogue '{dial.id}'")


def _eligible_speakers(dial: Dialogue) -> List[int]:
    counts: Dict[int, int] = {}
    for s in dial.speakers:
        counts[s] = counts.get(s, 0) + 1
    return sorted(s for s, c in counts.items() if c >= 2)


def perturb_euo(dial: Dialogue, rng: np.random.Generator, seed: int = 0) -> PerturbationSpec:
    """Permute the utterances of one speaker, keeping every other position fixed."""
    speakers = _eligible_speakers(dial)
    if not speakers:
        raise NotPerturbable(f"EUO: no speaker of dialogue '{dial.id}' has 2 or more utterances")
    for _ in range(MAX_ATTEMPTS):
        speaker = speakers[int(rng.integers(len(speakers)))]
        count = dial.speakers.count(speaker)
        permutation = [int(k) for k in rng.permutation(count)]
        if _differs(dial, _euo_order(dial, speaker, permutation)):
            return PerturbationSpec("euo", dial.id, seed, {"speaker": speaker, "permutation": permutation})
    raise NotPerturbable(f"EUO found no reordering of dialogue '{dial.id}' that changes its text")


def _enumerate_space(dial: Dialogue, kind: str, seed: int) -> Optional[List[PerturbationSpec]]:
    """All specs of a small structural space, or None when the space is too large to list."""
    m = len(dial)
    specs: List[PerturbationSpec] = []
    if kind == "uo":
        if m < 2 or math.factorial(m) > ENUMERATION_LIMIT:
            return None if m >= 2 else []
        for order in itertools.permutations(range(m)):
            if _differs(dial, order):
                specs.append(PerturbationSpec("uo", dial.id, seed, {"permutation": list(order)}))
    elif kind == "ui":
        if m * (m - 1) > ENUMERATION_LIMIT:
            return None
        for i, j in ui_candidates(m):
            if _differs(dial, _ui_order(m, i, j)):
                specs.append(PerturbationSpec("ui", dial.id, seed, {"removed_index": i, "reinsert_index": j}))
    elif kind == "euo":
        speakers = _eligible_speakers(dial)
        if any(math.factorial(dial.speakers.count(s)) > ENUMERATION_LIMIT for s in speakers):
            return None
        for s in speakers:
            for perm in itertools.permutations(range(dial.speakers.count(s))):
                if _differs(dial, _euo_order(dial, s, perm)):
                    specs.append(PerturbationSpec("euo", dial.id, seed, {"speaker": s, "permutation": list(perm)}))
    else:
        return None
    return specs


def _perturb_once(dial: Dialogue, kind: str, corpus: Sequence[Dialogue], rng: np.random.Generator, seed: int) -> PerturbationSpec:
    if kind == "uo":
        return perturb_uo(dial, rng, seed)
    if kind == "ui":
        return perturb_ui(dial, rng, seed)
    if kind == "ur":
        return perturb_ur(dial, corpus, rng, seed)
    if kind == "euo":
        return perturb_euo(dial, rng, seed)
    raise UsageError(f"Unknown problem domain '{kind}', expected one of {list(PROBLEM_DOMAINS)}")


def sample_perturbations(dial: Dialogue, kind: str, corpus: Sequence[Dialogue], per_dialogue: int,
                         seed: int) -> List[Dialogue]:
    """
    Up to `per_dialogue` perturbed dialogues with pairwise distinct utterance sequences.
    Small spaces are enumerated: the whole space when it holds no more than
    `per_dialogue` distinct results, else a uniform sample of distinct results.
    """
    local_seed = dialogue_seed(seed, dial.id)
    rng = np.random.default_rng(local_seed)
    lookup = {d.id: d for d in corpus}
    lookup[dial.id] = dial

    enumerated = _enumerate_space(dial, kind, local_seed)
    if enumerated is not None:
        distinct: Dict[Tuple[str, ...], PerturbationSpec] = {}
        for spec in enumerated:
            distinct.setdefault(apply_perturbation(dial, spec).text_key, spec)
        if not distinct:
            raise NotPerturbable(f"{kind.upper()}: dialogue '{dial.id}' admits no perturbation")
        chosen = list(distinct.values())
        if len(chosen) > per_dialogue:
            picks = rng.choice(len(chosen), size=per_dialogue, replace=False)
            chosen = [chosen[int(k)] for k in picks]
        return [apply_perturbation(dial, spec, lookup, suffix=str(n)) for n, spec in enumerate(chosen)]

    results: List[Dialogue] = []
    seen = {dial.text_key}
    for _ in range(per_dialogue * MAX_ATTEMPTS):
        if len(results) == per_dialogue:
            break
        try:
            spec = _perturb_once(dial, kind, corpus, rng, local_seed)
        except NotPerturbable:
            if results:
                break
            raise
        perturbed = apply_perturbation(dial, spec, lookup, suffix=str(len(results)))
        if perturbed.text_key in seen:
            continue
        seen.add(perturbed.text_key)
        results.append(perturbed)
    return results


class PairDatasetReport:
    """Counts gathered while building one split's pair dataset."""

    def __init__(self, kind: str):
        self.kind = kind
        self.dialogues = 0
        self.perturbed = 0
        self.skipped: List[str] = []
        self.pairs = 0

    def to_dict(self) -> dict:
        return {"problem_domain": self.kind, "dialogues": self.dialogues, "perturbed_dialogues": self.perturbed,
                "skipped": len(self.skipped), "skipped_ids": list(self.skipped), "pairs": self.pairs}


def build_pair_dataset(corpus_split: Sequence[Dialogue], kind: str, per_dialogue: int = 20, seed: int = 0,
                       report: Optional[PairDatasetReport] = None,
                       donors: Optional[Sequence[Dialogue]] = None) -> List[DialoguePair]:
    """
    Two pairs per perturbation: (original, perturbed, 0) and (perturbed, original, 1).
    Dialogues that admit no perturbation are skipped and counted in `report`.
    UR donors come from `donors`, by default the split itself.
    """
    if kind not in PROBLEM_DOMAINS:
        raise UsageError(f"Unknown problem domain '{kind}', expected one of {list(PROBLEM_DOMAINS)}")
    if len(corpus_split) == 0:
        raise PreconditionError("build_pair_dataset: empty corpus split")
    donors = corpus_split if donors is None else donors
    if kind == "ur" and len(donors) < 2:
        raise PreconditionError("UR needs a corpus of at least 2 dialogues")
    report = report or PairDatasetReport(kind)
    pairs: List[DialoguePair] = []
    for dial in corpus_split:
        report.dialogues += 1
        try:
            perturbed = sample_perturbations(dial, kind, donors, per_dialogue, seed)
        except NotPerturbable as e:
            perturbed = []
            logger.info(str(e))
        if not perturbed:
            report.skipped.append(dial.id)
            continue
        report.perturbed += 1
        for n, pert in enumerate(perturbed):
            pairs.append(DialoguePair(f"{dial.id}:{kind}:{n}:0", dial, pert, 0, kind))
            pairs.append(DialoguePair(f"{dial.id}:{kind}:{n}:1", pert, dial, 1, kind))
    report.pairs = len(pairs)
    if report.skipped:
        logger.warning(f"{kind.upper()}: skipped {len(report.skipped)} of {report.dialogues} dialogues")
    logger.info(f"{kind.upper()}: built {len(pairs)} pairs from {report.perturbed} dialogues")
    return pairs
