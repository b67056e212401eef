"""
Tokenization, vocabulary construction, pretrained vectors and padding/masking.
"""
import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config.config import EMBEDDING_DIM, PAD_TOKEN, UNK_TOKEN
from utils.custom_exception import ConfigurationError, ParseError, UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

PUNCTUATION = ".,!?';:\"()"
_LEADING = re.compile(r"^[" + re.escape(PUNCTUATION) + r"]")
_TRAILING = re.compile(r"[" + re.escape(PUNCTUATION) + r"]$")

PAD_INDEX = 0
UNK_INDEX = 1


def tokenize(text: str) -> List[str]:
    """
    Lowercase, split on whitespace, then peel leading and trailing punctuation
    characters off each chunk as separate tokens.
    """
    tokens: List[str] = []
    for chunk in text.lower().split():
        leading: List[str] = []
        trailing: List[str] = []
        while chunk and _LEADING.match(chunk):
            leading.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _TRAILING.search(chunk):
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(leading)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens or [UNK_TOKEN]


class Vocabulary:
    """Token <-> index bijection with PAD at 0 and UNK at 1."""

    def __init__(self, tokens: Sequence[str]):
        self.itos: List[str] = [PAD_TOKEN, UNK_TOKEN]
        for token in tokens:
            if token in (PAD_TOKEN, UNK_TOKEN):
                continue
            self.itos.append(token)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ConfigurationError("Vocabulary tokens must be unique")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK_INDEX)

    @property
    def pad_index(self) -> int:
        return PAD_INDEX

    @property
    def unk_index(self) -> int:
        return UNK_INDEX

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        """Every token of `texts`, ordered by frequency (desc) then lexicographically."""
        counts = Counter()
        for text in texts:
            counts.update(tokenize(text))
        ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        vocab = cls([token for token, _ in ordered])
        logger.info(f"Built vocabulary of {len(vocab)} entries from {sum(counts.values())} tokens")
        return vocab

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for token in self.itos:
                f.write(token + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ParseError("vocabulary file must start with PAD and UNK", path, 1)
        return cls(tokens[2:])


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    trainable: bool = True
    coverage: float = 0.0

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def random(cls, vocab: Vocabulary, dim: int, rng: np.random.Generator, scale: float = 0.05,
               trainable: bool = True) -> "EmbeddingMatrix":
        values = rng.uniform(-scale, scale, (len(vocab), dim))
        values[PAD_INDEX] = 0.0
        return cls(values=values, trainable=trainable, coverage=0.0)


def read_vectors(path: str, expected_dim: int = EMBEDDING_DIM, wanted: Optional[set] = None) -> Dict[str, np.ndarray]:
    """
    Read a whitespace-separated text vector file: a token followed by `expected_dim` floats per line.

    Args:
        wanted: when given, only these tokens are kept
    """
    vectors: Dict[str, np.ndarray] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except FileNotFoundError as e:
        raise UsageError(f"Embeddings file not found: {path}", e)
    first = True
    with f:
        for line_number, line in enumerate(f, start=1):
            parts = line.rstrip().split(" ")
            if not parts[0]:
                continue
            if first:
                # the first line fixes the file's width, so it must be well formed itself
                if len(parts) < 2:
                    raise ParseError("expected a token followed by floats", path, line_number)
                try:
                    np.asarray(parts[1:], dtype=np.float64)
                except ValueError:
                    raise ParseError("non-numeric vector entry", path, line_number)
                if len(parts) - 1 != expected_dim:
                    raise ConfigurationError(
                        f"{path}: vectors have dimension {len(parts) - 1}, expected {expected_dim}"
                    )
                first = False
            if len(parts) - 1 != expected_dim:
                raise ParseError(f"expected {expected_dim} floats, found {len(parts) - 1}", path, line_number)
            token = parts[0]
            if wanted is not None and token not in wanted:
                continue
            try:
                vectors[token] = np.asarray(parts[1:], dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric vector entry", path, line_number)
    return vectors


def load_pretrained(path: str, vocab: Vocabulary, rng: np.random.Generator, expected_dim: int = EMBEDDING_DIM,
                    oov_scale: float = 0.05, trainable: bool = True) -> EmbeddingMatrix:
    """
    Build the embedding matrix for `vocab` from a pretrained vector file.

    Rows for tokens present in the file are copied; the rest are drawn from
    U(-oov_scale, oov_scale); the PAD row is zero.
    """
    vectors = read_vectors(path, expected_dim, wanted=set(vocab.itos))
    matrix = EmbeddingMatrix.random(vocab, expected_dim, rng, scale=oov_scale, trainable=trainable)
    hits = 0
    for index, token in enumerate(vocab.itos):
        if index == PAD_INDEX or token not in vectors:
            continue
        matrix.values[index] = vectors[token]
        if index != UNK_INDEX:
            hits += 1
    matrix.values[PAD_INDEX] = 0.0
    corpus_tokens = len(vocab) - 2
    matrix.coverage = hits / corpus_tokens if corpus_tokens else 0.0
    logger.info(f"Loaded pretrained vectors from {path}: coverage {matrix.coverage:.4f} ({hits}/{corpus_tokens})")
    return matrix


@dataclass
class EncodedUtterance:
    indices: np.ndarray
    mask: np.ndarray
    length: int


def encode_utterance(tokens: Sequence[str], vocab: Vocabulary, n_max: int) -> EncodedUtterance:
    """Map tokens to indices (UNK for unknown), truncate to n_max and pad with PAD."""
    if n_max < 1:
        raise ConfigurationError(f"n_max must be at least 1, got {n_max}")
    kept = list(tokens)[:n_max]
    indices = np.full(n_max, PAD_INDEX, dtype=np.int64)
    indices[:len(kept)] = [vocab.index(t) for t in kept]
    mask = np.zeros(n_max, dtype=bool)
    mask[:len(kept)] = True
    return EncodedUtterance(indices=indices, mask=mask, length=len(kept))


def decode_utterance(encoded: EncodedUtterance, vocab: Vocabulary) -> List[str]:
    return [vocab.itos[i] for i in encoded.indices[:encoded.length]]


def encode_text(text: str, vocab: Vocabulary, n_max: int) -> EncodedUtterance:
    return encode_utterance(tokenize(text), vocab, n_max)
