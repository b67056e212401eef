import numpy as np
import pytest

from src.embeddings import (PAD_INDEX, UNK_INDEX, EmbeddingMatrix, Vocabulary, decode_utterance, encode_text,
                            encode_utterance, load_pretrained, read_vectors, tokenize)
from utils.custom_exception import ConfigurationError, ParseError, UsageError


def test_tokenize_peels_punctuation():
    assert tokenize("This is my uncle, Charles.") == ["this", "is", "my", "uncle", ",", "charles", "."]
    assert tokenize('He said "Exactly!"') == ["he", "said", '"', "exactly", "!", '"']


def test_tokenize_keeps_inner_apostrophes():
    assert tokenize("He's a captain.") == ["he's", "a", "captain", "."]


def test_tokenize_empty_utterance_gives_unk():
    assert tokenize("   ") == ["<UNK>"]


def test_vocabulary_reserved_indices_and_order():
    vocab = Vocabulary.build(["b a a", "c b a"])
    assert vocab.itos[:2] == ["<PAD>", "<UNK>"]
    assert vocab.itos[2:] == ["a", "b", "c"]
    assert vocab.index("zzz") == UNK_INDEX


def test_vocabulary_save_load_keeps_fingerprint(tmp_path):
    vocab = Vocabulary.build(["hello there", "general kenobi"])
    path = tmp_path / "vocab.txt"
    vocab.save(str(path))
    loaded = Vocabulary.load(str(path))
    assert loaded.itos == vocab.itos
    assert loaded.fingerprint() == vocab.fingerprint()
    assert Vocabulary.build(["other words"]).fingerprint() != vocab.fingerprint()


def test_encode_pads_and_masks():
    vocab = Vocabulary.build(["a b c"])
    enc = encode_utterance(["a", "b", "zzz"], vocab, n_max=5)
    assert enc.length == 3
    assert enc.indices.tolist() == [vocab.index("a"), vocab.index("b"), UNK_INDEX, PAD_INDEX, PAD_INDEX]
    assert enc.mask.tolist() == [True, True, True, False, False]


def test_encode_truncates_to_n_max():
    vocab = Vocabulary.build(["a b c d e"])
    enc = encode_text("a b c d e", vocab, n_max=3)
    assert enc.length == 3
    assert decode_utterance(enc, vocab) == ["a", "b", "c"]


def test_encode_rejects_bad_n_max():
    with pytest.raises(ConfigurationError):
        encode_utterance(["a"], Vocabulary.build(["a"]), n_max=0)


def _write_vectors(path, rows):
    path.write_text("\n".join(" ".join([token] + [str(v) for v in values]) for token, values in rows) + "\n",
                    encoding="utf-8")
    return str(path)


def test_load_pretrained_copies_known_rows_and_zeros_pad(tmp_path):
    vocab = Vocabulary.build(["hello world", "hello again"])
    path = _write_vectors(tmp_path / "vectors.txt", [("hello", [1.0, 2.0, 3.0]), ("world", [4.0, 5.0, 6.0])])
    matrix = load_pretrained(path, vocab, np.random.default_rng(0), expected_dim=3, oov_scale=0.05)
    np.testing.assert_array_equal(matrix.values[vocab.index("hello")], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(matrix.values[PAD_INDEX], np.zeros(3))
    assert np.all(np.abs(matrix.values[vocab.index("again")]) <= 0.05)
    assert matrix.coverage == pytest.approx(2 / 3)


def test_read_vectors_dimension_mismatch(tmp_path):
    path = _write_vectors(tmp_path / "vectors.txt", [("hello", [1.0, 2.0])])
    with pytest.raises(ConfigurationError):
        read_vectors(path, expected_dim=3)


def test_read_vectors_bad_line_reports_line_number(tmp_path):
    path = _write_vectors(tmp_path / "vectors.txt", [("a", [1.0, 2.0]), ("b", [1.0, 2.0]), ("c", [1.0])])
    with pytest.raises(ParseError) as info:
        read_vectors(path, expected_dim=2)
    assert info.value.line == 3


def test_read_vectors_missing_file(tmp_path):
    with pytest.raises(UsageError):
        read_vectors(str(tmp_path / "missing.txt"), expected_dim=3)


def test_random_embedding_matrix():
    vocab = Vocabulary.build(["a b"])
    matrix = EmbeddingMatrix.random(vocab, 4, np.random.default_rng(0), scale=0.1, trainable=False)
    assert matrix.values.shape == (len(vocab), 4)
    assert not matrix.trainable
    np.testing.assert_array_equal(matrix.values[PAD_INDEX], np.zeros(4))


@pytest.mark.parametrize("first_line", ["hello", "hello 1.0 two 3.0", "hello 1.0 2.0 3.0 x"])
def test_read_vectors_malformed_first_line_is_a_parse_error(tmp_path, first_line):
    path = tmp_path / "vectors.txt"
    path.write_text(first_line + "\nworld 4.0 5.0 6.0\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_vectors(str(path), expected_dim=3)
    assert info.value.line == 1
