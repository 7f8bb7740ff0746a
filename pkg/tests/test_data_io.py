import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hcrm.data_io import (
    CorpusFormatError,
    CountMismatchError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    load_uci_bow,
    save_uci_bow,
    split_train_test,
    synth_corpus,
)
from hcrm.topic_model import perplexity_from_probs


def write(tmp_path, text, name="docword.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_minimal(tmp_path):
    c = load_uci_bow(write(tmp_path, "1\n2\n1\n1 2 3\n"))
    assert c.D == 1 and c.W == 2
    np.testing.assert_array_equal(c.docs[0], [1, 1, 1])


def test_load_with_vocab(tmp_path):
    v = write(tmp_path, "alpha\nbeta\n", "vocab.txt")
    c = load_uci_bow(write(tmp_path, "2\n2\n2\n1 1 1\n2 2 2\n"), v)
    assert c.words() == ("alpha", "beta")
    assert c.n_tokens == 3


@pytest.mark.parametrize("text,exc", [
    ("1\n2\n2\n1 1 1\n1 2 1\n2 1 1\n", CountMismatchError),
    ("1\n2\n1\n1 0 1\n", IndexOutOfRangeError),
    ("1\n2\n1\n2 1 1\n", IndexOutOfRangeError),
    ("1\n2\n1\n1 3 1\n", IndexOutOfRangeError),
    ("1\n2 3\n1\n1 1 1\n", MalformedHeaderError),
    ("one\n2\n1\n1 1 1\n", MalformedHeaderError),
    ("1\n2\n", MalformedHeaderError),
    ("1\n2\n1\n1 1\n", CorpusFormatError),
    ("1\n2\n1\n1 1 0\n", CorpusFormatError),
])
def test_load_errors(tmp_path, text, exc):
    with pytest.raises(exc):
        load_uci_bow(write(tmp_path, text))


def test_vocab_size_mismatch(tmp_path):
    v = write(tmp_path, "only\n", "vocab.txt")
    with pytest.raises(CorpusFormatError):
        load_uci_bow(write(tmp_path, "1\n2\n1\n1 2 1\n"), v)


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 9))
def test_round_trip(seed, D, W):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    lines = []
    for d in range(1, D + 1):
        for w in rng.choice(np.arange(1, W + 1), size=rng.integers(0, W + 1), replace=False):
            lines.append((d, int(w), int(rng.integers(1, 4))))
    text = f"{D}\n{W}\n{len(lines)}\n" + "".join(f"{d} {w} {c}\n" for d, w, c in lines)
    with tempfile.TemporaryDirectory() as tmp:
        c = load_uci_bow(write(Path(tmp), text))
        assert sorted(c.triples()) == sorted(lines)
        save_uci_bow(c, Path(tmp) / "out.txt")
        again = load_uci_bow(Path(tmp) / "out.txt")
        assert again.triples() == c.triples()


def test_split_extremes_and_fraction():
    c, _ = synth_corpus(2, 5, 10, 1000, seed=1)
    assert all(f.all() for f in split_train_test(c, 1.0, 0).flags())
    assert not any(f.any() for f in split_train_test(c, 0.0, 0).flags())
    s = split_train_test(c, 0.5, 3)
    frac = np.concatenate(s.flags()).mean()
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / 10_000)
    with pytest.raises(ValueError):
        split_train_test(c, 1.5, 0)


def test_split_deterministic_and_partitions():
    c, _ = synth_corpus(2, 5, 4, 30, seed=1)
    a, b = split_train_test(c, 0.4, 7), split_train_test(c, 0.4, 7)
    for x, y in zip(a.flags(), b.flags()):
        np.testing.assert_array_equal(x, y)
    ids, words = a.test_tokens()
    assert ids.size + a.train_words().size == c.n_tokens
    assert words.size == ids.size


def test_synth_deterministic_and_empty_docs():
    a, ta = synth_corpus(3, 10, 5, 8, seed=4)
    b, tb = synth_corpus(3, 10, 5, 8, seed=4)
    assert a.triples() == b.triples()
    np.testing.assert_array_equal(ta.tau, tb.tau)
    e, _ = synth_corpus(3, 10, 4, 0, seed=4)
    assert e.D == 4 and e.n_tokens == 0
    with pytest.raises(ValueError):
        synth_corpus(5, 3, 1, 1)


def test_synth_single_topic_truth_perplexity():
    c, truth = synth_corpus(1, 6, 200, 50, seed=5)
    words = np.concatenate(c.docs)
    p_true = truth.tau[0][words]
    # empirical perplexity under the true topic is close to exp(entropy)
    entropy = -float(truth.tau[0] @ np.log(truth.tau[0]))
    assert perplexity_from_probs(p_true) == pytest.approx(math.exp(entropy), rel=0.05)
    np.testing.assert_allclose(truth.predictive().sum(axis=1), 1.0)
